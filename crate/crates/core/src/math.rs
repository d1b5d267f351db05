//! Small numerical helpers shared by the objectives.

/// `log(sum(exp(xs)))` with max-subtraction. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalized `exp(logits)` together with the log normalizer.
pub fn softmax_with_log_z(logits: &[f64]) -> (Vec<f64>, f64) {
    let log_z = log_sum_exp(logits);
    let probs = logits.iter().map(|&x| (x - log_z).exp()).collect();
    (probs, log_z)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_naive_on_small_inputs() {
        let xs = [0.5, 2.0, -1.0];
        let naive = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_large_magnitudes() {
        // log(e^1234 + e^1232) = 1232 + log(e^2 + 1)
        let v = log_sum_exp(&[1234.0, 1232.0]);
        assert!((v - (1232.0 + (2f64.exp() + 1.0).ln())).abs() < 1e-12);
        let v = log_sum_exp(&[-1000.0, -1001.0]);
        assert!(v.is_finite());
    }

    #[test]
    fn log_sum_exp_degenerate() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 3.0]), 3.0);
    }

    #[test]
    fn softmax_sums_to_one() {
        let (p, _) = softmax_with_log_z(&[1e3, -1e3, 0.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| x.is_finite()));
    }
}
