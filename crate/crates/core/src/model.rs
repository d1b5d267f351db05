//! Linear document scoring and the position-weighted permutation energy
//!
//! ```text
//! s_i  = theta . phi_i
//! E(y) = -sum_i alpha[y_i] * s_i,   alpha[k] = ln 2 / ln(k + 1)
//! ```
//!
//! Because `alpha` is strictly decreasing, the minimum-energy permutation
//! ranks documents by descending score.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::letor::QueryGroup;
use crate::math::dot;
use crate::rank_space::{discount, Permutation};

const CHECKPOINT_MAGIC: &str = "crf-rank-theta v1";

/// Linear scoring weights, one per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    theta: Vec<f64>,
}

impl ParamVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::contract("parameter vector has non-finite entries"));
        }
        Ok(ParamVector { theta })
    }

    pub fn zeros(d: usize) -> Self {
        ParamVector {
            theta: vec![0.0; d],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.theta
    }

    /// `theta <- theta - step * direction`.
    pub(crate) fn step(&mut self, step: f64, direction: &[f64]) {
        for (t, g) in self.theta.iter_mut().zip(direction) {
            *t -= step * g;
        }
    }

    /// Checkpoint text: a header line then one value per line.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = format!("{CHECKPOINT_MAGIC} d={}\n", self.theta.len());
        for t in &self.theta {
            let _ = writeln!(out, "{t:?}");
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty checkpoint".into(),
        })?;
        let d: usize = header
            .trim()
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("d="))
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("expected `{CHECKPOINT_MAGIC} d=<d>`, found {header:?}"),
            })?;
        let mut theta = Vec::with_capacity(d);
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("invalid parameter value {line:?}"),
            })?;
            theta.push(v);
        }
        if theta.len() != d {
            return Err(Error::Dimension(format!(
                "checkpoint header declares d={d} but holds {} values",
                theta.len()
            )));
        }
        ParamVector::new(theta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ParamVector::from_checkpoint_str(&text)
    }
}

/// NDCG-style position discounts `alpha[k-1] = ln 2 / ln(k + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionWeights {
    alpha: Vec<f64>,
}

impl PositionWeights {
    /// Weight of 1-based rank position `pos`.
    #[inline]
    pub fn at(&self, pos: usize) -> f64 {
        self.alpha[pos - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

pub fn position_weights(m: usize) -> PositionWeights {
    PositionWeights {
        alpha: (1..=m).map(discount).collect(),
    }
}

pub fn score(theta: &ParamVector, group: &QueryGroup) -> Result<Vec<f64>> {
    if theta.dim() != group.feature_dim() {
        return Err(Error::Dimension(format!(
            "parameter vector has {} entries, query {} has {} features",
            theta.dim(),
            group.query_id(),
            group.feature_dim()
        )));
    }
    Ok(group
        .features()
        .iter()
        .map(|phi| dot(theta.as_slice(), phi))
        .collect())
}

fn check_perm(y: &Permutation, m: usize, alpha: &PositionWeights) -> Result<()> {
    if y.len() != m || alpha.len() < m {
        return Err(Error::contract(format!(
            "permutation of {} documents against {m} scores and {} position weights",
            y.len(),
            alpha.len()
        )));
    }
    Ok(())
}

/// `E(y) = -sum_i alpha[y_i] * s_i`.
pub fn energy(y: &Permutation, scores: &[f64], alpha: &PositionWeights) -> Result<f64> {
    check_perm(y, scores.len(), alpha)?;
    Ok(-y
        .ranks()
        .iter()
        .zip(scores)
        .map(|(&pos, &s)| alpha.at(pos) * s)
        .sum::<f64>())
}

/// `dE/dtheta = -sum_i alpha[y_i] * phi_i`.
pub fn energy_grad_theta(
    y: &Permutation,
    group: &QueryGroup,
    alpha: &PositionWeights,
) -> Result<Vec<f64>> {
    check_perm(y, group.len(), alpha)?;
    let mut grad = vec![0.0; group.feature_dim()];
    for (&pos, phi) in y.ranks().iter().zip(group.features()) {
        let w = alpha.at(pos);
        for (g, &f) in grad.iter_mut().zip(phi) {
            *g -= w * f;
        }
    }
    Ok(grad)
}

/// Descending-score ranking; equal scores keep ascending document order.
pub fn predict(scores: &[f64]) -> Permutation {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Permutation::from_ordering(&order).expect("sorted indices form an ordering")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(rows: Vec<Vec<f64>>) -> QueryGroup {
        let m = rows.len();
        QueryGroup::new("q", rows, vec![0; m]).unwrap()
    }

    #[test]
    fn score_examples() {
        let g = group(vec![vec![2.0, 5.0], vec![3.0, 7.0]]);
        assert_eq!(score(&ParamVector::zeros(2), &g).unwrap(), vec![0.0, 0.0]);
        let t = ParamVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(score(&t, &g).unwrap(), vec![2.0, 3.0]);
        let t = ParamVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(score(&t, &group(vec![vec![1.0, 1.0]])).unwrap(), vec![2.0]);
        assert!(score(&ParamVector::zeros(3), &g).is_err());
    }

    #[test]
    fn position_weight_values() {
        let a = position_weights(3);
        let want = [1.0, 0.63093, 0.5];
        for (x, w) in a.as_slice().iter().zip(want) {
            assert!((x - w).abs() < 1e-5);
        }
        assert_eq!(position_weights(1).as_slice(), &[1.0]);
        let a = position_weights(40);
        assert!(a.as_slice().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn energy_examples() {
        let a = position_weights(2);
        let id = Permutation::new(vec![1, 2]).unwrap();
        let sw = Permutation::new(vec![2, 1]).unwrap();
        assert_eq!(energy(&id, &[1.0, 0.0], &a).unwrap(), -1.0);
        let e = energy(&sw, &[1.0, 0.0], &a).unwrap();
        assert!((e + 0.63093).abs() < 1e-5);
        assert_eq!(energy(&sw, &[0.0, 0.0], &a).unwrap(), 0.0);
        let a1 = position_weights(1);
        assert_eq!(
            energy(&Permutation::identity(1), &[2.5], &a1).unwrap(),
            -2.5
        );
        assert!(energy(&id, &[1.0], &a).is_err());
    }

    #[test]
    fn energy_gradient_examples() {
        let a = position_weights(1);
        let g = group(vec![vec![1.0, 2.0]]);
        let grad = energy_grad_theta(&Permutation::identity(1), &g, &a).unwrap();
        assert_eq!(grad, vec![-1.0, -2.0]);
        let g = group(vec![vec![0.0; 3]; 3]);
        let a = position_weights(3);
        let y = Permutation::new(vec![2, 3, 1]).unwrap();
        assert_eq!(energy_grad_theta(&y, &g, &a).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&[0.2, 0.9, 0.5]).ranks(), &[3, 1, 2]);
        assert_eq!(predict(&[0.5, 0.5]).ranks(), &[1, 2]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let t = ParamVector::new(vec![0.1, -3.5e-17, 12345.678, 0.0]).unwrap();
        let text = t.to_checkpoint_string();
        assert!(text.starts_with("crf-rank-theta v1 d=4\n"));
        assert_eq!(ParamVector::from_checkpoint_str(&text).unwrap(), t);
    }

    #[test]
    fn checkpoint_errors() {
        assert!(ParamVector::from_checkpoint_str("").is_err());
        assert!(ParamVector::from_checkpoint_str("theta d=1\n0.5\n").is_err());
        assert!(matches!(
            ParamVector::from_checkpoint_str("crf-rank-theta v1 d=2\n0.5\n"),
            Err(Error::Dimension(_))
        ));
        assert!(ParamVector::from_checkpoint_str("crf-rank-theta v1 d=1\nabc\n").is_err());
        assert!(ParamVector::new(vec![f64::NAN]).is_err());
    }
}
