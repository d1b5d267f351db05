//! Finite-difference audit of the analytic objective gradients on random
//! instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::letor::QueryGroup;
use crate::math::l2_norm;
use crate::model::ParamVector;
use crate::objectives::{objective_eval, ObjectiveKind, ObjectiveSpec};
use crate::synthetic::standard_normal_vec;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Random query of `m` documents with `d` standard normal features and grades
/// from `{0, 1, 2}`; redrawn until at least two grades differ.
pub fn random_group<R: Rng + ?Sized>(rng: &mut R, m: usize, d: usize) -> QueryGroup {
    loop {
        let rel: Vec<u32> = (0..m).map(|_| rng.gen_range(0..3)).collect();
        if rel.iter().any(|&r| r != rel[0]) {
            let rows = (0..m).map(|_| standard_normal_vec(rng, d)).collect();
            return QueryGroup::new("audit", rows, rel).expect("well-formed random group");
        }
    }
}

/// `|a - b|_2 / max(|a|_2, |b|_2)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = l2_norm(a).max(l2_norm(b));
    if scale == 0.0 {
        0.0
    } else {
        l2_norm(&diff) / scale
    }
}

pub fn central_difference(
    spec: &ObjectiveSpec,
    group: &QueryGroup,
    theta: &ParamVector,
    h: f64,
) -> Result<Vec<f64>> {
    let mut point = theta.as_slice().to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let x = point[i];
        point[i] = x + h;
        let plus = objective_eval(spec, group, &ParamVector::new(point.clone())?)?.value;
        point[i] = x - h;
        let minus = objective_eval(spec, group, &ParamVector::new(point.clone())?)?.value;
        point[i] = x;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub kind: ObjectiveKind,
    pub trials: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub trials: usize,
    pub seed: u64,
    pub dim: usize,
    pub min_docs: usize,
    pub max_docs: usize,
    pub step: f64,
    pub tolerance: f64,
    pub la_weight: f64,
    pub temperature: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            trials: 20,
            seed: 0,
            dim: 4,
            min_docs: 2,
            max_docs: 5,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            la_weight: 1.0,
            temperature: 1.0,
        }
    }
}

/// One row per objective. Every objective sees the same random instances.
pub fn audit(cfg: &AuditConfig) -> Result<Vec<AuditRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let instances: Vec<(QueryGroup, ParamVector)> = (0..cfg.trials)
        .map(|_| {
            let m = rng.gen_range(cfg.min_docs..=cfg.max_docs);
            let g = random_group(&mut rng, m, cfg.dim);
            let t = ParamVector::new(standard_normal_vec(&mut rng, cfg.dim)).expect("finite");
            (g, t)
        })
        .collect();

    ObjectiveKind::ALL
        .iter()
        .map(|&kind| {
            let spec = ObjectiveSpec::new(kind, cfg.la_weight, cfg.temperature)?;
            let mut worst: f64 = 0.0;
            for (g, t) in &instances {
                let analytic = objective_eval(&spec, g, t)?.grad;
                let numeric = central_difference(&spec, g, t, cfg.step)?;
                worst = worst.max(relative_error(&analytic, &numeric));
            }
            Ok(AuditRow {
                kind,
                trials: cfg.trials,
                max_relative_error: worst,
                passed: worst < cfg.tolerance,
            })
        })
        .collect()
}

pub fn audit_csv(rows: &[AuditRow]) -> String {
    let mut out = String::from("objective,trials,max_relative_error,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:e},{}\n",
            r.kind,
            r.trials,
            r.max_relative_error,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn default_audit_passes() {
        let rows = audit(&AuditConfig {
            trials: 5,
            seed: 3,
            ..AuditConfig::default()
        })
        .unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.passed), "{rows:?}");
    }
}
