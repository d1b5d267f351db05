//! Synthetic ranking data with a known linear scorer.
//!
//! Features are standard normal; each query's relevance grades are the
//! per-query quantile buckets of the hidden scores `theta_star . phi`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::letor::{Dataset, QueryGroup};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub queries: usize,
    pub docs_per_query: usize,
    pub dim: usize,
    /// Number of relevance grades, `0..levels`.
    pub levels: u32,
    pub seed: u64,
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Grade by position in the ascending order of `scores`: the lowest
/// `m / levels` documents get 0, and so on.
pub fn quantile_grades(scores: &[f64], levels: u32) -> Vec<u32> {
    let m = scores.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut grades = vec![0; m];
    for (rank, &doc) in order.iter().enumerate() {
        grades[doc] = (rank * levels as usize / m) as u32;
    }
    grades
}

/// Generate `cfg.queries` groups labelled by `theta_star`. Query ids are
/// `<prefix><index>`.
pub fn generate(cfg: &SyntheticConfig, theta_star: &[f64], prefix: &str) -> Dataset {
    assert_eq!(
        theta_star.len(),
        cfg.dim,
        "hidden scorer has the wrong width"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let groups = (0..cfg.queries)
        .map(|q| {
            let rows: Vec<Vec<f64>> = (0..cfg.docs_per_query)
                .map(|_| standard_normal_vec(&mut rng, cfg.dim))
                .collect();
            let scores: Vec<f64> = rows
                .iter()
                .map(|r| r.iter().zip(theta_star).map(|(a, b)| a * b).sum())
                .collect();
            let grades = quantile_grades(&scores, cfg.levels);
            QueryGroup::new(format!("{prefix}{q}"), rows, grades)
                .expect("well-formed synthetic group")
        })
        .collect();
    Dataset::new(groups, cfg.dim).expect("unique synthetic query ids")
}

/// Hidden scorer drawn from `seed`.
pub fn hidden_scorer(dim: usize, seed: u64) -> Vec<f64> {
    standard_normal_vec(&mut ChaCha8Rng::seed_from_u64(seed), dim)
}
