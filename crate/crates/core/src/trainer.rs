//! Per-query SGD with stratified subsampling, plus the hyperparameter sweep.
//!
//! A single seeded ChaCha stream drives both the query shuffle and the
//! per-query subsampling, in that order within each epoch.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::letor::{distinct_relevance_levels, Dataset, FoldSplit, QueryGroup};
use crate::model::ParamVector;
use crate::objectives::{
    evaluate_enumeration, ObjectiveEval, ObjectiveKind, ObjectiveSpec, QueryEnumeration,
};
use crate::rank_space::ENUMERATION_CAP;

pub const DEFAULT_MAX_GROUP_SIZE: usize = 6;
pub const DEFAULT_LEARNING_RATES: [f64; 4] = [0.5, 0.1, 0.01, 0.001];
/// The learning-rate grid exactly as printed alongside the original results.
pub const PRINTED_LEARNING_RATES: [f64; 4] = [0.5, 0.01, 0.01, 0.001];
pub const DEFAULT_LA_WEIGHTS: [f64; 4] = [1.0, 10.0, 20.0, 50.0];
pub const DEFAULT_TEMPERATURES: [f64; 4] = [1.0, 10.0, 20.0, 50.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: ObjectiveSpec,
    pub learning_rate: f64,
    pub epochs: usize,
    pub max_group_size: usize,
    pub seed: u64,
    pub shuffle_queries: bool,
    pub skip_zero_signal_queries: bool,
    /// Coefficient of an optional `0.5 * wd * |theta|^2` penalty.
    pub weight_decay: f64,
}

impl TrainConfig {
    pub fn new(objective: ObjectiveSpec, learning_rate: f64, epochs: usize) -> Self {
        TrainConfig {
            objective,
            learning_rate,
            epochs,
            max_group_size: DEFAULT_MAX_GROUP_SIZE,
            seed: 0,
            shuffle_queries: true,
            skip_zero_signal_queries: true,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::contract(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_group_size < 2 || self.max_group_size > ENUMERATION_CAP {
            return Err(Error::contract(format!(
                "max group size must lie in 2..={ENUMERATION_CAP}, got {}",
                self.max_group_size
            )));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::contract("weight decay must be non-negative"));
        }
        // re-checks the hyperparameter ranges
        ObjectiveSpec::new(
            self.objective.kind,
            self.objective.la_weight,
            self.objective.temperature,
        )?;
        Ok(())
    }
}

/// Draw at most `max_size` documents, keeping at least one document of every
/// relevance level present. Selected documents keep their original order.
pub fn subsample_group<R: Rng + ?Sized>(
    group: &QueryGroup,
    max_size: usize,
    rng: &mut R,
) -> Result<QueryGroup> {
    let levels = distinct_relevance_levels(group);
    if max_size < levels.len() {
        return Err(Error::contract(format!(
            "cannot keep {} relevance levels of query {} in {max_size} documents",
            levels.len(),
            group.query_id()
        )));
    }
    if group.len() <= max_size {
        return Ok(group.clone());
    }

    let mut by_level: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &r) in group.relevance().iter().enumerate() {
        by_level.entry(r).or_default().push(i);
    }
    let mut chosen = vec![false; group.len()];
    for docs in by_level.values() {
        let &pick = docs.choose(rng).expect("levels are non-empty");
        chosen[pick] = true;
    }
    let rest: Vec<usize> = (0..group.len()).filter(|&i| !chosen[i]).collect();
    for &i in rest.choose_multiple(rng, max_size - levels.len()) {
        chosen[i] = true;
    }
    let picked: Vec<usize> = (0..group.len()).filter(|&i| chosen[i]).collect();
    Ok(group.select(&picked))
}

fn has_ranking_signal(group: &QueryGroup) -> bool {
    !group.all_irrelevant() && distinct_relevance_levels(group).len() > 1
}

/// One SGD update on one (already subsampled) query. Returns the objective
/// evaluated at the pre-update parameters.
pub fn sgd_step(
    theta: &mut ParamVector,
    group: &QueryGroup,
    objective: &ObjectiveSpec,
    learning_rate: f64,
) -> Result<ObjectiveEval> {
    let q = QueryEnumeration::build(group, theta)?;
    let eval = evaluate_enumeration(objective, &q)?;
    theta.step(learning_rate, &eval.grad);
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_objective: f64,
    pub mean_train_ndcg5: f64,
    pub wall_seconds: f64,
    pub queries_used: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub theta: ParamVector,
    pub log: Vec<EpochLog>,
}

/// `epoch,mean_objective,mean_train_ndcg@5,wall_seconds`.
pub fn training_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,mean_objective,mean_train_ndcg@5,wall_seconds\n");
    for e in log {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:.6}",
            e.epoch, e.mean_objective, e.mean_train_ndcg5, e.wall_seconds
        );
    }
    out
}

/// Train from `theta = 0`, one gradient step per visited query.
pub fn sgd_train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    let mut theta = ParamVector::zeros(dataset.feature_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let start = Instant::now();

    for epoch in 1..=config.epochs {
        if config.shuffle_queries {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        let mut used = 0;
        for &qi in &order {
            let group = &dataset.groups()[qi];
            if config.skip_zero_signal_queries && !has_ranking_signal(group) {
                continue;
            }
            let sub = subsample_group(group, config.max_group_size, &mut rng)?;
            let q = QueryEnumeration::build(&sub, &theta)?;
            if config.skip_zero_signal_queries && q.losses().is_identically_zero() {
                continue;
            }
            let mut eval = evaluate_enumeration(&config.objective, &q)?;
            if config.weight_decay > 0.0 {
                for (g, t) in eval.grad.iter_mut().zip(theta.as_slice()) {
                    *g += config.weight_decay * t;
                }
            }
            if !eval.value.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    query_id: group.query_id().to_string(),
                    epoch,
                });
            }
            theta.step(config.learning_rate, &eval.grad);
            total += eval.value;
            used += 1;
        }
        let train = evaluate(&theta, dataset, 5)?;
        log.push(EpochLog {
            epoch,
            mean_objective: if used > 0 { total / used as f64 } else { 0.0 },
            mean_train_ndcg5: train.mean_at(5),
            wall_seconds: start.elapsed().as_secs_f64(),
            queries_used: used,
        });
    }
    Ok(TrainOutcome { theta, log })
}

/// How validation reports are reduced to one number for model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMetric {
    /// Mean of NDCG@1..=k.
    MeanUpTo(usize),
    /// NDCG@k alone.
    At(usize),
}

impl SelectionMetric {
    fn depth(self) -> usize {
        match self {
            SelectionMetric::MeanUpTo(k) | SelectionMetric::At(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub learning_rates: Vec<f64>,
    pub la_weights: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub selection: SelectionMetric,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            learning_rates: DEFAULT_LEARNING_RATES.to_vec(),
            la_weights: DEFAULT_LA_WEIGHTS.to_vec(),
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            selection: SelectionMetric::MeanUpTo(5),
        }
    }
}

impl SweepGrid {
    /// Objective settings paired with learning rates, in grid order
    /// (learning rate outermost).
    pub fn configs(&self, kind: ObjectiveKind, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
        if self.learning_rates.is_empty()
            || (kind == ObjectiveKind::La && self.la_weights.is_empty())
            || (kind == ObjectiveKind::Kl && self.temperatures.is_empty())
        {
            return Err(Error::contract("sweep grid has an empty axis"));
        }
        let specs: Vec<ObjectiveSpec> = match kind {
            ObjectiveKind::La => self
                .la_weights
                .iter()
                .map(|&a| ObjectiveSpec::new(kind, a, 1.0))
                .collect::<Result<_>>()?,
            ObjectiveKind::Kl => self
                .temperatures
                .iter()
                .map(|&t| ObjectiveSpec::new(kind, 1.0, t))
                .collect::<Result<_>>()?,
            _ => vec![ObjectiveSpec::of(kind)],
        };
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for spec in &specs {
                let mut cfg = base.clone();
                cfg.objective = *spec;
                cfg.learning_rate = lr;
                cfg.seed = derive_seed(base.seed, out.len() as u64);
                out.push(cfg);
            }
        }
        Ok(out)
    }
}

/// splitmix64 of the base seed offset by the grid index.
fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SweepTrial {
    pub config: TrainConfig,
    pub validation_score: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best: TrainConfig,
    pub theta: ParamVector,
    pub validation_score: f64,
    pub trials: Vec<SweepTrial>,
}

/// Train one model per grid point and keep the best on validation NDCG.
/// Ties go to the earlier grid point.
pub fn sweep(
    fold: &FoldSplit,
    grid: &SweepGrid,
    kind: ObjectiveKind,
    base: &TrainConfig,
) -> Result<SweepResult> {
    let configs = grid.configs(kind, base)?;
    let depth = grid.selection.depth();
    let runs = configs
        .par_iter()
        .map(|cfg| {
            let out = sgd_train(&fold.train, cfg)?;
            let report = evaluate(&out.theta, &fold.validation, depth)?;
            let score = match grid.selection {
                SelectionMetric::MeanUpTo(k) => report.mean_up_to(k),
                SelectionMetric::At(k) => report.mean_at(k),
            };
            Ok((out.theta, score))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, (_, s)) in runs.iter().enumerate() {
        if *s > runs[best].1 {
            best = i;
        }
    }
    let trials = configs
        .iter()
        .zip(&runs)
        .map(|(c, (_, s))| SweepTrial {
            config: c.clone(),
            validation_score: *s,
        })
        .collect();
    let (theta, validation_score) = runs[best].clone();
    Ok(SweepResult {
        best: configs[best].clone(),
        theta,
        validation_score,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::objective_eval;

    fn group8() -> QueryGroup {
        let rows = (0..8).map(|i| vec![i as f64, 1.0]).collect();
        QueryGroup::new("q", rows, vec![0, 0, 0, 0, 0, 1, 1, 2]).unwrap()
    }

    #[test]
    fn small_groups_pass_through() {
        let g = QueryGroup::new("q", vec![vec![0.0]; 5], vec![0, 1, 2, 0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(subsample_group(&g, 6, &mut rng).unwrap(), g);
    }

    #[test]
    fn subsample_keeps_levels_and_size() {
        let g = group8();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = subsample_group(&g, 6, &mut rng).unwrap();
            assert_eq!(s.len(), 6);
            assert_eq!(distinct_relevance_levels(&s), distinct_relevance_levels(&g));
            // original order kept
            assert!(s.features().windows(2).all(|w| w[0][0] < w[1][0]));
        }
    }

    #[test]
    fn subsample_is_deterministic() {
        let g = group8();
        let a = subsample_group(&g, 6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = subsample_group(&g, 6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_rejects_too_small_budget() {
        let g = group8();
        assert!(subsample_group(&g, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn subsample_covers_every_document() {
        let g = group8();
        let mut seen = [false; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            for row in subsample_group(&g, 6, &mut rng).unwrap().features() {
                seen[row[0] as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    fn tiny_dataset() -> Dataset {
        let g1 = QueryGroup::new(
            "a",
            vec![vec![1.0, 0.2], vec![0.1, 0.9], vec![0.5, 0.5]],
            vec![2, 0, 1],
        )
        .unwrap();
        let g2 = QueryGroup::new("b", vec![vec![0.3, 0.3], vec![0.9, 0.0]], vec![0, 1]).unwrap();
        let g3 = QueryGroup::new("c", vec![vec![0.3, 0.3], vec![0.9, 0.0]], vec![0, 0]).unwrap();
        Dataset::new(vec![g1, g2, g3], 2).unwrap()
    }

    #[test]
    fn zero_epochs_returns_zero_theta() {
        let cfg = TrainConfig::new(ObjectiveSpec::of(ObjectiveKind::Ml), 0.1, 0);
        let out = sgd_train(&tiny_dataset(), &cfg).unwrap();
        assert_eq!(out.theta, ParamVector::zeros(2));
        assert!(out.log.is_empty());
    }

    #[test]
    fn zero_signal_queries_are_skipped() {
        let cfg = TrainConfig::new(ObjectiveSpec::of(ObjectiveKind::Kl), 0.1, 2);
        let out = sgd_train(&tiny_dataset(), &cfg).unwrap();
        assert!(out.log.iter().all(|e| e.queries_used == 2));
    }

    #[test]
    fn single_step_moves_by_learning_rate_times_gradient() {
        let ds = tiny_dataset();
        let g = &ds.groups()[0];
        let spec = ObjectiveSpec::of(ObjectiveKind::Ls);
        let start = ParamVector::new(vec![0.4, -0.3]).unwrap();
        let want = objective_eval(&spec, g, &start).unwrap();
        let mut theta = start.clone();
        let got = sgd_step(&mut theta, g, &spec, 0.25).unwrap();
        assert_eq!(got, want);
        for ((t, s), gr) in theta
            .as_slice()
            .iter()
            .zip(start.as_slice())
            .zip(&want.grad)
        {
            assert_eq!(*t, s - 0.25 * gr);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let mut cfg = TrainConfig::new(ObjectiveSpec::of(ObjectiveKind::El), 0.5, 5);
        cfg.seed = 42;
        let a = sgd_train(&tiny_dataset(), &cfg).unwrap();
        let b = sgd_train(&tiny_dataset(), &cfg).unwrap();
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(ObjectiveSpec::of(ObjectiveKind::Ml), 0.0, 1);
        assert!(sgd_train(&tiny_dataset(), &cfg).is_err());
        cfg.learning_rate = 0.1;
        cfg.max_group_size = 9;
        assert!(cfg.validate().is_err());
        cfg.max_group_size = 1;
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig::new(ObjectiveSpec::of(ObjectiveKind::Ml), 0.1, 1);
        assert!(sgd_train(&Dataset::default(), &cfg).is_err());
    }

    #[test]
    fn grid_sizes() {
        let grid = SweepGrid::default();
        let base = TrainConfig::new(ObjectiveSpec::of(ObjectiveKind::Ml), 0.1, 1);
        assert_eq!(grid.configs(ObjectiveKind::Ml, &base).unwrap().len(), 4);
        assert_eq!(grid.configs(ObjectiveKind::Ls, &base).unwrap().len(), 4);
        assert_eq!(grid.configs(ObjectiveKind::La, &base).unwrap().len(), 16);
        let kl = grid.configs(ObjectiveKind::Kl, &base).unwrap();
        assert_eq!(kl.len(), 16);
        assert_eq!(kl[1].objective.temperature, 10.0);
        assert_eq!(kl[4].learning_rate, 0.1);
        let empty = SweepGrid {
            learning_rates: vec![],
            ..SweepGrid::default()
        };
        assert!(empty.configs(ObjectiveKind::Ml, &base).is_err());
    }

    #[test]
    fn single_point_sweep_returns_that_point() {
        let ds = tiny_dataset();
        let fold = FoldSplit {
            train: ds.clone(),
            validation: ds.clone(),
            test: ds,
            fold_index: 1,
        };
        let grid = SweepGrid {
            learning_rates: vec![0.3],
            temperatures: vec![5.0],
            ..SweepGrid::default()
        };
        let base = TrainConfig::new(ObjectiveSpec::of(ObjectiveKind::Kl), 1.0, 3);
        let res = sweep(&fold, &grid, ObjectiveKind::Kl, &base).unwrap();
        assert_eq!(res.trials.len(), 1);
        assert_eq!(res.best.learning_rate, 0.3);
        assert_eq!(res.best.objective.temperature, 5.0);
        let again = sgd_train(&fold.train, &res.best).unwrap();
        assert_eq!(again.theta, res.theta);
    }

    #[test]
    fn log_csv_header() {
        let csv = training_log_csv(&[EpochLog {
            epoch: 1,
            mean_objective: 0.5,
            mean_train_ndcg5: 0.75,
            wall_seconds: 0.01,
            queries_used: 3,
        }]);
        assert_eq!(
            csv,
            "epoch,mean_objective,mean_train_ndcg@5,wall_seconds\n1,0.5,0.75,0.010000\n"
        );
    }
}
