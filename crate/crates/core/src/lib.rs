//! Listwise ranking CRF over document permutations.
//!
//! The model scores each document linearly, `s_i = theta . phi_i`, and
//! defines a distribution over full rankings through the energy
//! `E(y) = -sum_i alpha[y_i] s_i`. Training uses exact sums over every
//! permutation of a (subsampled) query, under one of five objectives:
//! maximum likelihood, loss-augmented, loss-scaled, expected loss and a
//! loss-derived KL target.

pub mod cli;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod letor;
pub mod math;
pub mod model;
pub mod objectives;
pub mod rank_space;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use letor::{Dataset, FoldSplit, QueryGroup};
pub use model::{ParamVector, PositionWeights};
pub use objectives::{ObjectiveEval, ObjectiveKind, ObjectiveSpec, QueryEnumeration};
pub use rank_space::{LossTable, Permutation, TargetDistribution};
pub use trainer::{SweepGrid, TrainConfig};
