//! Exact training objectives over an enumerated permutation space.
//!
//! Every objective is first expressed as a function of the per-permutation
//! energies `E_j` (value and `c_j = dValue/dE_j`). The parameter gradient
//! then follows from the linear energy:
//!
//! ```text
//! dE_j/dtheta = -Phi^T w_j            w_j[i] = alpha[y_j(i)]
//! dValue/dtheta = sum_j c_j dE_j/dtheta = -Phi^T (sum_j c_j w_j)
//! ```
//!
//! Values are per query; averaging over a dataset is the caller's business.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::letor::QueryGroup;
use crate::math::{l2_norm, log_sum_exp, softmax_with_log_z};
use crate::model::{position_weights, score, ParamVector};
use crate::rank_space::{
    cached_permutations, target_distribution, LossTable, Permutation, ZERO_LOSS_TOL,
};

/// Step used by [`energy_derivatives`].
pub const ENERGY_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    /// Maximum likelihood.
    Ml,
    /// Loss-augmented energy `E - alpha * l`.
    La,
    /// Loss-scaled energy `l * (E - E_gt) - l`.
    Ls,
    /// Expected loss under the model.
    El,
    /// Cross-entropy to the loss-derived target distribution.
    Kl,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 5] = [
        ObjectiveKind::Ml,
        ObjectiveKind::La,
        ObjectiveKind::Ls,
        ObjectiveKind::El,
        ObjectiveKind::Kl,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ObjectiveKind::Ml => "ML",
            ObjectiveKind::La => "LA",
            ObjectiveKind::Ls => "LS",
            ObjectiveKind::El => "EL",
            ObjectiveKind::Kl => "KL",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" => Ok(ObjectiveKind::Ml),
            "la" => Ok(ObjectiveKind::La),
            "ls" => Ok(ObjectiveKind::Ls),
            "el" => Ok(ObjectiveKind::El),
            "kl" => Ok(ObjectiveKind::Kl),
            other => Err(Error::contract(format!(
                "unknown objective {other:?}, expected one of ml, la, ls, el, kl"
            ))),
        }
    }
}

/// Objective choice plus its hyperparameters. `la_weight` only matters for
/// LA and `temperature` only for KL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub la_weight: f64,
    pub temperature: f64,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, la_weight: f64, temperature: f64) -> Result<Self> {
        if !la_weight.is_finite() || la_weight <= 0.0 {
            return Err(Error::contract(format!(
                "loss-augmentation weight must be positive, got {la_weight}"
            )));
        }
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::contract(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(ObjectiveSpec {
            kind,
            la_weight,
            temperature,
        })
    }

    pub fn of(kind: ObjectiveKind) -> Self {
        ObjectiveSpec {
            kind,
            la_weight: 1.0,
            temperature: 1.0,
        }
    }
}

/// Value and parameter gradient of one objective on one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Value and energy-space gradient `dValue/dE_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyObjective {
    pub value: f64,
    pub d_energy: Vec<f64>,
}

/// Everything needed to evaluate objectives exactly on one query at one
/// parameter setting.
#[derive(Debug, Clone)]
pub struct QueryEnumeration {
    perms: &'static [Permutation],
    features: Vec<Vec<f64>>,
    /// Row-major `n x m`: position weight of document `i` under permutation `j`.
    weights: Vec<f64>,
    energies: Vec<f64>,
    losses: LossTable,
    zero_loss: Vec<usize>,
    log_partition: f64,
}

impl QueryEnumeration {
    pub fn build(group: &QueryGroup, theta: &ParamVector) -> Result<Self> {
        let m = group.len();
        let perms = cached_permutations(m)?;
        let scores = score(theta, group)?;
        let alpha = position_weights(m);

        let mut weights = Vec::with_capacity(perms.len() * m);
        let mut energies = Vec::with_capacity(perms.len());
        for y in perms {
            let mut e = 0.0;
            for (&pos, &s) in y.ranks().iter().zip(&scores) {
                let w = alpha.at(pos);
                weights.push(w);
                e -= w * s;
            }
            energies.push(e);
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite energies on query {}",
                group.query_id()
            )));
        }

        let losses = LossTable::new(group.relevance(), perms)?;
        let zero_loss = losses.zero_loss_indices();
        if zero_loss.is_empty() {
            return Err(Error::contract(format!(
                "query {} has no zero-loss permutation",
                group.query_id()
            )));
        }
        let neg: Vec<f64> = energies.iter().map(|e| -e).collect();
        let log_partition = log_sum_exp(&neg);

        Ok(QueryEnumeration {
            perms,
            features: group.features().to_vec(),
            weights,
            energies,
            losses,
            zero_loss,
            log_partition,
        })
    }

    pub fn perms(&self) -> &[Permutation] {
        self.perms
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn losses(&self) -> &LossTable {
        &self.losses
    }

    pub fn zero_loss(&self) -> &[usize] {
        &self.zero_loss
    }

    /// `log Z` of the unmodified energy.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Model distribution `p(y_j | x)`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.energies
            .iter()
            .map(|e| (-e - self.log_partition).exp())
            .collect()
    }

    fn num_docs(&self) -> usize {
        self.features.len()
    }

    /// `sum_j c_j dE_j/dtheta`.
    pub fn pull_back(&self, d_energy: &[f64]) -> Vec<f64> {
        let m = self.num_docs();
        let mut u = vec![0.0; m];
        for (c, w) in d_energy.iter().zip(self.weights.chunks_exact(m)) {
            if *c == 0.0 {
                continue;
            }
            for (ui, wi) in u.iter_mut().zip(w) {
                *ui += c * wi;
            }
        }
        let d = self.features.first().map_or(0, Vec::len);
        let mut grad = vec![0.0; d];
        for (ui, phi) in u.iter().zip(&self.features) {
            for (g, f) in grad.iter_mut().zip(phi) {
                *g -= ui * f;
            }
        }
        grad
    }

    fn eval(&self, obj: EnergyObjective) -> ObjectiveEval {
        ObjectiveEval {
            grad: self.pull_back(&obj.d_energy),
            value: obj.value,
        }
    }
}

fn check_aligned(energies: &[f64], losses: &[f64], zero_loss: &[usize]) -> Result<()> {
    if energies.len() != losses.len() {
        return Err(Error::contract(format!(
            "{} energies but {} losses",
            energies.len(),
            losses.len()
        )));
    }
    if zero_loss.is_empty() {
        return Err(Error::contract("empty zero-loss set"));
    }
    if let Some(&j) = zero_loss.iter().find(|&&j| j >= losses.len()) {
        return Err(Error::contract(format!("zero-loss index {j} out of range")));
    }
    Ok(())
}

fn ml_form(energies: &[f64], logits: &[f64], gt_term: f64, zero_loss: &[usize]) -> EnergyObjective {
    let n0 = zero_loss.len() as f64;
    let (p, log_z) = softmax_with_log_z(logits);
    let mut d_energy: Vec<f64> = p.iter().map(|pj| -n0 * pj).collect();
    for &t in zero_loss {
        d_energy[t] += 1.0;
    }
    debug_assert_eq!(energies.len(), d_energy.len());
    EnergyObjective {
        value: gt_term + n0 * log_z,
        d_energy,
    }
}

/// `sum_{t in Y0} [E_t + log Z]`.
pub fn ml_energy_objective(energies: &[f64], zero_loss: &[usize]) -> EnergyObjective {
    let logits: Vec<f64> = energies.iter().map(|e| -e).collect();
    let gt: f64 = zero_loss.iter().map(|&t| energies[t]).sum();
    ml_form(energies, &logits, gt, zero_loss)
}

/// ML form with `E - alpha * l`.
pub fn la_energy_objective(
    energies: &[f64],
    losses: &[f64],
    zero_loss: &[usize],
    alpha: f64,
) -> EnergyObjective {
    let logits: Vec<f64> = energies
        .iter()
        .zip(losses)
        .map(|(e, l)| -(e - alpha * l))
        .collect();
    let gt: f64 = zero_loss
        .iter()
        .map(|&t| energies[t] - alpha * losses[t])
        .sum();
    ml_form(energies, &logits, gt, zero_loss)
}

/// `log sum_j exp(-E^LS_j)`, `E^LS_j = l_j (E_j - mean_{Y0} E) - l_j`.
pub fn ls_energy_objective(
    energies: &[f64],
    losses: &[f64],
    zero_loss: &[usize],
) -> EnergyObjective {
    let n0 = zero_loss.len() as f64;
    let e0 = zero_loss.iter().map(|&t| energies[t]).sum::<f64>() / n0;
    let logits: Vec<f64> = energies
        .iter()
        .zip(losses)
        .map(|(e, l)| -(l * (e - e0) - l))
        .collect();
    let (p, log_z) = softmax_with_log_z(&logits);
    let mean_loss: f64 = p.iter().zip(losses).map(|(pj, l)| pj * l).sum();
    let mut d_energy: Vec<f64> = p.iter().zip(losses).map(|(pj, l)| -pj * l).collect();
    for &t in zero_loss {
        d_energy[t] += mean_loss / n0;
    }
    EnergyObjective {
        value: log_z,
        d_energy,
    }
}

/// `sum_j l_j p_j`.
pub fn el_energy_objective(energies: &[f64], losses: &[f64]) -> EnergyObjective {
    let logits: Vec<f64> = energies.iter().map(|e| -e).collect();
    let (p, _) = softmax_with_log_z(&logits);
    let mean_loss: f64 = p.iter().zip(losses).map(|(pj, l)| pj * l).sum();
    let d_energy = p
        .iter()
        .zip(losses)
        .map(|(pj, l)| pj * (mean_loss - l))
        .collect();
    EnergyObjective {
        value: mean_loss,
        d_energy,
    }
}

/// `-sum_j q_j log p_j` with `q = softmax(-l / T)`.
pub fn kl_energy_objective(
    energies: &[f64],
    losses: &[f64],
    temperature: f64,
) -> Result<EnergyObjective> {
    let q = target_distribution(losses, temperature)?;
    let logits: Vec<f64> = energies.iter().map(|e| -e).collect();
    let (p, log_z) = softmax_with_log_z(&logits);
    let value = q
        .probs()
        .iter()
        .zip(energies)
        .map(|(qj, e)| qj * e)
        .sum::<f64>()
        + log_z;
    let d_energy = q.probs().iter().zip(&p).map(|(qj, pj)| qj - pj).collect();
    Ok(EnergyObjective { value, d_energy })
}

/// Dispatch on `spec` with energies treated as free variables.
pub fn energy_objective(
    spec: &ObjectiveSpec,
    energies: &[f64],
    losses: &[f64],
    zero_loss: &[usize],
) -> Result<EnergyObjective> {
    check_aligned(energies, losses, zero_loss)?;
    Ok(match spec.kind {
        ObjectiveKind::Ml => ml_energy_objective(energies, zero_loss),
        ObjectiveKind::La => la_energy_objective(energies, losses, zero_loss, spec.la_weight),
        ObjectiveKind::Ls => ls_energy_objective(energies, losses, zero_loss),
        ObjectiveKind::El => el_energy_objective(energies, losses),
        ObjectiveKind::Kl => kl_energy_objective(energies, losses, spec.temperature)?,
    })
}

pub fn ml_eval(q: &QueryEnumeration) -> ObjectiveEval {
    q.eval(ml_energy_objective(&q.energies, &q.zero_loss))
}

pub fn la_eval(q: &QueryEnumeration, la_weight: f64) -> ObjectiveEval {
    q.eval(la_energy_objective(
        &q.energies,
        q.losses.values(),
        &q.zero_loss,
        la_weight,
    ))
}

pub fn ls_eval(q: &QueryEnumeration) -> ObjectiveEval {
    q.eval(ls_energy_objective(
        &q.energies,
        q.losses.values(),
        &q.zero_loss,
    ))
}

pub fn el_eval(q: &QueryEnumeration) -> ObjectiveEval {
    q.eval(el_energy_objective(&q.energies, q.losses.values()))
}

pub fn kl_eval(q: &QueryEnumeration, temperature: f64) -> Result<ObjectiveEval> {
    Ok(q.eval(kl_energy_objective(
        &q.energies,
        q.losses.values(),
        temperature,
    )?))
}

/// `D_KL(q || p)`: the KL objective value minus the target entropy.
pub fn kl_divergence(q: &QueryEnumeration, temperature: f64) -> Result<f64> {
    let target = target_distribution(q.losses.values(), temperature)?;
    Ok(kl_eval(q, temperature)?.value - target.entropy())
}

pub fn evaluate_enumeration(spec: &ObjectiveSpec, q: &QueryEnumeration) -> Result<ObjectiveEval> {
    Ok(match spec.kind {
        ObjectiveKind::Ml => ml_eval(q),
        ObjectiveKind::La => la_eval(q, spec.la_weight),
        ObjectiveKind::Ls => ls_eval(q),
        ObjectiveKind::El => el_eval(q),
        ObjectiveKind::Kl => kl_eval(q, spec.temperature)?,
    })
}

/// Build the enumeration for `group` at `theta` and evaluate `spec` on it.
/// Groups above the enumeration cap must be subsampled first.
pub fn objective_eval(
    spec: &ObjectiveSpec,
    group: &QueryGroup,
    theta: &ParamVector,
) -> Result<ObjectiveEval> {
    let q = QueryEnumeration::build(group, theta)?;
    evaluate_enumeration(spec, &q)
}

/// Negative objective derivative with respect to each configuration's
/// energy, by central differences, scaled to unit l2 norm.
///
/// `gt_index` is 0-based and must carry zero loss; it is the only member of
/// the ground-truth set.
pub fn energy_derivatives(
    spec: &ObjectiveSpec,
    energies: &[f64],
    losses: &[f64],
    gt_index: usize,
) -> Result<Vec<f64>> {
    if energies.len() < 2 {
        return Err(Error::contract("need at least two configurations"));
    }
    if gt_index >= losses.len() || losses[gt_index].abs() > ZERO_LOSS_TOL {
        return Err(Error::contract(format!(
            "ground-truth index {gt_index} must point at a zero-loss configuration"
        )));
    }
    let gt = [gt_index];
    check_aligned(energies, losses, &gt)?;

    let value = |e: &[f64]| energy_objective(spec, e, losses, &gt).map(|o| o.value);
    let h = ENERGY_FD_STEP;
    let mut point = energies.to_vec();
    let mut v = Vec::with_capacity(energies.len());
    for j in 0..energies.len() {
        point[j] = energies[j] + h;
        let plus = value(&point)?;
        point[j] = energies[j] - h;
        let minus = value(&point)?;
        point[j] = energies[j];
        v.push(-(plus - minus) / (2.0 * h));
    }
    let norm = l2_norm(&v);
    if !norm.is_finite() || norm <= 0.0 {
        return Err(Error::DegenerateGradient(format!(
            "{} derivative vector has norm {norm}",
            spec.kind
        )));
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}
