//! Python bindings for `crfrank`.
//!
//! Permutations cross the boundary as 1-based rank lists, datasets as the
//! [`Dataset`] class, and parameter vectors as plain float lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use crfrank::eval::evaluate_with;
use crfrank::letor::{parse_letor, read_letor_file};
use crfrank::model::{self, position_weights};
use crfrank::objectives;
use crfrank::rank_space::{self, Permutation};
use crfrank::trainer::sgd_train;
use crfrank::{Error, ObjectiveKind, ObjectiveSpec, ParamVector, QueryGroup, TrainConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn perm(ranks: Vec<usize>) -> PyResult<Permutation> {
    Permutation::new(ranks).map_err(to_py)
}

fn spec(objective: &str, alpha: f64, temperature: f64) -> PyResult<ObjectiveSpec> {
    let kind: ObjectiveKind = objective.parse().map_err(to_py)?;
    ObjectiveSpec::new(kind, alpha, temperature).map_err(to_py)
}

fn theta(values: Vec<f64>) -> PyResult<ParamVector> {
    ParamVector::new(values).map_err(to_py)
}

/// Queries with per-document features and integer relevance grades.
#[pyclass(module = "pycrfrank", frozen)]
struct Dataset {
    inner: crfrank::Dataset,
}

#[pymethods]
impl Dataset {
    /// Build from `[(query_id, features, relevance), ...]`.
    #[new]
    fn new(queries: Vec<(String, Vec<Vec<f64>>, Vec<u32>)>, feature_dim: usize) -> PyResult<Self> {
        let groups = queries
            .into_iter()
            .map(|(qid, rows, rel)| QueryGroup::new(qid, rows, rel))
            .collect::<crfrank::Result<Vec<_>>>()
            .map_err(to_py)?;
        let inner = crfrank::Dataset::new(groups, feature_dim).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (text, feature_dim=None))]
    fn from_letor(text: &str, feature_dim: Option<usize>) -> PyResult<Self> {
        let inner = parse_letor(text, feature_dim).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, feature_dim=None))]
    fn read(path: PathBuf, feature_dim: Option<usize>) -> PyResult<Self> {
        let inner = read_letor_file(&path, feature_dim).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(queries={}, documents={}, feature_dim={})",
            self.inner.len(),
            self.inner.num_documents(),
            self.inner.feature_dim()
        )
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn num_documents(&self) -> usize {
        self.inner.num_documents()
    }

    fn query_ids(&self) -> Vec<String> {
        self.inner
            .groups()
            .iter()
            .map(|g| g.query_id().to_string())
            .collect()
    }

    /// `(query_id, features, relevance)` of the i-th query.
    fn query(&self, i: usize) -> PyResult<(String, Vec<Vec<f64>>, Vec<u32>)> {
        let g = self
            .inner
            .groups()
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("query index {i} out of range")))?;
        Ok((
            g.query_id().to_string(),
            g.features().to_vec(),
            g.relevance().to_vec(),
        ))
    }

    fn to_letor(&self) -> String {
        self.inner.to_letor_string()
    }
}

#[pyfunction]
fn ndcg(ranks: Vec<usize>, relevance: Vec<u32>) -> PyResult<f64> {
    rank_space::ndcg(&perm(ranks)?, &relevance).map_err(to_py)
}

#[pyfunction]
fn ndcg_at_k(ranks: Vec<usize>, relevance: Vec<u32>, k: usize) -> PyResult<f64> {
    rank_space::ndcg_at_k(&perm(ranks)?, &relevance, k).map_err(to_py)
}

#[pyfunction]
fn loss(ranks: Vec<usize>, relevance: Vec<u32>) -> PyResult<f64> {
    rank_space::loss(&perm(ranks)?, &relevance).map_err(to_py)
}

#[pyfunction]
fn ideal_permutation(relevance: Vec<u32>) -> Vec<usize> {
    rank_space::ideal_permutation(&relevance).ranks().to_vec()
}

#[pyfunction]
fn enumerate_permutations(m: usize) -> PyResult<Vec<Vec<usize>>> {
    Ok(rank_space::cached_permutations(m)
        .map_err(to_py)?
        .iter()
        .map(|p| p.ranks().to_vec())
        .collect())
}

#[pyfunction]
fn target_distribution(losses: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    Ok(rank_space::target_distribution(&losses, temperature)
        .map_err(to_py)?
        .probs()
        .to_vec())
}

#[pyfunction]
fn score(theta_values: Vec<f64>, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let m = features.len();
    let group = QueryGroup::new("q", features, vec![0; m]).map_err(to_py)?;
    model::score(&theta(theta_values)?, &group).map_err(to_py)
}

#[pyfunction]
fn predict(scores: Vec<f64>) -> Vec<usize> {
    model::predict(&scores).ranks().to_vec()
}

#[pyfunction]
fn energy(ranks: Vec<usize>, scores: Vec<f64>) -> PyResult<f64> {
    model::energy(&perm(ranks)?, &scores, &position_weights(scores.len())).map_err(to_py)
}

/// Per-query objective value and parameter gradient.
#[pyfunction]
#[pyo3(signature = (objective, features, relevance, theta_values, alpha=1.0, temperature=1.0))]
fn objective_eval(
    objective: &str,
    features: Vec<Vec<f64>>,
    relevance: Vec<u32>,
    theta_values: Vec<f64>,
    alpha: f64,
    temperature: f64,
) -> PyResult<(f64, Vec<f64>)> {
    let group = QueryGroup::new("q", features, relevance).map_err(to_py)?;
    let e = objectives::objective_eval(
        &spec(objective, alpha, temperature)?,
        &group,
        &theta(theta_values)?,
    )
    .map_err(to_py)?;
    Ok((e.value, e.grad))
}

/// Normalized negative energy derivatives; `gt_index` is 0-based.
#[pyfunction]
#[pyo3(signature = (objective, energies, losses, gt_index, alpha=1.0, temperature=1.0))]
fn energy_derivatives(
    objective: &str,
    energies: Vec<f64>,
    losses: Vec<f64>,
    gt_index: usize,
    alpha: f64,
    temperature: f64,
) -> PyResult<Vec<f64>> {
    objectives::energy_derivatives(
        &spec(objective, alpha, temperature)?,
        &energies,
        &losses,
        gt_index,
    )
    .map_err(to_py)
}

/// Train from zero; returns `(theta, per-epoch mean training NDCG@5)`.
#[pyfunction]
#[pyo3(signature = (
    dataset, objective="ml", learning_rate=0.1, epochs=50, alpha=1.0,
    temperature=1.0, seed=0, max_group_size=6
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    dataset: &Dataset,
    objective: &str,
    learning_rate: f64,
    epochs: usize,
    alpha: f64,
    temperature: f64,
    seed: u64,
    max_group_size: usize,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let mut cfg = TrainConfig::new(spec(objective, alpha, temperature)?, learning_rate, epochs);
    cfg.seed = seed;
    cfg.max_group_size = max_group_size;
    let data = &dataset.inner;
    let out = py.detach(|| sgd_train(data, &cfg)).map_err(to_py)?;
    let curve = out.log.iter().map(|e| e.mean_train_ndcg5).collect();
    Ok((out.theta.into_vec(), curve))
}

/// Mean NDCG@1..=k over the dataset.
#[pyfunction]
#[pyo3(signature = (theta_values, dataset, k=5, exclude_empty=false))]
fn evaluate(
    py: Python<'_>,
    theta_values: Vec<f64>,
    dataset: &Dataset,
    k: usize,
    exclude_empty: bool,
) -> PyResult<Vec<f64>> {
    let t = theta(theta_values)?;
    let data = &dataset.inner;
    let report = py
        .detach(|| evaluate_with(&t, data, k, exclude_empty))
        .map_err(to_py)?;
    Ok(report.means)
}

#[pymodule]
fn pycrfrank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(ndcg, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(ideal_permutation, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_permutations, m)?)?;
    m.add_function(wrap_pyfunction!(target_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(objective_eval, m)?)?;
    m.add_function(wrap_pyfunction!(energy_derivatives, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
