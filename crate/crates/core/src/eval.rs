//! NDCG@k evaluation of a trained model over datasets and folds.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::letor::{Dataset, FoldSplit};
use crate::model::{predict, score, ParamVector};
use crate::rank_space::ndcg_at_k;

/// Default largest truncation reported.
pub const DEFAULT_MAX_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryScores {
    pub query_id: String,
    /// `ndcg[k - 1]` is NDCG@k.
    pub ndcg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub max_k: usize,
    pub per_query: Vec<QueryScores>,
    /// `means[k - 1]` is the mean NDCG@k over `per_query`.
    pub means: Vec<f64>,
}

impl EvalReport {
    fn from_rows(max_k: usize, per_query: Vec<QueryScores>) -> Result<Self> {
        if per_query.is_empty() {
            return Err(Error::contract("cannot average NDCG over zero queries"));
        }
        let n = per_query.len() as f64;
        let means = (0..max_k)
            .map(|k| per_query.iter().map(|q| q.ndcg[k]).sum::<f64>() / n)
            .collect();
        Ok(EvalReport {
            max_k,
            per_query,
            means,
        })
    }

    pub fn mean_at(&self, k: usize) -> f64 {
        self.means[k - 1]
    }

    /// Average of the means NDCG@1..=k.
    pub fn mean_up_to(&self, k: usize) -> f64 {
        let k = k.min(self.max_k);
        self.means[..k].iter().sum::<f64>() / k as f64
    }

    /// `k,ndcg` rows.
    pub fn means_csv(&self) -> String {
        let mut out = String::from("k,ndcg\n");
        for (i, m) in self.means.iter().enumerate() {
            let _ = writeln!(out, "{},{m:?}", i + 1);
        }
        out
    }

    /// `qid,ndcg@1,...,ndcg@K` rows.
    pub fn per_query_csv(&self) -> String {
        let mut out = String::from("qid");
        for k in 1..=self.max_k {
            let _ = write!(out, ",ndcg@{k}");
        }
        out.push('\n');
        for q in &self.per_query {
            out.push_str(&q.query_id);
            for v in &q.ndcg {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

fn csv_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| csv_err(line, format!("invalid number {s:?}")))
}

/// Read back the output of [`EvalReport::means_csv`].
pub fn parse_means_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "k,ndcg" => {}
        _ => return Err(csv_err(1, "expected header `k,ndcg`")),
    }
    let mut means = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once(',')
            .ok_or_else(|| csv_err(i + 1, "expected `k,ndcg`"))?;
        if k.trim().parse::<usize>().ok() != Some(means.len() + 1) {
            return Err(csv_err(i + 1, format!("unexpected k {k:?}")));
        }
        means.push(parse_f64(v, i + 1)?);
    }
    Ok(means)
}

/// Read back the output of [`EvalReport::per_query_csv`].
pub fn parse_per_query_csv(text: &str) -> Result<Vec<QueryScores>> {
    let mut lines = text.lines().enumerate();
    let width = match lines.next() {
        Some((_, h)) if h.starts_with("qid,") => h.split(',').count() - 1,
        _ => return Err(csv_err(1, "expected header starting with `qid,`")),
    };
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let mut cells = line.split(',');
            let query_id = cells.next().unwrap_or_default().to_string();
            let ndcg = cells
                .map(|c| parse_f64(c, i + 1))
                .collect::<Result<Vec<_>>>()?;
            if ndcg.len() != width {
                return Err(csv_err(i + 1, format!("expected {width} values")));
            }
            Ok(QueryScores { query_id, ndcg })
        })
        .collect()
}

/// Rank every query's full document set by score and report NDCG@1..=max_k.
/// All-irrelevant queries score 0 and stay in the mean unless `exclude_empty`.
pub fn evaluate_with(
    theta: &ParamVector,
    dataset: &Dataset,
    max_k: usize,
    exclude_empty: bool,
) -> Result<EvalReport> {
    if max_k == 0 {
        return Err(Error::contract("NDCG truncation must be >= 1"));
    }
    if theta.dim() != dataset.feature_dim() {
        return Err(Error::Dimension(format!(
            "parameter vector has {} entries, dataset has {} features",
            theta.dim(),
            dataset.feature_dim()
        )));
    }
    let rows = dataset
        .groups()
        .par_iter()
        .filter(|g| !(exclude_empty && g.all_irrelevant()))
        .map(|g| {
            let y = predict(&score(theta, g)?);
            let ndcg = (1..=max_k)
                .map(|k| ndcg_at_k(&y, g.relevance(), k))
                .collect::<Result<Vec<_>>>()?;
            Ok(QueryScores {
                query_id: g.query_id().to_string(),
                ndcg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rows(max_k, rows)
}

pub fn evaluate(theta: &ParamVector, dataset: &Dataset, max_k: usize) -> Result<EvalReport> {
    evaluate_with(theta, dataset, max_k, false)
}

/// Test-set results across folds and their unweighted average.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub per_fold: Vec<Vec<f64>>,
    pub grand_mean: Vec<f64>,
}

impl FoldReport {
    pub fn from_fold_means(per_fold: Vec<Vec<f64>>) -> Result<Self> {
        let first = per_fold
            .first()
            .ok_or_else(|| Error::contract("fold report needs at least one fold"))?;
        let k = first.len();
        if per_fold.iter().any(|m| m.len() != k) {
            return Err(Error::contract("folds report different truncation depths"));
        }
        let n = per_fold.len() as f64;
        let grand_mean = (0..k)
            .map(|i| per_fold.iter().map(|m| m[i]).sum::<f64>() / n)
            .collect();
        Ok(FoldReport {
            per_fold,
            grand_mean,
        })
    }
}

pub fn evaluate_folds(
    models: &[ParamVector],
    folds: &[FoldSplit],
    max_k: usize,
    exclude_empty: bool,
) -> Result<FoldReport> {
    if models.len() != folds.len() {
        return Err(Error::contract(format!(
            "{} models for {} folds",
            models.len(),
            folds.len()
        )));
    }
    let per_fold = models
        .iter()
        .zip(folds)
        .map(|(theta, fold)| {
            if fold.test.is_empty() {
                return Err(Error::contract(format!(
                    "fold {} has an empty test set",
                    fold.fold_index
                )));
            }
            Ok(evaluate_with(theta, &fold.test, max_k, exclude_empty)?.means)
        })
        .collect::<Result<Vec<_>>>()?;
    FoldReport::from_fold_means(per_fold)
}

/// One row per objective, one column per truncation:
/// `objective,ndcg@1,...,ndcg@K`.
pub fn results_table_csv(rows: &[(String, FoldReport)]) -> String {
    let k = rows.first().map_or(0, |(_, r)| r.grand_mean.len());
    let mut out = String::from("objective");
    for i in 1..=k {
        let _ = write!(out, ",ndcg@{i}");
    }
    out.push('\n');
    for (name, report) in rows {
        out.push_str(name);
        for v in &report.grand_mean {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}
