//! LETOR / svmlight-with-qid ingestion and fold handling.
//!
//! Each data line has the shape
//!
//! ```text
//! <grade> qid:<id> <index>:<value> ... [# comment]
//! ```
//!
//! Feature indices are 1-based on disk and 0-based in memory.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Relevance grades accepted in strict LETOR 4.0 mode.
pub const LETOR4_GRADES: [u32; 3] = [0, 1, 2];

/// One parsed line before grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRow {
    pub relevance: u32,
    pub query_id: String,
    pub features: Vec<f64>,
    pub comment: Option<String>,
}

/// All documents of a single query: the feature matrix and relevance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    query_id: String,
    features: Vec<Vec<f64>>,
    relevance: Vec<u32>,
}

impl QueryGroup {
    pub fn new(
        query_id: impl Into<String>,
        features: Vec<Vec<f64>>,
        relevance: Vec<u32>,
    ) -> Result<Self> {
        let query_id = query_id.into();
        if features.is_empty() {
            return Err(Error::contract(format!(
                "query {query_id} has no documents"
            )));
        }
        if features.len() != relevance.len() {
            return Err(Error::contract(format!(
                "query {query_id}: {} feature rows but {} relevance grades",
                features.len(),
                relevance.len()
            )));
        }
        let d = features[0].len();
        if features.iter().any(|row| row.len() != d) {
            return Err(Error::Dimension(format!(
                "query {query_id} has ragged feature rows"
            )));
        }
        Ok(QueryGroup {
            query_id,
            features,
            relevance,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    /// Row `i` is the feature vector of document `i`.
    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn relevance(&self) -> &[u32] {
        &self.relevance
    }

    /// Number of documents.
    pub fn len(&self) -> usize {
        self.relevance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevance.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    /// Restrict the group to the documents at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> QueryGroup {
        QueryGroup {
            query_id: self.query_id.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            relevance: indices.iter().map(|&i| self.relevance[i]).collect(),
        }
    }

    /// True when every grade is zero.
    pub fn all_irrelevant(&self) -> bool {
        self.relevance.iter().all(|&r| r == 0)
    }

    fn min_max_normalize(&mut self) {
        let d = self.feature_dim();
        for j in 0..d {
            let (lo, hi) = self
                .features
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                    (lo.min(row[j]), hi.max(row[j]))
                });
            let span = hi - lo;
            for row in &mut self.features {
                row[j] = if span > 0.0 {
                    (row[j] - lo) / span
                } else {
                    0.0
                };
            }
        }
    }
}

pub fn distinct_relevance_levels(group: &QueryGroup) -> BTreeSet<u32> {
    group.relevance.iter().copied().collect()
}

/// An ordered collection of query groups sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    groups: Vec<QueryGroup>,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(groups: Vec<QueryGroup>, feature_dim: usize) -> Result<Self> {
        let mut seen = HashMap::with_capacity(groups.len());
        for (i, g) in groups.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::Dimension(format!(
                    "query {} has {} features, dataset expects {feature_dim}",
                    g.query_id,
                    g.feature_dim()
                )));
            }
            if seen.insert(g.query_id.clone(), i).is_some() {
                return Err(Error::contract(format!(
                    "duplicate query id {}",
                    g.query_id
                )));
            }
        }
        Ok(Dataset {
            groups,
            feature_dim,
        })
    }

    pub fn groups(&self) -> &[QueryGroup] {
        &self.groups
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn num_documents(&self) -> usize {
        self.groups.iter().map(QueryGroup::len).sum()
    }

    /// Per-query min-max scaling of every feature column to [0, 1].
    /// Constant columns become 0.
    pub fn normalized_per_query(&self) -> Dataset {
        let mut out = self.clone();
        for g in &mut out.groups {
            g.min_max_normalize();
        }
        out
    }

    /// Fails on the first grade outside `allowed`.
    pub fn validate_grades(&self, allowed: &[u32]) -> Result<()> {
        for g in &self.groups {
            if let Some(bad) = g.relevance.iter().find(|r| !allowed.contains(r)) {
                return Err(Error::contract(format!(
                    "query {} has relevance grade {bad}, allowed {allowed:?}",
                    g.query_id
                )));
            }
        }
        Ok(())
    }

    /// Serialize back to LETOR lines. Values use the shortest representation
    /// that parses back to the same `f64`, and every feature is written, so
    /// re-parsing reproduces the dataset exactly.
    pub fn to_letor_string(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            for (row, rel) in g.features.iter().zip(&g.relevance) {
                let _ = write!(out, "{rel} qid:{}", g.query_id);
                for (j, v) in row.iter().enumerate() {
                    let _ = write!(out, " {}:{v:?}", j + 1);
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Train / validation / test partition of one cross-validation fold.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub fold_index: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parse a single non-blank, non-comment line. `line_no` is 1-based.
pub fn parse_line(line: &str, line_no: usize) -> Result<DocumentRow> {
    let (body, comment) = match line.find('#') {
        Some(pos) => (&line[..pos], Some(line[pos + 1..].trim().to_string())),
        None => (line, None),
    };
    let mut tokens = body.split_ascii_whitespace();

    let grade_tok = tokens
        .next()
        .ok_or_else(|| parse_err(line_no, "missing relevance grade"))?;
    let relevance: u32 = grade_tok
        .parse()
        .map_err(|_| parse_err(line_no, format!("invalid relevance grade {grade_tok:?}")))?;

    let qid_tok = tokens
        .next()
        .ok_or_else(|| parse_err(line_no, "missing qid: token"))?;
    let query_id = match qid_tok.strip_prefix("qid:") {
        Some(id) if !id.is_empty() => id.to_string(),
        _ => {
            return Err(parse_err(
                line_no,
                format!("expected qid:<id>, found {qid_tok:?}"),
            ))
        }
    };

    let mut sparse = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line_no, format!("expected index:value, found {tok:?}")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid feature index {idx:?}")))?;
        if idx < 1 {
            return Err(parse_err(line_no, "feature index must be >= 1"));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid feature value {val:?}")))?;
        sparse.push((idx - 1, val));
    }

    let width = sparse.iter().map(|&(i, _)| i + 1).max().unwrap_or(0);
    let mut features = vec![0.0; width];
    for (i, v) in sparse {
        features[i] = v;
    }
    Ok(DocumentRow {
        relevance,
        query_id,
        features,
        comment,
    })
}

/// Parse a LETOR text stream into query groups.
///
/// Queries keep their first-appearance order and documents keep file order
/// within a query. The feature dimension is `expected_dim` when given, else
/// the largest index seen.
pub fn parse_letor(text: &str, expected_dim: Option<usize>) -> Result<Dataset> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<DocumentRow>> = HashMap::new();
    let mut max_dim = 0;

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = parse_line(line, i + 1)?;
        if let Some(d) = expected_dim {
            if row.features.len() > d {
                return Err(Error::Dimension(format!(
                    "line {}: feature index {} exceeds expected dimension {d}",
                    i + 1,
                    row.features.len()
                )));
            }
        }
        max_dim = max_dim.max(row.features.len());
        match rows.get_mut(&row.query_id) {
            Some(v) => v.push(row),
            None => {
                order.push(row.query_id.clone());
                rows.insert(row.query_id.clone(), vec![row]);
            }
        }
    }

    let dim = expected_dim.unwrap_or(max_dim);
    let groups = order
        .into_iter()
        .map(|qid| {
            let docs = rows.remove(&qid).unwrap_or_default();
            let relevance = docs.iter().map(|r| r.relevance).collect();
            let features = docs
                .into_iter()
                .map(|r| {
                    let mut f = r.features;
                    f.resize(dim, 0.0);
                    f
                })
                .collect();
            QueryGroup::new(qid, features, relevance)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(groups, dim)
}

pub fn read_letor_file(path: &Path, expected_dim: Option<usize>) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_letor(&text, expected_dim)
}

/// Load train/validation/test files and check they agree on feature width.
///
/// Empty files adopt the width of the non-empty ones.
pub fn load_fold(
    train_path: &Path,
    validation_path: &Path,
    test_path: &Path,
    fold_index: usize,
) -> Result<FoldSplit> {
    let train = read_letor_file(train_path, None)?;
    let validation = read_letor_file(validation_path, None)?;
    let test = read_letor_file(test_path, None)?;

    let dims: Vec<usize> = [&train, &validation, &test]
        .iter()
        .filter(|d| !d.is_empty())
        .map(|d| d.feature_dim())
        .collect();
    let dim = dims.first().copied().unwrap_or(0);
    if let Some(&other) = dims.iter().find(|&&d| d != dim) {
        return Err(Error::Dimension(format!(
            "fold {fold_index}: feature dimensions disagree ({dim} vs {other})"
        )));
    }
    let widen = |ds: Dataset| -> Result<Dataset> {
        if ds.is_empty() {
            Dataset::new(Vec::new(), dim)
        } else {
            Ok(ds)
        }
    };
    Ok(FoldSplit {
        train: widen(train)?,
        validation: widen(validation)?,
        test: widen(test)?,
        fold_index,
    })
}

/// `Fold<k>/{train,vali,test}.txt` under `root`.
pub fn fold_paths(root: &Path, k: usize) -> (PathBuf, PathBuf, PathBuf) {
    let dir = root.join(format!("Fold{k}"));
    (
        dir.join("train.txt"),
        dir.join("vali.txt"),
        dir.join("test.txt"),
    )
}

pub fn load_fold_dir(root: &Path, k: usize) -> Result<FoldSplit> {
    let (train, vali, test) = fold_paths(root, k);
    load_fold(&train, &vali, &test, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_densifies() {
        let ds = parse_letor("2 qid:10 1:0.5 3:0.25 #docid=GX1\n", None).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.feature_dim(), 3);
        let g = &ds.groups()[0];
        assert_eq!(g.query_id(), "10");
        assert_eq!(g.relevance(), &[2]);
        assert_eq!(g.features()[0], vec![0.5, 0.0, 0.25]);
    }

    #[test]
    fn comment_is_captured() {
        let row = parse_line("1 qid:3 2:1e-3 # docid = x", 1).unwrap();
        assert_eq!(row.comment.as_deref(), Some("docid = x"));
        assert_eq!(row.features, vec![0.0, 1e-3]);
    }

    #[test]
    fn empty_stream() {
        let ds = parse_letor("", None).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.feature_dim(), 0);
        let ds = parse_letor("\n  \n# header\n", Some(46)).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.feature_dim(), 46);
    }

    #[test]
    fn missing_qid_is_parse_error() {
        match parse_letor("1 1:0.5", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let cases = [
            ("0 qid:1 1:0.1\nqid:1 1:0.2", 2),
            ("0 qid:1 1:abc", 1),
            ("0 qid:1 0:1.0", 1),
            ("\n\nx qid:1 1:1", 3),
            ("0 qid:1 1", 1),
            ("0 qid: 1:1", 1),
        ];
        for (text, want) in cases {
            match parse_letor(text, None) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn index_beyond_expected_dim() {
        let err = parse_letor("0 qid:1 5:1.0", Some(4)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn grouping_keeps_first_appearance_order() {
        let text = "0 qid:b 1:1\n1 qid:a 1:2\n2 qid:b 2:3\n0 qid:a 1:4\n";
        let ds = parse_letor(text, None).unwrap();
        let ids: Vec<_> = ds.groups().iter().map(|g| g.query_id()).collect();
        assert_eq!(ids, ["b", "a"]);
        assert_eq!(ds.groups()[0].relevance(), &[0, 2]);
        assert_eq!(ds.groups()[0].features()[1], vec![0.0, 3.0]);
        assert_eq!(ds.groups()[1].features(), &[vec![2.0, 0.0], vec![4.0, 0.0]]);
        assert_eq!(ds.num_documents(), 4);
    }

    #[test]
    fn tabs_and_scientific_notation() {
        let ds = parse_letor("1\tqid:7\t1:-2.5E+2\t2:3e-1", None).unwrap();
        assert_eq!(ds.groups()[0].features()[0], vec![-250.0, 0.3]);
    }

    #[test]
    fn large_grades_pass_parser_but_fail_strict_validation() {
        let ds = parse_letor("4 qid:1 1:1\n0 qid:1 1:0", None).unwrap();
        assert!(ds.validate_grades(&LETOR4_GRADES).is_err());
        let ok = parse_letor("2 qid:1 1:1\n0 qid:1 1:0", None).unwrap();
        ok.validate_grades(&LETOR4_GRADES).unwrap();
    }

    #[test]
    fn distinct_levels() {
        let g = QueryGroup::new("q", vec![vec![0.0]; 4], vec![0, 0, 1, 2]).unwrap();
        assert_eq!(distinct_relevance_levels(&g), BTreeSet::from([0, 1, 2]));
        let g = QueryGroup::new("q", vec![vec![0.0]; 2], vec![1, 1]).unwrap();
        assert_eq!(distinct_relevance_levels(&g), BTreeSet::from([1]));
        assert!(QueryGroup::new("q", vec![], vec![]).is_err());
    }

    #[test]
    fn min_max_normalization() {
        let g = QueryGroup::new("q", vec![vec![1.0, 5.0], vec![3.0, 5.0]], vec![0, 1]).unwrap();
        let ds = Dataset::new(vec![g], 2).unwrap().normalized_per_query();
        assert_eq!(ds.groups()[0].features(), &[vec![0.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn duplicate_query_ids_rejected() {
        let g = QueryGroup::new("q", vec![vec![1.0]], vec![0]).unwrap();
        assert!(Dataset::new(vec![g.clone(), g], 1).is_err());
    }
}
