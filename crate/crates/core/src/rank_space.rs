//! Permutation output space: enumeration, NDCG, losses and the
//! temperature-smoothed target distribution.
//!
//! All tables produced here are aligned with the lexicographic enumeration
//! returned by [`enumerate_permutations`].

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Largest group that may be enumerated (8! = 40320 permutations).
pub const ENUMERATION_CAP: usize = 8;

/// Absolute tolerance for treating a loss as zero.
pub const ZERO_LOSS_TOL: f64 = 1e-12;

/// A full ranking of `m` documents. `ranks()[i]` is the 1-based position
/// assigned to document `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    ranks: Vec<usize>,
}

impl Permutation {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        let m = ranks.len();
        let mut seen = vec![false; m];
        for &r in &ranks {
            if r < 1 || r > m || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::contract(format!(
                    "{ranks:?} is not a permutation of 1..={m}"
                )));
            }
        }
        Ok(Permutation { ranks })
    }

    pub fn identity(m: usize) -> Self {
        Permutation {
            ranks: (1..=m).collect(),
        }
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Document indices listed from the top position down.
    pub fn ordering(&self) -> Vec<usize> {
        let mut order = vec![0; self.ranks.len()];
        for (doc, &r) in self.ranks.iter().enumerate() {
            order[r - 1] = doc;
        }
        order
    }

    /// Inverse of [`Permutation::ordering`].
    pub fn from_ordering(order: &[usize]) -> Result<Self> {
        let mut ranks = vec![0; order.len()];
        for (pos, &doc) in order.iter().enumerate() {
            if doc >= order.len() {
                return Err(Error::contract(format!("{order:?} is not an ordering")));
            }
            ranks[doc] = pos + 1;
        }
        Permutation::new(ranks)
    }
}

/// In-place lexicographic successor; false once the last permutation is reached.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn check_cap(m: usize) -> Result<()> {
    if m > ENUMERATION_CAP {
        return Err(Error::Capacity {
            size: m,
            cap: ENUMERATION_CAP,
        });
    }
    if m == 0 {
        return Err(Error::contract(
            "cannot enumerate permutations of zero documents",
        ));
    }
    Ok(())
}

/// All `m!` rank vectors in lexicographic order.
pub fn enumerate_permutations(m: usize) -> Result<Vec<Permutation>> {
    check_cap(m)?;
    let mut current: Vec<usize> = (1..=m).collect();
    let mut out = Vec::with_capacity((1..=m).product());
    loop {
        out.push(Permutation {
            ranks: current.clone(),
        });
        if !next_permutation(&mut current) {
            break;
        }
    }
    Ok(out)
}

/// Shared, lazily built enumeration for `m` documents.
pub fn cached_permutations(m: usize) -> Result<&'static [Permutation]> {
    static CACHE: [OnceLock<Vec<Permutation>>; ENUMERATION_CAP + 1] =
        [const { OnceLock::new() }; ENUMERATION_CAP + 1];
    check_cap(m)?;
    Ok(CACHE[m].get_or_init(|| enumerate_permutations(m).expect("m checked against cap")))
}

/// Discount for 1-based rank position `pos`: log 2 / log(pos + 1).
#[inline]
pub fn discount(pos: usize) -> f64 {
    std::f64::consts::LN_2 / ((pos + 1) as f64).ln()
}

fn check_lengths(y: &Permutation, r: &[u32]) -> Result<()> {
    if y.len() != r.len() {
        return Err(Error::contract(format!(
            "permutation has {} entries, relevance vector has {}",
            y.len(),
            r.len()
        )));
    }
    Ok(())
}

/// Precomputed pieces of NDCG for one relevance vector.
struct NdcgScorer<'a> {
    r: &'a [u32],
    /// Discounts of positions `1..=min(k, m)`.
    discounts: Vec<f64>,
    ideal: f64,
}

impl<'a> NdcgScorer<'a> {
    fn new(r: &'a [u32], k: usize) -> Self {
        let discounts: Vec<f64> = (1..=k.min(r.len())).map(discount).collect();
        let mut sorted: Vec<u32> = r.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let ideal = sorted
            .iter()
            .zip(&discounts)
            .map(|(&g, d)| g as f64 * d)
            .sum();
        NdcgScorer {
            r,
            discounts,
            ideal,
        }
    }

    // Summed in position order, like the normalizer, so an ideal ordering
    // reproduces it bit for bit. `by_pos` is scratch space.
    fn score(&self, y: &Permutation, by_pos: &mut Vec<u32>) -> f64 {
        if self.ideal == 0.0 {
            return 0.0;
        }
        by_pos.clear();
        by_pos.resize(y.len(), 0);
        for (doc, &pos) in y.ranks.iter().enumerate() {
            by_pos[pos - 1] = self.r[doc];
        }
        let dcg: f64 = by_pos
            .iter()
            .zip(&self.discounts)
            .map(|(&g, d)| g as f64 * d)
            .sum();
        (dcg / self.ideal).min(1.0)
    }
}

/// NDCG with raw grades as gains. Zero when every grade is zero.
pub fn ndcg(y: &Permutation, r: &[u32]) -> Result<f64> {
    ndcg_at_k(y, r, r.len().max(1))
}

/// NDCG restricted to positions `1..=k`, normalized by the ideal DCG at
/// `min(k, m)`.
pub fn ndcg_at_k(y: &Permutation, r: &[u32], k: usize) -> Result<f64> {
    check_lengths(y, r)?;
    if k == 0 {
        return Err(Error::contract("NDCG truncation k must be >= 1"));
    }
    Ok(NdcgScorer::new(r, k).score(y, &mut Vec::new()))
}

/// Task loss `1 - NDCG`. A query with no relevant document has no preferred
/// ordering, so every permutation has zero loss there.
pub fn loss(y: &Permutation, r: &[u32]) -> Result<f64> {
    check_lengths(y, r)?;
    if r.iter().all(|&g| g == 0) {
        return Ok(0.0);
    }
    Ok(1.0 - ndcg(y, r)?)
}

/// Ranks by decreasing relevance, ties by ascending document index.
pub fn ideal_permutation(r: &[u32]) -> Permutation {
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[b].cmp(&r[a]).then(a.cmp(&b)));
    Permutation::from_ordering(&order).expect("sorted indices form an ordering")
}

/// Losses aligned with an enumeration of permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    losses: Vec<f64>,
}

impl LossTable {
    pub fn new(r: &[u32], perms: &[Permutation]) -> Result<Self> {
        if let Some(y) = perms.iter().find(|y| y.len() != r.len()) {
            check_lengths(y, r)?;
        }
        let losses = if r.iter().all(|&g| g == 0) {
            vec![0.0; perms.len()]
        } else {
            let scorer = NdcgScorer::new(r, r.len());
            let mut scratch = Vec::with_capacity(r.len());
            perms
                .iter()
                .map(|y| 1.0 - scorer.score(y, &mut scratch))
                .collect()
        };
        Ok(LossTable { losses })
    }

    pub fn from_values(losses: Vec<f64>) -> Self {
        LossTable { losses }
    }

    pub fn values(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// Every entry is (numerically) zero: the query carries no ranking signal.
    pub fn is_identically_zero(&self) -> bool {
        self.losses.iter().all(|&l| l.abs() <= ZERO_LOSS_TOL)
    }

    pub fn zero_loss_indices(&self) -> Vec<usize> {
        self.losses
            .iter()
            .enumerate()
            .filter(|(_, &l)| l.abs() <= ZERO_LOSS_TOL)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Indices into `perms` of every permutation with zero loss.
pub fn zero_loss_set(r: &[u32], perms: &[Permutation]) -> Result<Vec<usize>> {
    Ok(LossTable::new(r, perms)?.zero_loss_indices())
}

/// `q_j = exp(-l_j / T) / Z_t`, aligned with a loss table.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    probs: Vec<f64>,
    temperature: f64,
}

impl TargetDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&q| q > 0.0)
            .map(|&q| q * q.ln())
            .sum::<f64>()
    }
}

pub fn target_distribution(losses: &[f64], temperature: f64) -> Result<TargetDistribution> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::contract(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if losses.is_empty() {
        return Err(Error::contract(
            "target distribution over an empty loss table",
        ));
    }
    let logits: Vec<f64> = losses.iter().map(|&l| -l / temperature).collect();
    let log_z = log_sum_exp(&logits);
    let probs = logits.iter().map(|&x| (x - log_z).exp()).collect();
    Ok(TargetDistribution { probs, temperature })
}
