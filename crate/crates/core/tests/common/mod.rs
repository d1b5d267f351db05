//! Brute-force reference implementations used as test oracles.
//!
//! Nothing here calls into the library's objective, NDCG or enumeration code.

#![allow(dead_code)]

pub const LN2: f64 = std::f64::consts::LN_2;

/// All permutations of `0..m` as orderings (`order[pos] = doc`), by Heap's
/// algorithm.
pub fn orderings(m: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap(k - 1, a, out);
    }
    let mut a: Vec<usize> = (0..m).collect();
    let mut out = Vec::new();
    heap(m, &mut a, &mut out);
    out
}

/// Rank vector (1-based positions) from an ordering.
pub fn ranks_of(order: &[usize]) -> Vec<usize> {
    let mut r = vec![0; order.len()];
    for (pos, &doc) in order.iter().enumerate() {
        r[doc] = pos + 1;
    }
    r
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Raw-gain NDCG@k straight from the definition.
pub fn ndcg_k(ranks: &[usize], r: &[u32], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (i, &pos) in ranks.iter().enumerate() {
        if pos <= k {
            dcg += r[i] as f64 * LN2 / ((1 + pos) as f64).ln();
        }
    }
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| b.cmp(a));
    let mut ideal = 0.0;
    for (i, &g) in sorted.iter().enumerate().take(k) {
        ideal += g as f64 * LN2 / ((2 + i) as f64).ln();
    }
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

pub fn ndcg(ranks: &[usize], r: &[u32]) -> f64 {
    ndcg_k(ranks, r, r.len())
}

pub fn loss(ranks: &[usize], r: &[u32]) -> f64 {
    if r.iter().all(|&g| g == 0) {
        0.0
    } else {
        1.0 - ndcg(ranks, r)
    }
}

pub fn energy(ranks: &[usize], scores: &[f64]) -> f64 {
    -ranks
        .iter()
        .zip(scores)
        .map(|(&pos, &s)| LN2 / ((1 + pos) as f64).ln() * s)
        .sum::<f64>()
}

pub fn scores(theta: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter()
        .map(|row| row.iter().zip(theta).map(|(a, b)| a * b).sum())
        .collect()
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let z = lse(xs);
    xs.iter().map(|x| (x - z).exp()).collect()
}

#[derive(Clone, Copy, Debug)]
pub enum Obj {
    Ml,
    La(f64),
    Ls,
    El,
    Kl(f64),
}

/// Per-query objective value computed over every permutation from first
/// principles.
pub fn objective_value(obj: Obj, theta: &[f64], rows: &[Vec<f64>], r: &[u32]) -> f64 {
    let s = scores(theta, rows);
    let perms: Vec<Vec<usize>> = orderings(r.len()).iter().map(|o| ranks_of(o)).collect();
    let e: Vec<f64> = perms.iter().map(|y| energy(y, &s)).collect();
    let l: Vec<f64> = perms.iter().map(|y| loss(y, r)).collect();
    let zero: Vec<usize> = (0..l.len()).filter(|&j| l[j].abs() <= 1e-12).collect();
    let n0 = zero.len() as f64;
    match obj {
        Obj::Ml => {
            let neg: Vec<f64> = e.iter().map(|x| -x).collect();
            zero.iter().map(|&t| e[t]).sum::<f64>() + n0 * lse(&neg)
        }
        Obj::La(a) => {
            let neg: Vec<f64> = e.iter().zip(&l).map(|(x, li)| -(x - a * li)).collect();
            zero.iter().map(|&t| e[t] - a * l[t]).sum::<f64>() + n0 * lse(&neg)
        }
        Obj::Ls => {
            let e0 = zero.iter().map(|&t| e[t]).sum::<f64>() / n0;
            let neg: Vec<f64> = e
                .iter()
                .zip(&l)
                .map(|(x, li)| -(li * (x - e0) - li))
                .collect();
            lse(&neg)
        }
        Obj::El => {
            let neg: Vec<f64> = e.iter().map(|x| -x).collect();
            softmax(&neg).iter().zip(&l).map(|(p, li)| p * li).sum()
        }
        Obj::Kl(t) => {
            let q = softmax(&l.iter().map(|li| -li / t).collect::<Vec<_>>());
            let neg: Vec<f64> = e.iter().map(|x| -x).collect();
            let logz = lse(&neg);
            q.iter().zip(&e).map(|(qj, ej)| qj * (ej + logz)).sum()
        }
    }
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let a = f(&p);
            p[i] = x[i] - h;
            let b = f(&p);
            p[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = norm(a).max(norm(b));
    if s == 0.0 {
        0.0
    } else {
        norm(&d) / s
    }
}

/// Closed-form negative energy derivatives for the single-ground-truth
/// setting, before normalization.
pub fn closed_form_energy_derivatives(obj: Obj, e: &[f64], l: &[f64], gt: usize) -> Vec<f64> {
    let n = e.len();
    let p = softmax(&e.iter().map(|x| -x).collect::<Vec<_>>());
    let onehot = |j: usize| if j == gt { 1.0 } else { 0.0 };
    match obj {
        Obj::Ml => (0..n).map(|j| p[j] - onehot(j)).collect(),
        Obj::La(a) => {
            let pa = softmax(&(0..n).map(|j| -(e[j] - a * l[j])).collect::<Vec<_>>());
            (0..n).map(|j| pa[j] - onehot(j)).collect()
        }
        Obj::Ls => {
            let ps = softmax(
                &(0..n)
                    .map(|j| -(l[j] * (e[j] - e[gt]) - l[j]))
                    .collect::<Vec<_>>(),
            );
            let mean: f64 = (0..n).map(|j| ps[j] * l[j]).sum();
            (0..n).map(|j| ps[j] * l[j] - onehot(j) * mean).collect()
        }
        Obj::El => {
            let mean: f64 = (0..n).map(|j| p[j] * l[j]).sum();
            (0..n).map(|j| p[j] * (l[j] - mean)).collect()
        }
        Obj::Kl(t) => {
            let q = softmax(&l.iter().map(|x| -x / t).collect::<Vec<_>>());
            (0..n).map(|j| p[j] - q[j]).collect()
        }
    }
}

pub fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Deterministic xorshift generator so the oracle's instances do not depend on
/// the library's RNG choices.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        for i in (1..v.len()).rev() {
            let j = self.below(i + 1);
            v.swap(i, j);
        }
    }
}
