//! Shared test oracles: naive re-scan counting, direct-formula statistics,
//! exhaustive CRF enumeration, and a tiny least-squares solver for probe
//! regressions. Everything here is deliberately the slow, obvious
//! implementation, independent of the library's code paths.

use std::collections::BTreeMap;

use babound::corpus::CharSequence;

/// Naive quadratic re-scan: every substring of each length, counted from
/// scratch with string slicing.
pub struct NaiveCounts {
    pub by_len: Vec<BTreeMap<String, u64>>,
    pub total_chars: u64,
}

pub fn naive_count(sentences: &[CharSequence], upto_len: usize) -> NaiveCounts {
    let mut by_len: Vec<BTreeMap<String, u64>> = (0..upto_len).map(|_| BTreeMap::new()).collect();
    let mut total_chars = 0u64;
    for s in sentences {
        let chars = s.chars();
        total_chars += chars.len() as u64;
        for len in 1..=upto_len.min(chars.len()) {
            for start in 0..=chars.len() - len {
                let gram: String = chars[start..start + len].iter().collect();
                *by_len[len - 1].entry(gram).or_insert(0) += 1;
            }
        }
    }
    NaiveCounts {
        by_len,
        total_chars,
    }
}

impl NaiveCounts {
    pub fn get(&self, gram: &str) -> Option<u64> {
        let len = gram.chars().count();
        if len == 0 || len > self.by_len.len() {
            return None;
        }
        self.by_len[len - 1].get(gram).copied()
    }

    /// PMI per the printed formula: probabilities first, then the ratio.
    /// This takes a different algebraic route than the implementation.
    pub fn pmi(&self, gram: &str) -> Option<f64> {
        let chars: Vec<char> = gram.chars().collect();
        if chars.len() == 1 {
            self.get(gram)?;
            return Some(1.0);
        }
        let t = self.total_chars as f64;
        let p_g = self.get(gram)? as f64 / t;
        let mut best = f64::INFINITY;
        for split in 1..chars.len() {
            let left: String = chars[..split].iter().collect();
            let right: String = chars[split..].iter().collect();
            let p_l = self.get(&left)? as f64 / t;
            let p_r = self.get(&right)? as f64 / t;
            best = best.min(p_g / (p_l * p_r));
        }
        Some(best)
    }
}

/// Adjacency maps gathered by scanning the sentences directly, not from
/// higher-order counts.
pub fn naive_adjacency(
    sentences: &[CharSequence],
    gram: &str,
) -> (BTreeMap<char, u64>, BTreeMap<char, u64>) {
    let g: Vec<char> = gram.chars().collect();
    let mut left = BTreeMap::new();
    let mut right = BTreeMap::new();
    for s in sentences {
        let chars = s.chars();
        if chars.len() < g.len() {
            continue;
        }
        for start in 0..=chars.len() - g.len() {
            if chars[start..start + g.len()] == g[..] {
                if start > 0 {
                    *left.entry(chars[start - 1]).or_insert(0) += 1;
                }
                if start + g.len() < chars.len() {
                    *right.entry(chars[start + g.len()]).or_insert(0) += 1;
                }
            }
        }
    }
    (left, right)
}

/// Entropy of a count map, written the obvious way.
pub fn naive_entropy(map: &BTreeMap<char, u64>) -> f64 {
    let total: u64 = map.values().sum();
    if total == 0 || map.len() <= 1 {
        return 0.0;
    }
    let mut h = 0.0;
    for &c in map.values() {
        let q = c as f64 / total as f64;
        h -= q * q.ln();
    }
    h
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Solves `(X^T X + ridge I) w = X^T y` by Gaussian elimination with
/// partial pivoting; the probe tests fit small linear maps with it.
pub fn least_squares(x: &[Vec<f64>], y: &[f64], ridge: f64) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len();
    assert_eq!(n, y.len());
    let mut a = vec![vec![0.0; d + 1]; d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for r in 0..n {
                s += x[r][i] * x[r][j];
            }
            a[i][j] = s + if i == j { ridge } else { 0.0 };
        }
        let mut s = 0.0;
        for r in 0..n {
            s += x[r][i] * y[r];
        }
        a[i][d] = s;
    }
    // elimination
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-12, "singular normal equations");
        for row in 0..d {
            if row == col {
                continue;
            }
            let f = a[row][col] / diag;
            for k in col..=d {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    (0..d).map(|i| a[i][d] / a[i][i]).collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
