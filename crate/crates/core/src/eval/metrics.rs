//! Agreement between two labelings.

use std::collections::HashMap;

use crate::error::{RecpError, Result};

/// Pair counts over all `n(n-1)/2` unordered item pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairCounts {
    /// Same cluster in both labelings.
    pub same_both: u64,
    /// Same cluster in `a` only.
    pub same_a_only: u64,
    /// Same cluster in `b` only.
    pub same_b_only: u64,
    pub different_both: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.same_both + self.same_a_only + self.same_b_only + self.different_both
    }

    pub fn same_a(&self) -> u64 {
        self.same_both + self.same_a_only
    }

    pub fn same_b(&self) -> u64 {
        self.same_both + self.same_b_only
    }
}

/// Sparse contingency table with its marginals.
#[derive(Clone, Debug)]
pub struct Contingency {
    pub n: u64,
    pub cells: HashMap<(usize, usize), u64>,
    pub rows: HashMap<usize, u64>,
    pub cols: HashMap<usize, u64>,
}

impl Contingency {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(RecpError::InvalidInput(format!(
                "labelings differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(RecpError::InvalidInput("empty labeling".into()));
        }
        let mut cells = HashMap::new();
        let mut rows = HashMap::new();
        let mut cols = HashMap::new();
        for (&x, &y) in a.iter().zip(b) {
            *cells.entry((x, y)).or_insert(0) += 1;
            *rows.entry(x).or_insert(0) += 1;
            *cols.entry(y).or_insert(0) += 1;
        }
        Ok(Contingency {
            n: a.len() as u64,
            cells,
            rows,
            cols,
        })
    }

    pub fn pair_counts(&self) -> PairCounts {
        let c2 = |v: u64| v * v.saturating_sub(1) / 2;
        let same_both: u64 = self.cells.values().map(|&v| c2(v)).sum();
        let same_a: u64 = self.rows.values().map(|&v| c2(v)).sum();
        let same_b: u64 = self.cols.values().map(|&v| c2(v)).sum();
        let total = c2(self.n);
        PairCounts {
            same_both,
            same_a_only: same_a - same_both,
            same_b_only: same_b - same_both,
            different_both: total + same_both - same_a - same_b,
        }
    }
}

fn entropy<'a>(counts: impl Iterator<Item = &'a u64>, n: f64) -> f64 {
    counts
        .map(|&c| {
            let p = c as f64 / n;
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// `I(a;b) / sqrt(H(a) H(b))`. Two single-cluster labelings score 1; a
/// single cluster against anything else scores 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    let n = t.n as f64;
    let ha = entropy(t.rows.values(), n);
    let hb = entropy(t.cols.values(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = t
        .cells
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let px = t.rows[&x] as f64 / n;
            let py = t.cols[&y] as f64 / n;
            pxy * (pxy / (px * py)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Adjusted Rand index from pair counts. Returns 1 when the expected and
/// maximal index coincide.
pub fn ari_from_pairs(p: &PairCounts) -> f64 {
    let total = p.total() as f64;
    if total == 0.0 {
        return 1.0;
    }
    let (sa, sb) = (p.same_a() as f64, p.same_b() as f64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (p.same_both as f64 - expected) / (max - expected)
}

pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    Ok(ari_from_pairs(&Contingency::new(a, b)?.pair_counts()))
}

/// Pairwise F1: precision and recall of the same-cluster pairs of `a`
/// against those of `b`. Two all-singleton labelings score 1.
pub fn f_from_pairs(p: &PairCounts) -> f64 {
    let denom = p.same_a() + p.same_b();
    if denom == 0 {
        return 1.0;
    }
    2.0 * p.same_both as f64 / denom as f64
}

pub fn f_measure(a: &[usize], b: &[usize]) -> Result<f64> {
    Ok(f_from_pairs(&Contingency::new(a, b)?.pair_counts()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_labelings() {
        let a = [0, 0, 1, 1, 2, 2, 2];
        assert_eq!(nmi(&a, &a).unwrap(), 1.0);
        assert!((ari(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(f_measure(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn crossed_four_items() {
        // pairs: (01) a-only, (23) a-only, (02) b-only, (13) b-only, (03),(12) neither
        let (a, b) = ([0, 0, 1, 1], [0, 1, 0, 1]);
        let p = Contingency::new(&a, &b).unwrap().pair_counts();
        assert_eq!(
            p,
            PairCounts {
                same_both: 0,
                same_a_only: 2,
                same_b_only: 2,
                different_both: 2
            }
        );
        // expected index 2*2/6, max 2
        assert!((ari(&a, &b).unwrap() - (-0.5)).abs() < 1e-15);
        assert_eq!(nmi(&a, &b).unwrap(), 0.0);
        assert_eq!(f_measure(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn single_cluster_conventions() {
        assert_eq!(nmi(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(ari(&[0, 0, 0], &[5, 5, 5]).unwrap(), 1.0);
        assert_eq!(f_measure(&[0, 1, 2], &[2, 1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(nmi(&[0, 1], &[0]).is_err());
        assert!(ari(&[], &[]).is_err());
    }
}
