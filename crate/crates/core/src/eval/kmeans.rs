//! Lloyd's k-means with k-means++ seeding and restarts.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{RecpError, Result};
use crate::numcore::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            restarts: 10,
            max_iter: 100,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: DenseMatrix,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<R: Rng + ?Sized>(e: &DenseMatrix, k: usize, rng: &mut R) -> DenseMatrix {
    let (n, p) = e.shape();
    let mut centroids = DenseMatrix::zeros(k, p);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(e.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(e.row(i), e.row(first))).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a centre
            Err(_) => rng.random_range(0..n),
        };
        centroids.row_mut(c).copy_from_slice(e.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(e.row(i), e.row(pick)));
        }
    }
    centroids
}

fn lloyd(e: &DenseMatrix, mut centroids: DenseMatrix, max_iter: usize) -> KMeansResult {
    let (n, p) = e.shape();
    let k = centroids.rows();
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(e.row(i), &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        trace.push(dists.iter().sum());
        if !changed {
            break;
        }

        let mut sums = DenseMatrix::zeros(k, p);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            sums.row_mut(labels[i])
                .iter_mut()
                .zip(e.row(i))
                .for_each(|(s, x)| *s += x);
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                centroids.row_mut(c).copy_from_slice(e.row(far));
            }
        }
    }
    let inertia = *trace.last().unwrap_or(&0.0);
    KMeansResult {
        labels,
        centroids,
        inertia,
        trace,
    }
}

/// Best-inertia clustering over `cfg.restarts` seeded runs.
pub fn kmeans(e: &DenseMatrix, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = e.rows();
    if cfg.k == 0 || cfg.k > n {
        return Err(RecpError::InvalidInput(format!(
            "k-means needs 1 <= k <= n, got k={} n={n}",
            cfg.k
        )));
    }
    if !e.is_finite() {
        return Err(RecpError::InvalidInput("k-means input is not finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let init = plus_plus(e, cfg.k, &mut rng);
        let run = lloyd(e, init, cfg.max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn inertia(e: &DenseMatrix, labels: &[usize], k: usize) -> f64 {
    let p = e.cols();
    let mut sums = DenseMatrix::zeros(k, p);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        sums.row_mut(l).iter_mut().zip(e.row(i)).for_each(|(s, x)| *s += x);
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let c: Vec<f64> = sums.row(l).iter().map(|s| s / counts[l] as f64).collect();
            sq_dist(e.row(i), &c)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::nmi;

    #[test]
    fn separated_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = DenseMatrix::from_fn(40, 2, |r, _| {
            let centre = if r < 20 { 0.0 } else { 100.0 };
            centre + rng.random_range(-1.0..1.0)
        });
        let truth: Vec<usize> = (0..40).map(|r| usize::from(r >= 20)).collect();
        let res = kmeans(&e, &KMeansConfig::new(2, 0)).unwrap();
        assert_eq!(nmi(&res.labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn k_equals_n() {
        let e = DenseMatrix::from_fn(6, 3, |r, c| (r * 7 + c * c) as f64);
        let res = kmeans(&e, &KMeansConfig::new(6, 1)).unwrap();
        assert_eq!(res.inertia, 0.0);
        let mut l = res.labels.clone();
        l.sort();
        assert_eq!(l, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn k_too_large() {
        let e = DenseMatrix::zeros(3, 2);
        assert!(kmeans(&e, &KMeansConfig::new(4, 0)).is_err());
        assert!(kmeans(&e, &KMeansConfig::new(0, 0)).is_err());
    }

    #[test]
    fn trace_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = DenseMatrix::from_fn(60, 4, |_, _| rng.random_range(-1.0..1.0));
        let res = kmeans(&e, &KMeansConfig::new(5, 2)).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!((inertia(&e, &res.labels, 5) - res.inertia).abs() < 1e-9);
    }

    #[test]
    fn duplicate_points() {
        let e = DenseMatrix::filled(5, 2, 1.0);
        let res = kmeans(&e, &KMeansConfig::new(3, 0)).unwrap();
        assert_eq!(res.inertia, 0.0);
    }
}
