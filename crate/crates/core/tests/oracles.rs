use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use recp::eval::kmeans::{inertia, kmeans, KMeansConfig};
use recp::eval::lasso::{alpha_max, lasso_fit, lasso_fit_from, lasso_objective, LassoConfig};
use recp::eval::metrics::{ari, f_measure, nmi};
use recp::eval::{evaluate_clustering, EvalConfig};
use recp::numcore::DenseMatrix;

fn planted_points() -> DenseMatrix {
    let centres = [(0.0, 0.0), (3.0, 0.5), (1.2, 2.8)];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.9).unwrap();
    let mut v = Vec::new();
    for (cx, cy) in centres {
        for _ in 0..4 {
            v.push(cx + noise.sample(&mut rng));
            v.push(cy + noise.sample(&mut rng));
        }
    }
    DenseMatrix::from_vec(12, 2, v).unwrap()
}

#[test]
fn kmeans_reaches_exhaustive_optimum() {
    let x = planted_points();
    let mut best = f64::INFINITY;
    let mut labels = [0usize; 12];
    for code in 0..3usize.pow(12) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % 3;
            c /= 3;
        }
        if (0..3).all(|k| labels.contains(&k)) {
            best = best.min(inertia(&x, &labels, 3));
        }
    }
    let got = kmeans(&x, &KMeansConfig::new(3, 0)).unwrap();
    assert!((got.inertia - best).abs() < 1e-9, "{} vs {best}", got.inertia);
}

#[test]
fn kmeans_inertia_nonincreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = DenseMatrix::from_fn(60, 3, |_, _| rng.random_range(-1.0..1.0));
    for seed in 0..5 {
        let r = kmeans(&x, &KMeansConfig::new(5, seed)).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", r.trace);
    }
}

fn toy_design(seed: u64, m: usize, p: usize) -> (DenseMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DenseMatrix::from_fn(m, p, |_, _| rng.random_range(-2.0..2.0));
    let y = (0..m)
        .map(|i| 0.5 + x.row(i).iter().enumerate().map(|(j, v)| v * (j as f64 - 1.2)).sum::<f64>() + rng.random_range(-0.5..0.5))
        .collect();
    (x, y)
}

#[test]
fn lasso_sweeps_never_raise_objective() {
    let (x, y) = toy_design(13, 40, 6);
    let one = LassoConfig {
        max_sweeps: 1,
        ..LassoConfig::default()
    };
    for alpha in [0.0, 0.05, 0.3] {
        let mut fit = lasso_fit_from(&x, &y, alpha, &one, None).unwrap();
        let mut last = lasso_objective(&x, &y, &fit.weights, fit.intercept, alpha);
        for _ in 0..50 {
            fit = lasso_fit_from(&x, &y, alpha, &one, Some(&fit)).unwrap();
            let now = lasso_objective(&x, &y, &fit.weights, fit.intercept, alpha);
            assert!(now <= last + 1e-12, "{now} > {last}");
            last = now;
        }
    }
}

#[test]
fn penalty_above_alpha_max_predicts_mean() {
    let (x, y) = toy_design(14, 30, 4);
    let a = alpha_max(&x, &y);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    for alpha in [a, 2.0 * a] {
        let fit = lasso_fit(&x, &y, alpha, &LassoConfig::default()).unwrap();
        assert!(fit.weights.iter().all(|w| *w == 0.0));
        assert!(fit.predict(&x).iter().all(|p| (p - mean).abs() < 1e-12));
    }
    let below = lasso_fit(&x, &y, 0.9 * a, &LassoConfig::default()).unwrap();
    assert!(below.weights.iter().any(|w| *w != 0.0));
}

#[test]
fn one_hot_embedding_recovers_labels() {
    let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let e = DenseMatrix::from_fn(40, 4, |i, j| if truth[i] == j { 1.0 } else { 0.0 });
    let r = evaluate_clustering(&e, &truth, &EvalConfig::default()).unwrap();
    assert_eq!(r.nmi.mean, 1.0);
    assert_eq!(r.ari.mean, 1.0);
    assert_eq!(r.f_measure.mean, 1.0);
    assert_eq!(r.nmi.runs.len(), 10);
}

#[test]
fn random_embedding_ari_near_zero() {
    let truth: Vec<usize> = (0..80).map(|i| i % 4).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let e = DenseMatrix::from_fn(80, 8, |_, _| rng.random_range(-1.0..1.0));
    let r = evaluate_clustering(&e, &truth, &EvalConfig::default()).unwrap();
    assert!(r.ari.mean.abs() < 0.1, "{}", r.ari);
}

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

proptest! {
    #[test]
    fn metrics_ignore_label_ids(
        (a, b) in (2..30usize).prop_flat_map(|n| (labels(n, 5), labels(n, 5))),
        perm_a in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
        perm_b in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let a2: Vec<usize> = a.iter().map(|&l| perm_a[l] + 10).collect();
        let b2: Vec<usize> = b.iter().map(|&l| perm_b[l]).collect();
        prop_assert!((nmi(&a, &b).unwrap() - nmi(&a2, &b2).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&a, &b).unwrap() - ari(&a2, &b2).unwrap()).abs() < 1e-12);
        prop_assert!((f_measure(&a, &b).unwrap() - f_measure(&a2, &b2).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
    }
}
