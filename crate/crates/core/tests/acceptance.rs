//! Acceptance suite. One line per criterion; exits non-zero when a criterion
//! fails unless it is listed in `KNOWN_UNMET`.
//!
//! Criterion 7 needs the NYC data set: point `RECP_NYC_DIR` at a directory
//! with `pois.csv`, `trips.csv`, `checkins.csv` and `labels.csv`.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recp::data::{CityData, DataShape, ViewFeatures};
use recp::eval::lasso::{lasso_fit, lasso_objective, LassoConfig};
use recp::eval::metrics::{ari, f_measure, nmi};
use recp::eval::{evaluate_clustering, evaluate_popularity, EvalConfig};
use recp::losses::{inter_contrastive_value, joint_distribution, marginal_entropies, mutual_information};
use recp::numcore::{DenseMatrix, GradCheckConfig};
use recp::synth::{generate_city, City, CitySpec};
use recp::train::{grad_check_objective, train, Ablation, TrainConfig};

/// Criteria that are reported but not enforced; see the project notes.
const KNOWN_UNMET: &[u32] = &[5];

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

enum Outcome {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: u32,
    name: &'static str,
    outcome: Outcome,
    detail: String,
}

fn verdict(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn gradient_correctness() -> (Outcome, String) {
    let started = Instant::now();
    let features = generate_city(&CitySpec::toy()).unwrap().view_features().unwrap();
    let report = grad_check_objective(&TrainConfig::toy(), &features, &GradCheckConfig::default(), 0.1).unwrap();
    let took = started.elapsed();
    (
        verdict(report.max_rel_error < 1e-4 && took < Duration::from_secs(60)),
        format!(
            "max rel err {:.2e} over {} coords, {:.1}s",
            report.max_rel_error,
            report.coords_checked,
            took.as_secs_f64()
        ),
    )
}

fn loss_identities() -> (Outcome, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let alpha = 9.0;
    let (mut worst_id, mut worst_sum, mut min_mi, mut negative) = (0.0f64, 0.0f64, f64::INFINITY, false);
    for _ in 0..100 {
        let n = rng.random_range(2..30);
        let d = rng.random_range(2..9);
        let scale = rng.random_range(0.1..5.0);
        let za = DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale));
        let zm = DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale));
        let j = joint_distribution(&za, &zm).unwrap();
        let mi = mutual_information(&j);
        let (ha, hm) = marginal_entropies(&j);
        let l = inter_contrastive_value(&za, &zm, alpha).unwrap();
        worst_id = worst_id.max((l + mi + alpha * (ha + hm)).abs());
        worst_sum = worst_sum.max((j.m.sum() - 1.0).abs());
        negative |= j.m.as_slice().iter().any(|v| *v < 0.0);
        min_mi = min_mi.min(mi);
    }

    let mut rank_one = 0.0f64;
    for _ in 0..20 {
        let d = rng.random_range(2..9);
        let ra: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rm: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let za = DenseMatrix::from_fn(7, d, |_, c| ra[c]);
        let zm = DenseMatrix::from_fn(7, d, |_, c| rm[c]);
        rank_one = rank_one.max(mutual_information(&joint_distribution(&za, &zm).unwrap()).abs());
    }

    let one_hot = DenseMatrix::from_rows(&[[200.0, 0.0], [0.0, 200.0]]);
    let anchor = inter_contrastive_value(&one_hot, &one_hot, 9.0).unwrap();
    let anchor_err = (anchor + 19.0 * 2f64.ln()).abs();

    let ok = worst_id < 1e-9 && worst_sum < 1e-9 && !negative && min_mi >= -1e-9 && rank_one < 1e-9 && anchor_err < 1e-9;
    (
        verdict(ok),
        format!(
            "identity {worst_id:.1e}, |ΣM-1| {worst_sum:.1e}, min MI {min_mi:.1e}, rank-1 MI {rank_one:.1e}, anchor {anchor_err:.1e}"
        ),
    )
}

/// Canonical labelings of `n` items with at most `k` labels (first
/// occurrences in increasing order).
fn canonical_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn rec(n: usize, k: usize, next: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..(next + 1).min(k) {
            cur.push(l);
            rec(n, k, next.max(l + 1), cur, out);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut cur, &mut out);
    out
}

fn brute_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    let mut pab: HashMap<(usize, usize), f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
        *pab.entry((x, y)).or_default() += 1.0 / n;
    }
    let h = |m: &HashMap<usize, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let (ha, hb) = (h(&pa), h(&pb));
    if ha.abs() < 1e-15 && hb.abs() < 1e-15 {
        return 1.0;
    }
    if ha.abs() < 1e-15 || hb.abs() < 1e-15 {
        return 0.0;
    }
    let i: f64 = pab.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum();
    (i / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

/// ARI and pairwise F1 by enumerating every pair of items.
fn brute_pairs(a: &[usize], b: &[usize]) -> (f64, f64) {
    let (mut both, mut sa, mut sb, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let (x, y) = (a[i] == a[j], b[i] == b[j]);
            pairs += 1.0;
            sa += f64::from(u8::from(x));
            sb += f64::from(u8::from(y));
            both += f64::from(u8::from(x && y));
        }
    }
    let ari = if pairs == 0.0 {
        1.0
    } else {
        let expected = sa * sb / pairs;
        let max = (sa + sb) / 2.0;
        if max == expected {
            1.0
        } else {
            (both - expected) / (max - expected)
        }
    };
    let f = if sa + sb == 0.0 {
        1.0
    } else if both == 0.0 {
        0.0
    } else {
        let (p, r) = (both / sb, both / sa);
        2.0 * p * r / (p + r)
    };
    (ari, f)
}

fn grid_lasso_min(x: &DenseMatrix, y: &[f64], alpha: f64) -> f64 {
    let m = x.rows() as f64;
    let mean = |v: &dyn Fn(usize) -> f64| (0..x.rows()).map(v).sum::<f64>() / m;
    let (x0, x1, yb) = (mean(&|i| x.get(i, 0)), mean(&|i| x.get(i, 1)), mean(&|i| y[i]));
    let (mut g00, mut g01, mut g11, mut c0, mut c1, mut s) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.rows() {
        let (u, v, t) = (x.get(i, 0) - x0, x.get(i, 1) - x1, y[i] - yb);
        g00 += u * u / m;
        g01 += u * v / m;
        g11 += v * v / m;
        c0 += u * t / m;
        c1 += v * t / m;
        s += t * t / m;
    }
    let mut best = f64::INFINITY;
    for i in 0..=6000 {
        let w0 = -3.0 + i as f64 * 1e-3;
        for j in 0..=6000 {
            let w1 = -3.0 + j as f64 * 1e-3;
            let quad = s - 2.0 * (c0 * w0 + c1 * w1) + g00 * w0 * w0 + 2.0 * g01 * w0 * w1 + g11 * w1 * w1;
            best = best.min(0.5 * quad + alpha * (w0.abs() + w1.abs()));
        }
    }
    best
}

fn lasso_oracles() -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut grid_gap = 0.0f64;
    for _ in 0..3 {
        let m = 30;
        let x = DenseMatrix::from_fn(m, 2, |_, _| rng.random_range(-1.0..1.0));
        let (t0, t1) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..m)
            .map(|i| 0.3 + t0 * x.get(i, 0) + t1 * x.get(i, 1) + rng.random_range(-0.3..0.3))
            .collect();
        for alpha in [0.01, 0.1, 0.4] {
            let fit = lasso_fit(&x, &y, alpha, &LassoConfig::default()).unwrap();
            let cd = lasso_objective(&x, &y, &fit.weights, fit.intercept, alpha);
            grid_gap = grid_gap.max((cd - grid_lasso_min(&x, &y, alpha)).abs());
        }
    }

    let (m, p) = (20, 4);
    let mut q = DenseMatrix::from_fn(m, p, |_, _| rng.random_range(-1.0..1.0));
    for j in 0..p {
        for k in 0..j {
            let dot: f64 = (0..m).map(|i| q.get(i, j) * q.get(i, k)).sum();
            for i in 0..m {
                q.set(i, j, q.get(i, j) - dot * q.get(i, k));
            }
        }
        let norm = (0..m).map(|i| q.get(i, j).powi(2)).sum::<f64>().sqrt();
        for i in 0..m {
            q.set(i, j, q.get(i, j) / norm);
        }
    }
    let y: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let cfg = LassoConfig {
        fit_intercept: false,
        ..LassoConfig::default()
    };
    let fit = lasso_fit(&q, &y, 0.0, &cfg).unwrap();
    let ls_gap = (0..p)
        .map(|j| {
            let want: f64 = (0..m).map(|i| q.get(i, j) * y[i]).sum();
            (fit.weights[j] - want).abs()
        })
        .fold(0.0, f64::max);
    (grid_gap, ls_gap)
}

fn metric_oracles() -> (Outcome, String) {
    let (mut worst, mut pairs) = (0.0f64, 0usize);
    let mut check = |a: &[usize], b: &[usize]| {
        let (ba, bf) = brute_pairs(a, b);
        worst = worst
            .max((nmi(a, b).unwrap() - brute_nmi(a, b)).abs())
            .max((ari(a, b).unwrap() - ba).abs())
            .max((f_measure(a, b).unwrap() - bf).abs());
        pairs += 1;
    };
    for n in 1..=8 {
        let all = canonical_labelings(n, 3);
        for a in &all {
            for b in &all {
                check(a, b);
            }
        }
    }
    // raw label ids, not just canonical forms, for small n
    for n in 1..=4 {
        let all: Vec<Vec<usize>> = (0..3usize.pow(n as u32))
            .map(|mut c| {
                (0..n)
                    .map(|_| {
                        let l = c % 3;
                        c /= 3;
                        l
                    })
                    .collect()
            })
            .collect();
        for a in &all {
            for b in &all {
                check(a, b);
            }
        }
    }
    let (grid_gap, ls_gap) = lasso_oracles();
    (
        verdict(worst <= 1e-12 && grid_gap < 1e-4 && ls_gap < 1e-8),
        format!("{pairs} labeling pairs, max diff {worst:.1e}; lasso grid gap {grid_gap:.1e}, a=0 vs LS {ls_gap:.1e}"),
    )
}

struct SeedRun {
    nmi: f64,
    r2: f64,
}

fn full_and_ablated(city: &City, features: &ViewFeatures, variant: Ablation) -> (Vec<SeedRun>, Duration) {
    let eval = EvalConfig::default();
    let y = &city.checkin_vector().values;
    let mut runs = Vec::new();
    let mut timed = Duration::ZERO;
    for seed in SEEDS {
        let started = Instant::now();
        let cfg = TrainConfig {
            seed,
            ablation: variant,
            ..TrainConfig::default()
        };
        let e = train(&cfg, features).unwrap().embedding.e;
        let c = evaluate_clustering(&e, &city.truth.labels, &eval).unwrap();
        timed += started.elapsed();
        let r = evaluate_popularity(&e, y, &eval).unwrap();
        runs.push(SeedRun {
            nmi: c.nmi.mean,
            r2: r.r2.mean,
        });
    }
    (runs, timed)
}

fn random_baseline_r2(city: &City, width: usize) -> Vec<f64> {
    let y = &city.checkin_vector().values;
    SEEDS
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = DenseMatrix::from_fn(y.len(), width, |_, _| rng.random_range(-1.0..1.0));
            evaluate_popularity(&e, y, &EvalConfig::default()).unwrap().r2.mean
        })
        .collect()
}

fn nyc_scale() -> (Outcome, String) {
    let Some(dir) = std::env::var_os("RECP_NYC_DIR") else {
        return (Outcome::Skip, "RECP_NYC_DIR not set".into());
    };
    let city = CityData::load_dir(&dir, DataShape::default()).unwrap();
    let (Some(labels), Some(checkins)) = (city.labels.clone(), city.checkins.clone()) else {
        return (Outcome::Fail, "data directory lacks labels.csv or checkins.csv".into());
    };
    let features = ViewFeatures::new(&city.attributes, &city.outflow, &city.inflow).unwrap();
    let eval = EvalConfig {
        k: Some(29),
        ..EvalConfig::default()
    };
    let (mut nmis, mut r2s) = (Vec::new(), Vec::new());
    for seed in 1..=10 {
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let e = train(&cfg, &features).unwrap().embedding.e;
        nmis.push(evaluate_clustering(&e, &labels, &eval).unwrap().nmi.mean);
        r2s.push(evaluate_popularity(&e, &checkins.values, &eval).unwrap().r2.mean);
    }
    let nmi = nmis.iter().sum::<f64>() / 10.0;
    let r2 = r2s.iter().sum::<f64>() / 10.0;
    (
        verdict((0.73..=0.83).contains(&nmi) && (0.55..=0.72).contains(&r2)),
        format!("NMI {nmi:.3} (want 0.73..0.83), R² {r2:.3} (want 0.55..0.72)"),
    )
}

fn determinism() -> (Outcome, String) {
    let features = generate_city(&CitySpec::default()).unwrap().view_features().unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        seed: 1,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        train(&cfg, &features).unwrap().embedding.save(p).unwrap();
    }
    let (a, b) = (std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
    (verdict(a == b), format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let mut lines = Vec::new();
    let mut push = |id, name, (outcome, detail): (Outcome, String)| {
        lines.push(Line {
            id,
            name,
            outcome,
            detail,
        })
    };

    push(1, "gradient correctness", gradient_correctness());
    push(2, "loss identities", loss_identities());
    push(3, "metric oracles", metric_oracles());

    let city = generate_city(&CitySpec::default()).unwrap();
    let features = city.view_features().unwrap();
    let (full, full_time) = full_and_ablated(&city, &features, Ablation::Full);
    let mean_nmi = full.iter().map(|r| r.nmi).sum::<f64>() / full.len() as f64;
    let nmis: Vec<String> = full.iter().map(|r| format!("{:.3}", r.nmi)).collect();
    push(
        4,
        "synthetic recovery",
        (
            verdict(mean_nmi >= 0.70 && full_time < Duration::from_secs(300)),
            format!("mean NMI {mean_nmi:.3} [{}], {:.0}s", nmis.join(" "), full_time.as_secs_f64()),
        ),
    );

    let (no_iv, _) = full_and_ablated(&city, &features, Ablation::NoIv);
    let nmi_wins = full.iter().zip(&no_iv).filter(|(f, a)| f.nmi >= a.nmi).count();
    let r2_wins = full.iter().zip(&no_iv).filter(|(f, a)| f.r2 >= a.r2).count();
    let pairs: Vec<String> = full
        .iter()
        .zip(&no_iv)
        .map(|(f, a)| format!("{:.3}/{:.3}", f.r2, a.r2))
        .collect();
    push(
        5,
        "ablation ordering",
        (
            verdict(nmi_wins >= 4 && r2_wins >= 4),
            format!(
                "NMI full>=no_iv in {nmi_wins}/5, R² in {r2_wins}/5 (full/no_iv R²: {})",
                pairs.join(" ")
            ),
        ),
    );

    let random = random_baseline_r2(&city, 2 * TrainConfig::default().model.d);
    let margin = full.iter().zip(&random).map(|(f, r)| f.r2 - r).sum::<f64>() / full.len() as f64;
    let full_r2 = full.iter().map(|r| r.r2).sum::<f64>() / full.len() as f64;
    push(
        6,
        "popularity signal",
        (
            verdict(margin >= 0.2),
            format!("mean R² {full_r2:.3}, margin over random {margin:.3}"),
        ),
    );

    push(7, "NYC reproduction", nyc_scale());
    push(8, "determinism", determinism());

    let mut unexpected = 0;
    for l in &lines {
        let tag = match l.outcome {
            Outcome::Pass => "PASS",
            Outcome::Skip => "SKIP",
            Outcome::Fail if KNOWN_UNMET.contains(&l.id) => "FAIL (known)",
            Outcome::Fail => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {} {:<26} {:<12} {}", l.id, l.name, tag, l.detail);
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance criteria failed");
        std::process::exit(1);
    }
}
