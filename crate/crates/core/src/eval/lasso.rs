//! Lasso by cyclic coordinate descent, with nested cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{RecpError, Result};
use crate::numcore::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoConfig {
    pub fit_intercept: bool,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            fit_intercept: true,
            tol: 1e-8,
            max_sweeps: 2_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>()
    }

    pub fn predict(&self, x: &DenseMatrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// `(1/2m) ||y - Xw - b||^2 + alpha ||w||_1`.
pub fn lasso_objective(x: &DenseMatrix, y: &[f64], w: &[f64], b: f64, alpha: f64) -> f64 {
    let m = x.rows() as f64;
    let sse: f64 = (0..x.rows())
        .map(|i| {
            let pred = b + x.row(i).iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            (y[i] - pred).powi(2)
        })
        .sum();
    sse / (2.0 * m) + alpha * w.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_xy(x: &DenseMatrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(RecpError::Dimension {
            op: "lasso",
            left: x.shape(),
            right: (y.len(), 1),
        });
    }
    if x.rows() == 0 {
        return Err(RecpError::InvalidInput("lasso on zero rows".into()));
    }
    Ok(())
}

/// Coordinate descent from `warm` (or zeros). Each sweep updates every
/// weight once and then the intercept; stops once no coordinate moves by
/// more than `tol` relative to the largest coefficient.
pub fn lasso_fit_from(
    x: &DenseMatrix,
    y: &[f64],
    alpha: f64,
    cfg: &LassoConfig,
    warm: Option<&LassoFit>,
) -> Result<LassoFit> {
    check_xy(x, y)?;
    let (m, p) = x.shape();
    let mf = m as f64;
    let mut w = warm.map_or_else(|| vec![0.0; p], |f| f.weights.clone());
    let mut b = if cfg.fit_intercept {
        warm.map_or(0.0, |f| f.intercept)
    } else {
        0.0
    };
    let xt = x.transpose();
    let col_sq: Vec<f64> = (0..p).map(|j| xt.row(j).iter().map(|v| v * v).sum::<f64>() / mf).collect();
    let mut r: Vec<f64> = (0..m)
        .map(|i| y[i] - b - x.row(i).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>())
        .collect();

    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                w[j] = 0.0;
                continue;
            }
            let col = xt.row(j);
            let rho = col.iter().zip(&r).map(|(a, ri)| a * ri).sum::<f64>() / mf + col_sq[j] * w[j];
            let new = soft_threshold(rho, alpha) / col_sq[j];
            let delta = new - w[j];
            if delta != 0.0 {
                r.iter_mut().zip(col).for_each(|(ri, a)| *ri -= delta * a);
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if cfg.fit_intercept {
            let shift = r.iter().sum::<f64>() / mf;
            if shift != 0.0 {
                r.iter_mut().for_each(|ri| *ri -= shift);
                b += shift;
                max_delta = max_delta.max(shift.abs());
            }
        }
        let scale = w.iter().fold(b.abs(), |m, v| m.max(v.abs())).max(1.0);
        if max_delta <= cfg.tol * scale {
            break;
        }
    }
    Ok(LassoFit {
        weights: w,
        intercept: b,
        sweeps,
    })
}

pub fn lasso_fit(x: &DenseMatrix, y: &[f64], alpha: f64, cfg: &LassoConfig) -> Result<LassoFit> {
    lasso_fit_from(x, y, alpha, cfg, None)
}

/// Column scaling fitted on a training split: mean 0, population std 1,
/// constant columns mapped to 0.
#[derive(Clone, Debug)]
pub struct ColumnScaler {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl ColumnScaler {
    pub fn fit(x: &DenseMatrix) -> Self {
        let (m, p) = x.shape();
        let mut mean = vec![0.0; p];
        let mut inv_std = vec![0.0; p];
        for j in 0..p {
            let mu = (0..m).map(|i| x.get(i, j)).sum::<f64>() / m as f64;
            let var = (0..m).map(|i| (x.get(i, j) - mu).powi(2)).sum::<f64>() / m as f64;
            mean[j] = mu;
            inv_std[j] = if var.sqrt() > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
        }
        ColumnScaler { mean, inv_std }
    }

    pub fn transform(&self, x: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| (x.get(i, j) - self.mean[j]) * self.inv_std[j])
    }
}

/// `max_j |X_j^T (y - mean(y))| / m` for a centred design: the smallest
/// penalty at which every weight is zero.
pub fn alpha_max(x: &DenseMatrix, y: &[f64]) -> f64 {
    let m = x.rows() as f64;
    let ybar = y.iter().sum::<f64>() / m;
    (0..x.cols())
        .map(|j| {
            (0..x.rows())
                .map(|i| x.get(i, j) * (y[i] - ybar))
                .sum::<f64>()
                .abs()
                / m
        })
        .fold(0.0, f64::max)
}

/// `count` log-spaced values from `1e-3 * a_max` to `10 * a_max`, descending.
pub fn alpha_grid(a_max: f64, count: usize) -> Vec<f64> {
    if a_max <= 0.0 {
        return vec![0.0];
    }
    let (lo, hi) = ((1e-3 * a_max).ln(), (10.0 * a_max).ln());
    (0..count)
        .map(|i| {
            let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            (hi + t * (lo - hi)).exp()
        })
        .collect()
}

/// Shuffled `0..n` split into `folds` near-equal contiguous parts.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..folds)
        .map(|f| idx[f * n / folds..(f + 1) * n / folds].to_vec())
        .collect()
}

fn complement(n: usize, held: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    held.iter().for_each(|&i| mask[i] = false);
    (0..n).filter(|&i| mask[i]).collect()
}

fn pick(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

/// Regularization picked by `inner` fold CV over the alpha grid of the
/// (already scaled) training design.
pub fn select_alpha(x: &DenseMatrix, y: &[f64], inner: usize, seed: u64, cfg: &LassoConfig) -> Result<f64> {
    let grid = alpha_grid(alpha_max(x, y), 20);
    let n = x.rows();
    let mut mse = vec![0.0; grid.len()];
    for held in fold_indices(n, inner, seed) {
        let train = complement(n, &held);
        let (xt, yt) = (x.select_rows(&train), pick(y, &train));
        let (xv, yv) = (x.select_rows(&held), pick(y, &held));
        let mut warm: Option<LassoFit> = None;
        for (g, &a) in grid.iter().enumerate() {
            let fit = lasso_fit_from(&xt, &yt, a, cfg, warm.as_ref())?;
            mse[g] += fit
                .predict(&xv)
                .iter()
                .zip(&yv)
                .map(|(p, t)| (p - t).powi(2))
                .sum::<f64>();
            warm = Some(fit);
        }
    }
    let best = (0..grid.len())
        .min_by(|&a, &b| mse[a].total_cmp(&mse[b]))
        .expect("non-empty grid");
    Ok(grid[best])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldScore {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub alpha: f64,
}

/// Outer `folds`-fold CV of the lasso pipeline.
pub fn lasso_cv_folds(e: &DenseMatrix, y: &[f64], folds: usize, seed: u64) -> Result<Vec<FoldScore>> {
    check_xy(e, y)?;
    let n = e.rows();
    if folds < 2 || n < folds {
        return Err(RecpError::InvalidInput(format!(
            "cross-validation needs 2 <= folds <= n, got folds={folds} n={n}"
        )));
    }
    let ybar = y.iter().sum::<f64>() / n as f64;
    if y.iter().all(|v| (v - ybar).abs() < 1e-12) {
        return Err(RecpError::InvalidInput("target is constant, R^2 undefined".into()));
    }
    let cfg = LassoConfig::default();
    let mut scores = Vec::with_capacity(folds);
    for (f, held) in fold_indices(n, folds, seed).into_iter().enumerate() {
        let train = complement(n, &held);
        let raw_train = e.select_rows(&train);
        let scaler = ColumnScaler::fit(&raw_train);
        let xt = scaler.transform(&raw_train);
        let yt = pick(y, &train);
        let alpha = select_alpha(&xt, &yt, 3, seed ^ (f as u64 + 1).wrapping_mul(0x9e37_79b9), &cfg)?;
        let fit = lasso_fit(&xt, &yt, alpha, &cfg)?;
        let pred = fit.predict(&scaler.transform(&e.select_rows(&held)));
        let truth = pick(y, &held);
        let k = truth.len() as f64;
        let mae = pred.iter().zip(&truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / k;
        let sse = pred.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
        let tbar = truth.iter().sum::<f64>() / k;
        let sst = truth.iter().map(|t| (t - tbar).powi(2)).sum::<f64>();
        if sst == 0.0 {
            return Err(RecpError::InvalidInput(format!(
                "held-out fold {f} has a constant target, R^2 undefined"
            )));
        }
        scores.push(FoldScore {
            mae,
            rmse: (sse / k).sqrt(),
            r2: 1.0 - sse / sst,
            alpha,
        });
    }
    Ok(scores)
}
