//! Central-difference verification of tape gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::DenseMatrix;
use super::param::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{RecpError, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    pub max_coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            max_coords_per_tensor: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

/// Loss value and per-parameter gradients from one forward/backward pass.
pub fn analytic_gradients<F>(store: &ParamStore, loss_fn: &mut F) -> Result<(f64, Vec<DenseMatrix>)>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(store, &mut tape)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(RecpError::GradCheck(format!("loss is {value} at base point")));
    }
    let grads = tape.backward(loss)?;
    let mut scratch = store.clone();
    scratch.zero_grad();
    tape.accumulate_into(&grads, &mut scratch);
    Ok((value, scratch.iter().map(|p| p.grad.clone()).collect()))
}

fn eval_loss<F>(store: &ParamStore, loss_fn: &mut F) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(store, &mut tape)?;
    Ok(tape.value(loss).item())
}

/// Compare `analytic` against central differences of `loss_fn`.
///
/// The error per coordinate is `|a - n| / max(1, |a|, |n|)`; the maximum over
/// sampled coordinates is returned. `store` is restored before returning.
pub fn compare_gradients<F>(
    store: &mut ParamStore,
    analytic: &[DenseMatrix],
    loss_fn: &mut F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    if analytic.len() != store.len() {
        return Err(RecpError::GradCheck(format!(
            "{} analytic gradients for {} parameters",
            analytic.len(),
            store.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    for p in 0..store.len() {
        let len = store[p].len();
        let coords: Vec<usize> = if len <= cfg.max_coords_per_tensor {
            (0..len).collect()
        } else {
            let mut v = index::sample(&mut rng, len, cfg.max_coords_per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        for c in coords {
            let orig = store[p].value.as_slice()[c];
            store[p].value.as_mut_slice()[c] = orig + cfg.h;
            let plus = eval_loss(store, loss_fn);
            store[p].value.as_mut_slice()[c] = orig - cfg.h;
            let minus = eval_loss(store, loss_fn);
            store[p].value.as_mut_slice()[c] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(RecpError::GradCheck(format!(
                    "non-finite loss perturbing {}[{c}]: f+={plus}, f-={minus}",
                    store[p].name
                )));
            }
            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic[p].as_slice()[c];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coords_checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store[p].name.clone(), c));
            }
        }
    }
    Ok(report)
}

/// Analytic gradients from the tape checked against central differences.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut loss_fn: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let (_, analytic) = analytic_gradients(store, &mut loss_fn)?;
    compare_gradients(store, &analytic, &mut loss_fn, cfg)
}
