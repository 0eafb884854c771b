//! Training objectives: intra-view contrastive and reconstruction losses,
//! the joint-distribution inter-view contrastive loss and dual prediction.

use crate::error::{RecpError, Result};
use crate::model::DualPredictor;
use crate::numcore::{softmax_rows, DenseMatrix, NormMode, ParamStore, Tape, Var};

/// Floor applied inside every information-theoretic logarithm.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub mu: f64,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 0.5,
            mu: 1e-4,
            alpha: 9.0,
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        for (k, v) in [
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(RecpError::Config(format!("loss.{k} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(RecpError::Config(format!("loss.tau must be > 0, got {tau}")));
    }
    Ok(())
}

/// Multi-positive contrastive loss for one view.
///
/// For region `i` with positives `p_ik` and negatives `z_t` (`t ≠ i`), all
/// L2-normalized:
///
/// ```text
/// −log Σ_k exp(z_i·p_ik/τ) + log(Σ_k exp(z_i·p_ik/τ) + Σ_{t≠i} exp(z_i·z_t/τ))
/// ```
///
/// summed over regions. `positives[k]` holds the k-th positive of every region.
pub fn intra_contrastive(tape: &mut Tape, z: Var, positives: &[Var], tau: f64) -> Result<Var> {
    check_tau(tau)?;
    if positives.is_empty() {
        return Err(RecpError::InvalidInput("contrastive loss needs at least one positive".into()));
    }
    let n = tape.value(z).rows();
    let zn = tape.normalize_rows(z);
    let mut pos_sum: Option<Var> = None;
    for &p in positives {
        let pn = tape.normalize_rows(p);
        let prod = tape.mul(zn, pn)?;
        let dot = tape.sum_rows(prod);
        let logits = tape.scale(dot, 1.0 / tau);
        let e = tape.exp(logits);
        pos_sum = Some(match pos_sum {
            None => e,
            Some(acc) => tape.add(acc, e)?,
        });
    }
    let pos_sum = pos_sum.expect("non-empty positives");

    let znt = tape.transpose(zn);
    let sim = tape.matmul(zn, znt)?;
    let sim = tape.scale(sim, 1.0 / tau);
    let esim = tape.exp(sim);
    let off_diag = tape.constant(DenseMatrix::from_fn(n, n, |r, c| if r == c { 0.0 } else { 1.0 }));
    let neg = tape.mul(esim, off_diag)?;
    let neg_sum = tape.sum_rows(neg);

    let denom = tape.add(pos_sum, neg_sum)?;
    let log_pos = tape.log(pos_sum, f64::MIN_POSITIVE);
    let log_denom = tape.log(denom, f64::MIN_POSITIVE);
    let per_region = tape.sub(log_denom, log_pos)?;
    Ok(tape.sum_all(per_region))
}

/// `μ·l_a + l_m`.
pub fn intra_contrastive_total(l_a: f64, l_m: f64, mu: f64) -> f64 {
    mu * l_a + l_m
}

/// `Σ_i ‖x_i − x̂_i‖²`.
pub fn reconstruction(tape: &mut Tape, x: Var, x_hat: Var) -> Result<Var> {
    let diff = tape.sub(x, x_hat)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.sum_all(sq))
}

/// Joint distribution over embedding coordinates of the two views.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    pub m: DenseMatrix,
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
}

impl JointDistribution {
    /// Wraps a d×d matrix and computes its marginals.
    pub fn from_matrix(m: DenseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(RecpError::Dimension {
                op: "joint distribution (square)",
                left: m.shape(),
                right: (m.cols(), m.rows()),
            });
        }
        let d = m.rows();
        let row_marginals = (0..d).map(|r| m.row(r).iter().sum()).collect();
        let col_marginals = (0..d).map(|c| (0..d).map(|r| m.get(r, c)).sum()).collect();
        Ok(JointDistribution {
            m,
            row_marginals,
            col_marginals,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }
}

/// `M = (1/n) Σ_i softmax(z_a,i) softmax(z_m,i)ᵀ`.
pub fn joint_distribution(z_a: &DenseMatrix, z_m: &DenseMatrix) -> Result<JointDistribution> {
    z_a.check_same_shape("joint_distribution", z_m)?;
    let n = z_a.rows();
    if n == 0 {
        return Err(RecpError::InvalidInput("joint distribution of zero regions".into()));
    }
    let ba = softmax_rows(z_a);
    let bm = softmax_rows(z_m);
    let m = ba.transpose().matmul(&bm)?.scale(1.0 / n as f64);
    JointDistribution::from_matrix(m)
}

fn xlogy_floor(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.max(LOG_EPS).ln()
    }
}

/// `Σ_rr' M_rr' log(M_rr' / (M_r·M_r'))`.
pub fn mutual_information(j: &JointDistribution) -> f64 {
    let d = j.dim();
    let mut total = 0.0;
    for r in 0..d {
        for c in 0..d {
            let p = j.m.get(r, c);
            total += xlogy_floor(p, p) - xlogy_floor(p, j.row_marginals[r]) - xlogy_floor(p, j.col_marginals[c]);
        }
    }
    total
}

/// Entropies of the row (attribute) and column (mobility) marginals.
pub fn marginal_entropies(j: &JointDistribution) -> (f64, f64) {
    let h = |m: &[f64]| -m.iter().map(|&p| xlogy_floor(p, p)).sum::<f64>();
    (h(&j.row_marginals), h(&j.col_marginals))
}

/// Joint distribution `M` recorded on the tape.
pub fn joint_distribution_tape(tape: &mut Tape, z_a: Var, z_m: Var) -> Result<Var> {
    let n = tape.value(z_a).rows();
    if tape.value(z_a).shape() != tape.value(z_m).shape() {
        return Err(RecpError::Dimension {
            op: "joint_distribution",
            left: tape.value(z_a).shape(),
            right: tape.value(z_m).shape(),
        });
    }
    let ba = tape.softmax_rows(z_a);
    let bm = tape.softmax_rows(z_m);
    let bat = tape.transpose(ba);
    let m = tape.matmul(bat, bm)?;
    Ok(tape.scale(m, 1.0 / n as f64))
}

/// `−Σ_rr' M_rr' ln(M_rr' / (M_r^{α+1} · M_r'^{α+1}))`.
pub fn inter_contrastive(tape: &mut Tape, z_a: Var, z_m: Var, alpha: f64) -> Result<Var> {
    let m = joint_distribution_tape(tape, z_a, z_m)?;
    let row_marg = tape.sum_rows(m);
    let col_marg = tape.sum_cols(m);
    let log_m = tape.log(m, LOG_EPS);
    let log_r = tape.log(row_marg, LOG_EPS);
    let log_c = tape.log(col_marg, LOG_EPS);
    let log_r = tape.scale(log_r, -(alpha + 1.0));
    let log_c = tape.scale(log_c, -(alpha + 1.0));
    let ratio = tape.add_col_broadcast(log_m, log_r)?;
    let ratio = tape.add_row_broadcast(ratio, log_c)?;
    let weighted = tape.mul(m, ratio)?;
    let s = tape.sum_all(weighted);
    Ok(tape.scale(s, -1.0))
}

/// Value of [`inter_contrastive`] on plain matrices.
pub fn inter_contrastive_value(z_a: &DenseMatrix, z_m: &DenseMatrix, alpha: f64) -> Result<f64> {
    let mut t = Tape::new();
    let a = t.constant(z_a.clone());
    let m = t.constant(z_m.clone());
    let l = inter_contrastive(&mut t, a, m, alpha)?;
    Ok(t.value(l).item())
}

/// `Σ_i ‖z_m,i − F_a(z_a,i)‖² + ‖z_a,i − F_m(z_m,i)‖²`.
pub fn dual_prediction(
    tape: &mut Tape,
    store: &ParamStore,
    z_a: Var,
    z_m: Var,
    pred_a: &mut DualPredictor,
    pred_m: &mut DualPredictor,
    mode: NormMode,
) -> Result<Var> {
    let zm_hat = pred_a.predict_cross(tape, store, z_a, mode)?;
    let za_hat = pred_m.predict_cross(tape, store, z_m, mode)?;
    let l1 = reconstruction(tape, z_m, zm_hat)?;
    let l2 = reconstruction(tape, z_a, za_hat)?;
    tape.add(l1, l2)
}

/// The four switchable groups of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermGroup {
    IntraContrastive,
    IntraReconstruction,
    InterContrastive,
    DualPrediction,
}

/// Per-term values of one objective evaluation; disabled terms are `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_cl_a: Option<f64>,
    pub l_cl_m: Option<f64>,
    pub l_rec_a: Option<f64>,
    pub l_rec_s: Option<f64>,
    pub l_rec_d: Option<f64>,
    pub l_cl_inter: Option<f64>,
    pub l_dp: Option<f64>,
    pub total: f64,
    pub weights: LossConfig,
}

impl LossBreakdown {
    pub const COLUMNS: [&'static str; 8] = [
        "l_cl_a",
        "l_cl_m",
        "l_rec_a",
        "l_rec_s",
        "l_rec_d",
        "l_cl_inter",
        "l_dp",
        "total",
    ];

    pub fn terms(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("l_cl_a", self.l_cl_a),
            ("l_cl_m", self.l_cl_m),
            ("l_rec_a", self.l_rec_a),
            ("l_rec_s", self.l_rec_s),
            ("l_rec_d", self.l_rec_d),
            ("l_cl_inter", self.l_cl_inter),
            ("l_dp", self.l_dp),
        ]
    }

    /// `L_dp + L_cl^inter + λ1(μ L_cl^a + L_cl^m) + λ2(μ L_rec^a + L_rec^s + L_rec^d)`
    /// over the terms present.
    pub fn recombine(&self) -> f64 {
        let w = &self.weights;
        let v = |x: Option<f64>| x.unwrap_or(0.0);
        let intra_cl = intra_contrastive_total(v(self.l_cl_a), v(self.l_cl_m), w.mu);
        let intra_rec = w.mu * v(self.l_rec_a) + v(self.l_rec_s) + v(self.l_rec_d);
        total_loss(v(self.l_dp) + v(self.l_cl_inter), intra_cl, intra_rec, w.lambda1, w.lambda2)
    }
}

/// `L = L_inter + λ1·L_cl^intra + λ2·L_rec^intra`.
pub fn total_loss(inter: f64, intra_cl: f64, intra_rec: f64, lambda1: f64, lambda2: f64) -> f64 {
    inter + lambda1 * intra_cl + lambda2 * intra_rec
}
