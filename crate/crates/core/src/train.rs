//! Full-batch training, ablation switching and embedding export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{augment_view, AugmentConfig};
use crate::data::ViewFeatures;
use crate::error::{RecpError, Result};
use crate::losses::{
    dual_prediction, inter_contrastive, intra_contrastive, reconstruction, LossBreakdown,
    LossConfig, TermGroup,
};
use crate::model::{fuse_mobility, Model, ModelConfig, Networks};
use crate::numcore::{
    adam_step, grad_check, AdamConfig, DenseMatrix, GradCheckConfig, GradCheckReport, NormMode, ParamStore,
    Tape, Var,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoCl,
    NoRec,
    NoIv,
    NoDp,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoCl,
        Ablation::NoRec,
        Ablation::NoIv,
        Ablation::NoDp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoCl => "no_cl",
            Ablation::NoRec => "no_rec",
            Ablation::NoIv => "no_iv",
            Ablation::NoDp => "no_dp",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = RecpError;
    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                RecpError::Config(format!(
                    "unknown ablation `{s}` (expected full, no_cl, no_rec, no_iv or no_dp)"
                ))
            })
    }
}

/// Loss groups enabled under each ablation variant.
pub fn ablation_mask(variant: Ablation) -> BTreeSet<TermGroup> {
    use TermGroup::*;
    let all = [IntraContrastive, IntraReconstruction, InterContrastive, DualPrediction];
    all.into_iter()
        .filter(|g| match variant {
            Ablation::Full => true,
            Ablation::NoCl => *g != IntraContrastive,
            Ablation::NoRec => *g != IntraReconstruction,
            Ablation::NoIv => !matches!(g, InterContrastive | DualPrediction),
            Ablation::NoDp => *g != DualPrediction,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub seed: u64,
    pub ablation: Ablation,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub aug: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            lr0: 0.01,
            seed: 0,
            ablation: Ablation::Full,
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            aug: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(RecpError::Config("train.epochs must be >= 1".into()));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(RecpError::Config("train.lr0 must be > 0".into()));
        }
        self.model.validate()?;
        self.loss.validate()?;
        self.aug.validate()
    }

    /// Tiny model used for gradient checks: `d = 4`.
    pub fn toy() -> Self {
        TrainConfig {
            model: ModelConfig {
                d: 4,
                hidden: 5,
                predictor_hidden: 4,
                layers: 3,
            },
            aug: AugmentConfig {
                k_attribute: 2,
                k_mobility: 2,
                drop_rate: 0.2,
            },
            ..Default::default()
        }
    }

    /// Linearly decayed learning rate for 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        (self.lr0 * (1.0 - epoch as f64 / self.epochs as f64)).max(0.0)
    }
}

/// Preprocessed inputs of one optimisation step.
#[derive(Clone, Debug)]
pub struct EpochBatch {
    pub attributes: DenseMatrix,
    pub outflow: DenseMatrix,
    pub inflow: DenseMatrix,
    pub pos_attributes: Vec<DenseMatrix>,
    pub pos_outflow: Vec<DenseMatrix>,
    pub pos_inflow: Vec<DenseMatrix>,
}

impl EpochBatch {
    /// Fresh positives are drawn from the raw counts and pushed through the
    /// scalers fitted on the original features.
    pub fn sample(
        features: &ViewFeatures,
        aug: &AugmentConfig,
        with_positives: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut batch = EpochBatch {
            attributes: features.attributes.clone(),
            outflow: features.outflow.clone(),
            inflow: features.inflow.clone(),
            pos_attributes: Vec::new(),
            pos_outflow: Vec::new(),
            pos_inflow: Vec::new(),
        };
        if with_positives {
            let scale = |raw: Vec<DenseMatrix>, s: &crate::data::Standardizer| {
                raw.iter().map(|m| s.transform(m)).collect::<Result<Vec<_>>>()
            };
            batch.pos_attributes = scale(
                augment_view(&features.raw_attributes, aug.k_attribute, aug.drop_rate, rng),
                &features.attr_scaler,
            )?;
            batch.pos_outflow = scale(
                augment_view(&features.raw_outflow, aug.k_mobility, aug.drop_rate, rng),
                &features.outflow_scaler,
            )?;
            batch.pos_inflow = scale(
                augment_view(&features.raw_inflow, aug.k_mobility, aug.drop_rate, rng),
                &features.inflow_scaler,
            )?;
        }
        Ok(batch)
    }
}

/// Tape handles of every loss term recorded by [`objective`].
#[derive(Clone, Debug, Default)]
pub struct TermVars {
    pub l_cl_a: Option<Var>,
    pub l_cl_m: Option<Var>,
    pub l_rec_a: Option<Var>,
    pub l_rec_s: Option<Var>,
    pub l_rec_d: Option<Var>,
    pub l_cl_inter: Option<Var>,
    pub l_dp: Option<Var>,
    pub total: Option<Var>,
}

impl TermVars {
    pub fn breakdown(&self, tape: &Tape, weights: LossConfig) -> LossBreakdown {
        let v = |x: Option<Var>| x.map(|x| tape.value(x).item());
        LossBreakdown {
            l_cl_a: v(self.l_cl_a),
            l_cl_m: v(self.l_cl_m),
            l_rec_a: v(self.l_rec_a),
            l_rec_s: v(self.l_rec_s),
            l_rec_d: v(self.l_rec_d),
            l_cl_inter: v(self.l_cl_inter),
            l_dp: v(self.l_dp),
            total: v(self.total).unwrap_or(0.0),
            weights,
        }
    }
}

fn weighted_sum(tape: &mut Tape, parts: &[(Option<Var>, f64)]) -> Result<Option<Var>> {
    let mut acc: Option<Var> = None;
    for &(v, w) in parts {
        let Some(v) = v else { continue };
        let term = if w == 1.0 { v } else { tape.scale(v, w) };
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(acc)
}

/// Records the enabled loss terms for one batch on `tape`.
pub fn objective(
    tape: &mut Tape,
    store: &ParamStore,
    nets: &mut Networks,
    batch: &EpochBatch,
    mask: &BTreeSet<TermGroup>,
    w: &LossConfig,
) -> Result<TermVars> {
    let xa = tape.constant(batch.attributes.clone());
    let xs = tape.constant(batch.outflow.clone());
    let xd = tape.constant(batch.inflow.clone());
    let za = nets.attr.encode(tape, store, xa)?;
    let zs = nets.outflow.encode(tape, store, xs)?;
    let zd = nets.inflow.encode(tape, store, xd)?;
    let zm = fuse_mobility(tape, zs, zd)?;

    let mut t = TermVars::default();
    if mask.contains(&TermGroup::IntraContrastive) {
        if batch.pos_attributes.is_empty() || batch.pos_outflow.len() != batch.pos_inflow.len() {
            return Err(RecpError::InvalidInput(
                "intra-view contrastive loss needs positives for every view".into(),
            ));
        }
        let mut pa = Vec::with_capacity(batch.pos_attributes.len());
        for p in &batch.pos_attributes {
            let x = tape.constant(p.clone());
            pa.push(nets.attr.encode(tape, store, x)?);
        }
        let mut pm = Vec::with_capacity(batch.pos_outflow.len());
        for (ps, pd) in batch.pos_outflow.iter().zip(&batch.pos_inflow) {
            let xs = tape.constant(ps.clone());
            let xd = tape.constant(pd.clone());
            let s = nets.outflow.encode(tape, store, xs)?;
            let d = nets.inflow.encode(tape, store, xd)?;
            pm.push(fuse_mobility(tape, s, d)?);
        }
        t.l_cl_a = Some(intra_contrastive(tape, za, &pa, w.tau)?);
        t.l_cl_m = Some(intra_contrastive(tape, zm, &pm, w.tau)?);
    }
    if mask.contains(&TermGroup::IntraReconstruction) {
        let ra = nets.attr.decode(tape, store, za)?;
        let rs = nets.outflow.decode(tape, store, zs)?;
        let rd = nets.inflow.decode(tape, store, zd)?;
        t.l_rec_a = Some(reconstruction(tape, xa, ra)?);
        t.l_rec_s = Some(reconstruction(tape, xs, rs)?);
        t.l_rec_d = Some(reconstruction(tape, xd, rd)?);
    }
    if mask.contains(&TermGroup::InterContrastive) {
        t.l_cl_inter = Some(inter_contrastive(tape, za, zm, w.alpha)?);
    }
    if mask.contains(&TermGroup::DualPrediction) {
        t.l_dp = Some(dual_prediction(
            tape,
            store,
            za,
            zm,
            &mut nets.pred_a,
            &mut nets.pred_m,
            NormMode::Train,
        )?);
    }

    let intra_cl = weighted_sum(tape, &[(t.l_cl_a, w.mu), (t.l_cl_m, 1.0)])?;
    let intra_rec = weighted_sum(tape, &[(t.l_rec_a, w.mu), (t.l_rec_s, 1.0), (t.l_rec_d, 1.0)])?;
    t.total = weighted_sum(
        tape,
        &[
            (t.l_dp, 1.0),
            (t.l_cl_inter, 1.0),
            (intra_cl, w.lambda1),
            (intra_rec, w.lambda2),
        ],
    )?;
    if t.total.is_none() {
        return Err(RecpError::Config("no loss term enabled".into()));
    }
    Ok(t)
}

/// Finite-difference check of the whole objective under `config.ablation`,
/// with one fixed draw of positives. Parameters start from the usual
/// initialisation plus uniform noise of width `jitter`, which keeps ReLU
/// inputs away from the kink at zero that zero biases would otherwise sit on.
pub fn grad_check_objective(
    config: &TrainConfig,
    features: &ViewFeatures,
    gc: &GradCheckConfig,
    jitter: f64,
) -> Result<GradCheckReport> {
    config.validate()?;
    let mask = ablation_mask(config.ablation);
    let mut model = init_model(config, features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ AUG_STREAM);
    for p in model.params.iter_mut() {
        p.value.as_mut_slice().iter_mut().for_each(|v| *v += rng.random_range(-jitter..=jitter));
    }
    let batch = EpochBatch::sample(
        features,
        &config.aug,
        mask.contains(&TermGroup::IntraContrastive),
        &mut rng,
    )?;
    let Model { params, nets, .. } = &mut model;
    let loss = config.loss;
    grad_check(
        params,
        |store, tape| {
            let t = objective(tape, store, nets, &batch, &mask, &loss)?;
            Ok(t.total.expect("objective always has a total"))
        },
        gc,
    )
}

/// Per-region `Z^a ‖ Z^m`, width `2d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalEmbedding {
    pub e: DenseMatrix,
}

impl FinalEmbedding {
    pub fn regions(&self) -> usize {
        self.e.rows()
    }

    pub fn width(&self) -> usize {
        self.e.cols()
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("region");
        for j in 0..self.e.cols() {
            write!(s, ",e_{j}").unwrap();
        }
        s.push('\n');
        for i in 0..self.e.rows() {
            write!(s, "{i}").unwrap();
            for v in self.e.row(i) {
                // `{:?}` prints the shortest representation that round-trips
                write!(s, ",{v:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| RecpError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| RecpError::io(path, e))?;
        let ingest = |line: usize, msg: String| RecpError::Ingest {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| RecpError::io(path, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split(',').map(str::trim).collect();
            if width.is_none() {
                let ok = fields.first() == Some(&"region")
                    && fields[1..].iter().enumerate().all(|(j, f)| *f == format!("e_{j}"));
                if !ok || fields.len() < 2 {
                    return Err(ingest(i + 1, "expected header `region,e_0,...`".into()));
                }
                width = Some(fields.len() - 1);
                continue;
            }
            if fields.len() != width.unwrap() + 1 {
                return Err(ingest(i + 1, format!("expected {} fields", width.unwrap() + 1)));
            }
            let region: usize = fields[0]
                .parse()
                .map_err(|_| ingest(i + 1, format!("bad region `{}`", fields[0])))?;
            if region != rows.len() {
                return Err(ingest(i + 1, format!("expected region {}, found {region}", rows.len())));
            }
            let vals = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| ingest(i + 1, format!("bad value `{f}`"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(vals);
        }
        let width = width.ok_or_else(|| ingest(1, "empty embedding file".into()))?;
        let mut data = Vec::with_capacity(rows.len() * width);
        rows.iter().for_each(|r| data.extend_from_slice(r));
        Ok(FinalEmbedding {
            e: DenseMatrix::from_vec(rows.len(), width, data)?,
        })
    }
}

/// Writes `embedding.csv`-format output for given view embeddings.
pub fn export_embedding(z_a: &DenseMatrix, z_m: &DenseMatrix, path: impl AsRef<Path>) -> Result<FinalEmbedding> {
    let e = FinalEmbedding { e: z_a.hconcat(z_m)? };
    e.save(path)?;
    Ok(e)
}

pub fn history_csv_string(history: &[LossBreakdown]) -> String {
    let mut s = String::from("epoch");
    for c in LossBreakdown::COLUMNS {
        write!(s, ",{c}").unwrap();
    }
    s.push('\n');
    for (i, b) in history.iter().enumerate() {
        write!(s, "{}", i + 1).unwrap();
        for (_, v) in b.terms() {
            match v {
                Some(v) => write!(s, ",{v:?}").unwrap(),
                None => s.push_str(",NA"),
            }
        }
        writeln!(s, ",{:?}", b.total).unwrap();
    }
    s
}

pub struct TrainOutput {
    pub embedding: FinalEmbedding,
    pub history: Vec<LossBreakdown>,
    pub model: Model,
}

impl std::fmt::Debug for TrainOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainOutput")
            .field("embedding", &self.embedding.e.shape())
            .field("epochs", &self.history.len())
            .finish()
    }
}

/// Seed offsets keep the initialisation and augmentation streams independent.
const INIT_STREAM: u64 = 0x5eed_0001;
const AUG_STREAM: u64 = 0x5eed_0002;

pub fn init_model(config: &TrainConfig, features: &ViewFeatures) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ INIT_STREAM);
    Model::new(
        config.model,
        features.attributes.cols(),
        features.outflow.cols(),
        &mut rng,
    )
}

/// Z^a and Z^m of the unaugmented features.
pub fn embed(model: &mut Model, features: &ViewFeatures) -> Result<(DenseMatrix, DenseMatrix)> {
    let mut tape = Tape::new();
    let xa = tape.constant(features.attributes.clone());
    let xs = tape.constant(features.outflow.clone());
    let xd = tape.constant(features.inflow.clone());
    let nets = &mut model.nets;
    let za = nets.attr.encode(&mut tape, &model.params, xa)?;
    let zs = nets.outflow.encode(&mut tape, &model.params, xs)?;
    let zd = nets.inflow.encode(&mut tape, &model.params, xd)?;
    let zm = fuse_mobility(&mut tape, zs, zd)?;
    Ok((tape.value(za).clone(), tape.value(zm).clone()))
}

/// Runs `config.epochs` full-batch Adam steps and returns the final-epoch embedding.
pub fn train(config: &TrainConfig, features: &ViewFeatures) -> Result<TrainOutput> {
    train_with_progress(config, features, |_, _| {})
}

pub fn train_with_progress(
    config: &TrainConfig,
    features: &ViewFeatures,
    mut on_epoch: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainOutput> {
    config.validate()?;
    if features.regions() < 2 {
        return Err(RecpError::InvalidInput(format!(
            "training needs at least 2 regions, got {}",
            features.regions()
        )));
    }
    let mask = ablation_mask(config.ablation);
    let with_positives = mask.contains(&TermGroup::IntraContrastive);
    let mut model = init_model(config, features)?;
    let mut aug_rng = ChaCha8Rng::seed_from_u64(config.seed ^ AUG_STREAM);
    let adam = AdamConfig::default();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let batch = EpochBatch::sample(features, &config.aug, with_positives, &mut aug_rng)?;
        let mut tape = Tape::new();
        let terms = objective(&mut tape, &model.params, &mut model.nets, &batch, &mask, &config.loss)?;
        let breakdown = terms.breakdown(&tape, config.loss);
        for (name, v) in breakdown.terms() {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(RecpError::NonFiniteLoss {
                    epoch: epoch + 1,
                    term: name.to_string(),
                });
            }
        }
        if !breakdown.total.is_finite() {
            return Err(RecpError::NonFiniteLoss {
                epoch: epoch + 1,
                term: "total".into(),
            });
        }
        let grads = tape.backward(terms.total.expect("objective always has a total"))?;
        model.params.zero_grad();
        tape.accumulate_into(&grads, &mut model.params);
        adam_step(&mut model.params, config.lr_at(epoch), &adam);
        on_epoch(epoch + 1, &breakdown);
        history.push(breakdown);
    }

    let (za, zm) = embed(&mut model, features)?;
    let e = za.hconcat(&zm)?;
    if !e.is_finite() {
        return Err(RecpError::NonFiniteLoss {
            epoch: config.epochs,
            term: "embedding".into(),
        });
    }
    Ok(TrainOutput {
        embedding: FinalEmbedding { e },
        history,
        model,
    })
}
