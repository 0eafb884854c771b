//! View encoders/decoders, mobility fusion and the cross-view dual predictors.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{RecpError, Result};
use crate::numcore::{BatchStats, DenseMatrix, NormMode, ParamId, ParamStore, Tape, Var};

/// Layer widths of a fully connected stack, input first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    /// Batch norm after every hidden linear layer (before the ReLU).
    pub use_batch_norm: bool,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, use_batch_norm: bool) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(RecpError::Config(
                "an MLP needs at least one layer (two sizes)".into(),
            ));
        }
        Ok(MlpSpec {
            layer_sizes,
            use_batch_norm,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Weights + biases, plus gamma and beta for each batch-norm layer.
    pub fn num_params(&self) -> usize {
        let linear: usize = self
            .layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let norm: usize = if self.use_batch_norm {
            self.layer_sizes[1..self.layer_sizes.len() - 1]
                .iter()
                .map(|h| 2 * h)
                .sum()
        } else {
            0
        };
        linear + norm
    }

    pub fn mirrored(&self) -> MlpSpec {
        let mut sizes = self.layer_sizes.clone();
        sizes.reverse();
        MlpSpec {
            layer_sizes: sizes,
            use_batch_norm: self.use_batch_norm,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound));
        Linear {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), DenseMatrix::zeros(1, fan_out)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let h = tape.matmul(x, w)?;
        tape.add_row_broadcast(h, b)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormLayer {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running: BatchStats,
    pub momentum: f64,
    pub eps: f64,
}

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

impl BatchNormLayer {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        BatchNormLayer {
            name: name.to_string(),
            gamma: store.add(format!("{name}.gamma"), DenseMatrix::filled(1, width, 1.0)),
            beta: store.add(format!("{name}.beta"), DenseMatrix::zeros(1, width)),
            running: BatchStats {
                mean: vec![0.0; width],
                var: vec![1.0; width],
            },
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    /// In train mode the running statistics move toward the batch's
    /// (`running = momentum·running + (1 − momentum)·batch`, unbiased variance).
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mode: NormMode,
    ) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        let n = tape.value(x).rows() as f64;
        let (y, batch) = tape.batch_norm(x, g, b, mode, Some(&self.running), self.eps)?;
        if let Some(batch) = batch {
            let m = self.momentum;
            let unbias = n / (n - 1.0);
            for j in 0..batch.mean.len() {
                self.running.mean[j] = m * self.running.mean[j] + (1.0 - m) * batch.mean[j];
                self.running.var[j] = m * self.running.var[j] + (1.0 - m) * batch.var[j] * unbias;
            }
        }
        Ok(y)
    }
}

/// Linear layers with ReLU between them and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub linears: Vec<Linear>,
    pub norms: Vec<BatchNormLayer>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        spec: MlpSpec,
        rng: &mut R,
    ) -> Self {
        let mut linears = Vec::new();
        let mut norms = Vec::new();
        let last = spec.num_layers() - 1;
        for (i, w) in spec.layer_sizes.windows(2).enumerate() {
            linears.push(Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng));
            if spec.use_batch_norm && i < last {
                norms.push(BatchNormLayer::new(store, &format!("{name}.{i}.bn"), w[1]));
            }
        }
        Mlp {
            spec,
            linears,
            norms,
        }
    }

    pub fn forward(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        mode: NormMode,
    ) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.spec.input() {
            return Err(RecpError::Dimension {
                op: "mlp input",
                left: tape.value(x).shape(),
                right: (self.spec.input(), self.spec.layer_sizes[1]),
            });
        }
        let last = self.linears.len() - 1;
        let mut h = x;
        for i in 0..self.linears.len() {
            h = self.linears[i].forward(tape, store, h)?;
            if i < last {
                if self.spec.use_batch_norm {
                    h = self.norms[i].forward(tape, store, h, mode)?;
                }
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

#[derive(Clone, Debug)]
pub struct ViewNet {
    pub view: crate::augment::View,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl ViewNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        view: crate::augment::View,
        input: usize,
        hidden: usize,
        d: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let enc_spec = MlpSpec::new(stack_sizes(input, hidden, d, layers), false)?;
        let dec_spec = enc_spec.mirrored();
        let name = view_name(view);
        Ok(ViewNet {
            view,
            encoder: Mlp::new(store, &format!("{name}.enc"), enc_spec, rng),
            decoder: Mlp::new(store, &format!("{name}.dec"), dec_spec, rng),
        })
    }

    pub fn encode(&mut self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        self.encoder.forward(tape, store, x, NormMode::Train)
    }

    pub fn decode(&mut self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        self.decoder.forward(tape, store, z, NormMode::Train)
    }
}

fn view_name(view: crate::augment::View) -> &'static str {
    match view {
        crate::augment::View::Attribute => "attr",
        crate::augment::View::Outflow => "outflow",
        crate::augment::View::Inflow => "inflow",
    }
}

/// `[input, hidden × (layers-1), output]`.
fn stack_sizes(input: usize, hidden: usize, output: usize, layers: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(hidden, layers.saturating_sub(1)));
    sizes.push(output);
    sizes
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictDirection {
    AttributeToMobility,
    MobilityToAttribute,
}

#[derive(Clone, Debug)]
pub struct DualPredictor {
    pub direction: PredictDirection,
    pub net: Mlp,
}

impl DualPredictor {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        direction: PredictDirection,
        d: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let name = match direction {
            PredictDirection::AttributeToMobility => "pred_a2m",
            PredictDirection::MobilityToAttribute => "pred_m2a",
        };
        let spec = MlpSpec::new(stack_sizes(d, hidden, d, layers), true)?;
        Ok(DualPredictor {
            direction,
            net: Mlp::new(store, name, spec, rng),
        })
    }

    /// Prediction of the opposite view's embedding.
    pub fn predict_cross(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        z: Var,
        mode: NormMode,
    ) -> Result<Var> {
        self.net.forward(tape, store, z, mode)
    }
}

/// `z_m = (z_s + z_d) / 2`.
pub fn fuse_mobility(tape: &mut Tape, z_s: Var, z_d: Var) -> Result<Var> {
    let s = tape.add(z_s, z_d)?;
    Ok(tape.scale(s, 0.5))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width per view.
    pub d: usize,
    /// Hidden width of encoders and decoders.
    pub hidden: usize,
    /// Hidden width of the dual predictors.
    pub predictor_hidden: usize,
    /// Linear layers per encoder, decoder and predictor.
    pub layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 96,
            hidden: 128,
            predictor_hidden: 96,
            layers: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden == 0 || self.predictor_hidden == 0 || self.layers == 0 {
            return Err(RecpError::Config("model sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Network structure and non-trainable state; trainable tensors live in a
/// separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Networks {
    pub attr: ViewNet,
    pub outflow: ViewNet,
    pub inflow: ViewNet,
    pub pred_a: DualPredictor,
    pub pred_m: DualPredictor,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub nets: Networks,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        attr_dim: usize,
        flow_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        use crate::augment::View;
        config.validate()?;
        let mut params = ParamStore::new();
        let ModelConfig {
            d,
            hidden,
            predictor_hidden,
            layers,
        } = config;
        let nets = Networks {
            attr: ViewNet::new(&mut params, View::Attribute, attr_dim, hidden, d, layers, rng)?,
            outflow: ViewNet::new(&mut params, View::Outflow, flow_dim, hidden, d, layers, rng)?,
            inflow: ViewNet::new(&mut params, View::Inflow, flow_dim, hidden, d, layers, rng)?,
            pred_a: DualPredictor::new(
                &mut params,
                PredictDirection::AttributeToMobility,
                d,
                predictor_hidden,
                layers,
                rng,
            )?,
            pred_m: DualPredictor::new(
                &mut params,
                PredictDirection::MobilityToAttribute,
                d,
                predictor_hidden,
                layers,
                rng,
            )?,
        };
        let model = Model {
            config,
            params,
            nets,
        };
        let expected = model.expected_num_params();
        let actual = model.params.num_scalars();
        if expected != actual {
            return Err(RecpError::Config(format!(
                "parameter count {actual} differs from closed form {expected}"
            )));
        }
        Ok(model)
    }

    pub fn expected_num_params(&self) -> usize {
        let n = &self.nets;
        [&n.attr, &n.outflow, &n.inflow]
            .iter()
            .map(|v| v.encoder.spec.num_params() + v.decoder.spec.num_params())
            .sum::<usize>()
            + n.pred_a.net.spec.num_params()
            + n.pred_m.net.spec.num_params()
    }

    fn norm_layers(&self) -> Vec<&BatchNormLayer> {
        self.nets
            .pred_a
            .net
            .norms
            .iter()
            .chain(&self.nets.pred_m.net.norms)
            .collect()
    }

    fn norm_layers_mut(&mut self) -> Vec<&mut BatchNormLayer> {
        let n = &mut self.nets;
        n.pred_a
            .net
            .norms
            .iter_mut()
            .chain(n.pred_m.net.norms.iter_mut())
            .collect()
    }

    /// Plain-text dump of every tensor and batch-norm running statistic with
    /// values stored as IEEE-754 bit patterns.
    pub fn checkpoint_string(&self, config_hash: &str) -> String {
        let mut s = String::new();
        writeln!(s, "recp-checkpoint 1").unwrap();
        writeln!(s, "config {config_hash}").unwrap();
        for p in self.params.iter() {
            let (r, c) = p.value.shape();
            writeln!(s, "param {} {r} {c}", p.name).unwrap();
            writeln!(s, "{}", hex_values(p.value.as_slice())).unwrap();
        }
        for bn in self.norm_layers() {
            writeln!(s, "running {} {}", bn.name, bn.running.mean.len()).unwrap();
            writeln!(s, "{}", hex_values(&bn.running.mean)).unwrap();
            writeln!(s, "{}", hex_values(&bn.running.var)).unwrap();
        }
        s
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.checkpoint_string(config_hash)).map_err(|e| RecpError::io(path, e))
    }

    /// Restores values into a model built with the same configuration.
    pub fn load_checkpoint_str(&mut self, text: &str, config_hash: &str) -> Result<()> {
        let bad = |m: String| RecpError::Checkpoint(m);
        let mut lines = text.lines();
        if lines.next() != Some("recp-checkpoint 1") {
            return Err(bad("unsupported checkpoint header".into()));
        }
        match lines.next().and_then(|l| l.strip_prefix("config ")) {
            Some(h) if h == config_hash => {}
            Some(h) => return Err(bad(format!("config hash {h} does not match {config_hash}"))),
            None => return Err(bad("missing config line".into())),
        }
        for p in self.params.iter_mut() {
            let head = lines.next().ok_or_else(|| bad(format!("missing {}", p.name)))?;
            let (r, c) = p.value.shape();
            if head != format!("param {} {r} {c}", p.name) {
                return Err(bad(format!("expected param {} {r} {c}, found `{head}`", p.name)));
            }
            let vals = parse_hex_values(lines.next().unwrap_or(""), r * c).map_err(bad)?;
            p.value = DenseMatrix::from_vec(r, c, vals)?;
        }
        for bn in self.norm_layers_mut() {
            let w = bn.running.mean.len();
            let head = lines.next().ok_or_else(|| bad(format!("missing {}", bn.name)))?;
            if head != format!("running {} {w}", bn.name) {
                return Err(bad(format!("expected running {} {w}, found `{head}`", bn.name)));
            }
            bn.running.mean = parse_hex_values(lines.next().unwrap_or(""), w).map_err(bad)?;
            bn.running.var = parse_hex_values(lines.next().unwrap_or(""), w).map_err(bad)?;
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing data".into()));
        }
        Ok(())
    }

    pub fn load_checkpoint(&mut self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RecpError::io(path, e))?;
        self.load_checkpoint_str(&text, config_hash)
    }
}

fn hex_values(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{:016x}", x.to_bits()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_hex_values(line: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let vals = line
        .split_whitespace()
        .map(|t| {
            u64::from_str_radix(t, 16)
                .map(f64::from_bits)
                .map_err(|e| format!("bad value `{t}`: {e}"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if vals.len() != expected {
        return Err(format!("expected {expected} values, found {}", vals.len()));
    }
    Ok(vals)
}
