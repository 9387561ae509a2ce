//! Desk-scale training engine: data, initialization, optimizers, regularizers,
//! and per-epoch bound and spectrum logging.

pub mod data;
pub mod init;
pub mod model;
pub mod regularizer;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{derive_constants, full_report_with, ReportOptions, Total, Variant};
use crate::diagnostics::{alignment_angle, SnapshotExtras, SpectrumLog, DEFAULT_SV_THRESHOLD};
use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::network::{default_smoothness, ActivationKind, Head, LayerSpec, NetworkSpec};
use crate::real::format_real;

pub use data::{digits_dataset, make_synthetic, synthetic_target, Dataset};
pub use init::{init_weight, InitKind, InitSpec};
pub use model::{
    accuracy, forward, forward_batch, loss_and_grads, mean_loss, select_rows, Grads, HeadLoss, Output, Targets,
};
pub use regularizer::{regularizer_perlayer, regularizer_synthetic, regularizer_value_and_grads, Regularizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    /// Regression on `t(x) = exp(−‖2x−1‖²)` with `n` training points.
    Synthetic { n: usize },
    /// Bundled 8×8 digits, 1500 training / 297 test.
    Digits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub regularizer: Regularizer,
    pub init: InitSpec,
    /// Full batch when absent.
    pub batch_size: Option<usize>,
    /// `d_0, …, d_L`.
    pub widths: Vec<usize>,
    /// Activation of every layer but the last, which is linear.
    pub activation: ActivationKind,
    pub head: Head,
    pub loss: HeadLoss,
    /// `s_0, …, s_L`; `(d_j + 0.1)/2` when absent.
    #[serde(default)]
    pub smoothness: Option<Vec<f64>>,
    #[serde(default = "default_threshold")]
    pub alignment_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_SV_THRESHOLD
}

impl TrainConfig {
    /// 3→3→6 regression with a Gaussian head, full-batch SGD, and the synthetic regularizer.
    pub fn synthetic(seed: u64) -> Self {
        Self {
            task: Task::Synthetic { n: 1000 },
            seed,
            epochs: 200,
            learning_rate: 0.05,
            optimizer: Optimizer::Sgd,
            regularizer: Regularizer::Synthetic { lambda: 0.01 },
            init: InitSpec::Uniform(InitKind::Kaiming),
            batch_size: None,
            widths: vec![3, 3, 6],
            activation: ActivationKind::smooth_leaky_relu(0.5, 0.5),
            head: Head::gaussian(1.0),
            loss: HeadLoss::Squared,
            smoothness: None,
            alignment_threshold: DEFAULT_SV_THRESHOLD,
        }
    }

    /// 64→128→128→10 softmax classifier trained with Adam on minibatches of 64;
    /// orthogonal initialization on layers 1–2, optionally the perlayer regularizer there.
    pub fn digits(seed: u64, regularized: bool) -> Self {
        Self {
            task: Task::Digits,
            seed,
            epochs: 30,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            regularizer: if regularized {
                Regularizer::Perlayer {
                    lambda1: 0.01,
                    lambda2: 0.01,
                    layers: vec![1, 2],
                }
            } else {
                Regularizer::None
            },
            init: InitSpec::PerLayer(vec![InitKind::Orthogonal, InitKind::Orthogonal, InitKind::TruncatedNormal]),
            batch_size: Some(64),
            widths: vec![64, 128, 128, 10],
            activation: ActivationKind::smooth_leaky_relu(0.5, 0.5),
            head: Head::Softmax {},
            loss: HeadLoss::CrossEntropy,
            smoothness: None,
            alignment_threshold: DEFAULT_SV_THRESHOLD,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.widths.len() < 2 || self.widths.contains(&0) {
            v.push("widths need at least two positive entries".to_string());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            v.push(format!("learning rate {} must be non-negative", self.learning_rate));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                v.push("adam needs beta1, beta2 in [0, 1) and eps > 0".to_string());
            }
        }
        if self.batch_size == Some(0) {
            v.push("batch size must be positive".to_string());
        }
        if let Task::Synthetic { n } = self.task {
            if n == 0 {
                v.push("synthetic task needs n > 0".to_string());
            }
            if self.widths.first() != Some(&data::SYNTHETIC_DIM) {
                v.push(format!("synthetic inputs are {}-dimensional", data::SYNTHETIC_DIM));
            }
        }
        if self.task == Task::Digits
            && (self.widths.first() != Some(&data::DIGITS_FEATURES) || self.widths.last() != Some(&data::DIGITS_CLASSES))
        {
            v.push("digits task needs 64 inputs and 10 outputs".to_string());
        }
        if let InitSpec::PerLayer(ks) = &self.init {
            if ks.len() != self.depth() {
                v.push(format!("{} init kinds for {} layers", ks.len(), self.depth()));
            }
        }
        if let Some(s) = &self.smoothness {
            if s.len() != self.widths.len() {
                v.push(format!("{} smoothness exponents for {} widths", s.len(), self.widths.len()));
            }
        }
        if !(self.alignment_threshold >= 0.0) {
            v.push("alignment threshold must be non-negative".to_string());
        }
        v.extend(self.regularizer.violations(self.depth()));
        if let Some(msg) = self.activation.violations().into_iter().next() {
            v.push(msg);
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        match self.task {
            Task::Synthetic { n } => make_synthetic(n, self.seed),
            Task::Digits => digits_dataset(self.seed),
        }
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// Initial network for `config`: drawn layer by layer from the init stream of the seed.
pub fn build_network(config: &TrainConfig) -> Result<NetworkSpec> {
    config.validate()?;
    let mut rng = rng_stream(config.seed, INIT_STREAM);
    let s: Vec<f64> = match &config.smoothness {
        Some(s) => s.clone(),
        None => config.widths.iter().map(|&d| default_smoothness(d)).collect(),
    };
    let depth = config.depth();
    let layers = (0..depth)
        .map(|j| {
            let (rows, cols) = (config.widths[j + 1], config.widths[j]);
            let kind = config.init.kind(j).expect("validated");
            let act = if j + 1 == depth {
                ActivationKind::identity()
            } else {
                config.activation.clone()
            };
            LayerSpec::new(init_weight(kind, rows, cols, &mut rng), vec![0.0; rows], act, s[j + 1])
        })
        .collect();
    Ok(NetworkSpec {
        input_dim: config.widths[0],
        s_in: s[0],
        layers,
        head: config.head.clone(),
    })
}

/// `|held-out mean loss − training mean loss|`.
pub fn gen_error_estimate(net: &NetworkSpec, data: &Dataset, loss: HeadLoss) -> Result<f64> {
    let train = mean_loss(net, &data.inputs, &data.targets, loss)?;
    let held = mean_loss(net, &data.held_out_inputs, &data.held_out_targets, loss)?;
    Ok((held - train).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    #[serde(with = "crate::real")]
    pub train_loss: f64,
    #[serde(with = "crate::real")]
    pub regularizer: f64,
    #[serde(with = "crate::real")]
    pub held_out_loss: f64,
    #[serde(with = "crate::real")]
    pub gen_error: f64,
    pub test_accuracy: Option<f64>,
    pub bound_totals: BTreeMap<Variant, Total>,
    /// Why no bounds were computed, when `bound_totals` is empty.
    pub bound_note: Option<String>,
}

impl EpochMetrics {
    pub fn bound(&self, v: Variant) -> Option<f64> {
        self.bound_totals.get(&v).and_then(Total::value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: TrainConfig,
    /// State before the first update.
    pub initial: EpochMetrics,
    /// One record per completed epoch, `1..=epochs` unless training diverged.
    pub epochs: Vec<EpochMetrics>,
    pub final_net: NetworkSpec,
    /// Snapshots at epoch 0 and after every completed epoch.
    pub spectrum: SpectrumLog,
    pub diverged: bool,
    pub divergence: Option<String>,
}

/// Columns of [`TrainRun::metrics_csv`], followed by one `bound_<variant>` column per variant.
pub const METRICS_CSV_COLUMNS: [&str; 6] =
    ["epoch", "train_loss", "regularizer", "held_out_loss", "gen_error", "test_accuracy"];

impl TrainRun {
    /// One row per epoch including epoch 0; `NA` where a value is absent.
    pub fn metrics_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = METRICS_CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(Variant::ALL.iter().map(|v| format!("bound_{}", v.name())));
        w.write_record(&header)?;
        for m in std::iter::once(&self.initial).chain(&self.epochs) {
            let mut row = vec![
                m.epoch.to_string(),
                format_real(m.train_loss),
                format_real(m.regularizer),
                format_real(m.held_out_loss),
                format_real(m.gen_error),
                m.test_accuracy.map_or_else(|| "NA".to_string(), format_real),
            ];
            row.extend(
                Variant::ALL
                    .iter()
                    .map(|v| m.bound(*v).map_or_else(|| "NA".to_string(), format_real)),
            );
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn final_metrics(&self) -> &EpochMetrics {
        self.epochs.last().unwrap_or(&self.initial)
    }
}

enum OptState {
    Sgd,
    Adam { m: Grads, v: Grads, t: i32 },
}

fn apply_update(net: &mut NetworkSpec, g: &Grads, lr: f64, opt: &Optimizer, state: &mut OptState) {
    match (opt, state) {
        (Optimizer::Sgd, OptState::Sgd) => {
            for (layer, (gw, gb)) in net.layers.iter_mut().zip(g.weights.iter().zip(&g.biases)) {
                for (w, d) in layer.weight.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                    *w -= lr * d;
                }
                for (b, d) in layer.bias.iter_mut().zip(gb) {
                    *b -= lr * d;
                }
            }
        }
        (Optimizer::Adam { beta1, beta2, eps }, OptState::Adam { m, v, t }) => {
            *t += 1;
            let c1 = 1.0 - beta1.powi(*t);
            let c2 = 1.0 - beta2.powi(*t);
            let step = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            for j in 0..net.layers.len() {
                let layer = &mut net.layers[j];
                let (gw, mw, vw) = (g.weights[j].as_slice(), m.weights[j].as_mut_slice(), v.weights[j].as_mut_slice());
                for (k, p) in layer.weight.as_mut_slice().iter_mut().enumerate() {
                    step(p, gw[k], &mut mw[k], &mut vw[k]);
                }
                for (k, p) in layer.bias.iter_mut().enumerate() {
                    step(p, g.biases[j][k], &mut m.biases[j][k], &mut v.biases[j][k]);
                }
            }
        }
        _ => unreachable!("optimizer state matches its kind"),
    }
}

fn evaluate(net: &NetworkSpec, config: &TrainConfig, data: &Dataset, epoch: usize) -> Result<EpochMetrics> {
    let train_loss = mean_loss(net, &data.inputs, &data.targets, config.loss)?;
    let held_out_loss = mean_loss(net, &data.held_out_inputs, &data.held_out_targets, config.loss)?;
    let regularizer = regularizer_value_and_grads(&config.regularizer, net).map_or(f64::NAN, |r| r.0);
    let test_accuracy = match &data.held_out_targets {
        Targets::Classes(c) => Some(accuracy(net, &data.held_out_inputs, c)?),
        Targets::Values(_) => None,
    };
    let (bound_totals, bound_note) = match derive_constants(net, data.n(), None)
        .and_then(|d| {
            let opts = ReportOptions {
                flags: d.flags,
                ..Default::default()
            };
            full_report_with(net, &d.constants, &opts)
        }) {
        Ok(rep) => (rep.totals, None),
        Err(e) => (BTreeMap::new(), Some(e.to_string())),
    };
    Ok(EpochMetrics {
        epoch,
        train_loss,
        regularizer,
        held_out_loss,
        gen_error: (held_out_loss - train_loss).abs(),
        test_accuracy,
        bound_totals,
        bound_note,
    })
}

/// Output of layer `L−1` on the held-out inputs against the right singular
/// subspace of `W_L`; absent for single-layer networks or degenerate subspaces.
fn held_out_alignment(net: &NetworkSpec, data: &Dataset, threshold: f64) -> Option<f64> {
    let depth = net.depth();
    if depth < 2 {
        return None;
    }
    let t = model::forward_trace(net, &data.held_out_inputs).ok()?;
    let acts = &t.post[depth - 1];
    let rows: Vec<Vec<f64>> = (0..acts.rows()).map(|i| acts.row(i).to_vec()).collect();
    alignment_angle(&rows, &net.layers[depth - 1].weight, threshold).ok()
}

fn snapshot(log: &mut SpectrumLog, net: &NetworkSpec, config: &TrainConfig, data: &Dataset, m: &EpochMetrics) -> Result<()> {
    let extras = SnapshotExtras {
        alignment: held_out_alignment(net, data, config.alignment_threshold),
        test_metric: m.test_accuracy.or(Some(m.held_out_loss)),
    };
    log.snapshot(net, m.epoch, extras)?;
    Ok(())
}

/// Trains `net0` on `data` under `config`. Never fails on divergence: the run is
/// returned with `diverged` set and the epochs completed so far.
pub fn train(config: &TrainConfig, data: &Dataset, net0: &NetworkSpec) -> Result<TrainRun> {
    config.validate()?;
    if net0.input_dim != data.input_dim() {
        return Err(Error::Shape(format!(
            "network expects {} inputs, dataset has {}",
            net0.input_dim,
            data.input_dim()
        )));
    }
    let mut net = net0.clone();
    let mut shuffle = rng_stream(config.seed, SHUFFLE_STREAM);
    let mut state = match config.optimizer {
        Optimizer::Sgd => OptState::Sgd,
        Optimizer::Adam { .. } => OptState::Adam {
            m: Grads::zeros_like(&net),
            v: Grads::zeros_like(&net),
            t: 0,
        },
    };
    let initial = evaluate(&net, config, data, 0)?;
    let mut spectrum = SpectrumLog::new();
    snapshot(&mut spectrum, &net, config, data, &initial)?;
    let n = data.n();
    let batch = config.batch_size.unwrap_or(n).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut divergence = None;

    'outer: for epoch in 1..=config.epochs {
        if batch < n {
            order.shuffle(&mut shuffle);
        }
        for chunk in order.chunks(batch) {
            let step = (|| -> Result<Grads> {
                let (x, y) = if chunk.len() == n && batch == n {
                    (data.inputs.clone(), data.targets.clone())
                } else {
                    (select_rows(&data.inputs, chunk), data.targets.select(chunk))
                };
                let (_, mut g) = loss_and_grads(&net, &x, &y, config.loss)?;
                let (_, rg) = regularizer_value_and_grads(&config.regularizer, &net)?;
                for (gw, r) in g.weights.iter_mut().zip(rg) {
                    if let Some(r) = r {
                        *gw = gw.add(&r)?;
                    }
                }
                Ok(g)
            })();
            match step {
                Ok(g) => apply_update(&mut net, &g, config.learning_rate, &config.optimizer, &mut state),
                Err(e) => {
                    divergence = Some(format!("epoch {epoch}: {e}"));
                    break 'outer;
                }
            }
            if let Some(j) = net.layers.iter().position(|l| !l.weight.is_finite() || l.bias.iter().any(|b| !b.is_finite())) {
                divergence = Some(format!("epoch {epoch}: layer {} parameters became non-finite", j + 1));
                break 'outer;
            }
        }
        let m = evaluate(&net, config, data, epoch)?;
        if !m.train_loss.is_finite() {
            divergence = Some(format!("epoch {epoch}: training loss is {}", m.train_loss));
            break;
        }
        snapshot(&mut spectrum, &net, config, data, &m)?;
        epochs.push(m);
    }
    Ok(TrainRun {
        config: config.clone(),
        initial,
        epochs,
        final_net: net,
        spectrum,
        diverged: divergence.is_some(),
        divergence,
    })
}

/// Builds the dataset and network from `config` and trains.
pub fn run(config: &TrainConfig) -> Result<TrainRun> {
    let data = config.dataset()?;
    let net = build_network(config)?;
    train(config, &data, &net)
}

/// `Π_{j ∈ layers} ‖W_j‖ · det(I + W_jᵀW_j)^{−1/4}` (1-based layers).
pub fn graph_koopman_quantity(net: &NetworkSpec, layers: &[usize]) -> Result<f64> {
    let mut log = 0.0;
    for &l in layers {
        let w: &Matrix = &net
            .layers
            .get(l.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidParameter(format!("layer {l} is outside the network")))?
            .weight;
        let sv = crate::matcore::singular_values(w)?;
        log += sv[0].ln() - 0.25 * sv.iter().map(|s| (s * s).ln_1p()).sum::<f64>();
    }
    Ok(log.exp())
}
