//! The primary classifier: architecture construction, SGD training, classification,
//! representation extraction at named layers and the softmax-confidence uncertainty gate.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{argmax, DenseArray};
use crate::data::{ClassAttribute, ClassInfo, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::nn::{
    backward_injected, forward, forward_range, loss, sgd_step, Activations, Checkpoint, LayerSpec, Mode, ModelParams,
    Network, NetworkRecord, SgdConfig,
};

pub const FLATTEN0: &str = "FLATTEN0";
pub const FC1: &str = "FC1";
pub const FC2: &str = "FC2";

const INFER_CHUNK: usize = 256;
const DROPOUT_KEEP: f32 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    ConvNet,
    Dnn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::ConvNet => "convnet",
            ModelKind::Dnn => "dnn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convnet" => Ok(ModelKind::ConvNet),
            "dnn" => Ok(ModelKind::Dnn),
            other => Err(invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Threshold on the top softmax probability below which the classifier is considered unsure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyGate {
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateOutcome {
    Confident,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryModel {
    pub kind: ModelKind,
    pub network: Network,
    pub params: ModelParams<f32>,
    /// Extraction-point name → index of the layer whose output is the representation.
    pub points: Vec<(String, usize)>,
    pub classes: Vec<ClassInfo>,
    pub gate: Option<UncertaintyGate>,
}

fn convnet_layers(classes: usize) -> (Vec<LayerSpec>, Vec<(String, usize)>) {
    use LayerSpec::*;
    let layers = vec![
        Conv2d { filters: 8, kernel: 3 }, // Conv0
        Relu,
        Conv2d { filters: 16, kernel: 3 }, // Conv1
        Relu,
        MaxPool2d { size: 2 }, // MxPool1
        Dropout { keep: DROPOUT_KEEP },
        Conv2d { filters: 16, kernel: 3 }, // Conv2
        Relu,
        Conv2d { filters: 32, kernel: 3 }, // Conv3
        Relu,
        MaxPool2d { size: 2 }, // MaxPool2
        Dropout { keep: DROPOUT_KEEP },
        Flatten,             // Flatten0
        Dense { units: 64 }, // FC1
        Relu,
        Dropout { keep: DROPOUT_KEEP },
        Dense { units: 32 }, // FC2
        Relu,
        Dense { units: classes },
        Softmax,
    ];
    let points = vec![(FLATTEN0.to_string(), 12), (FC1.to_string(), 14), (FC2.to_string(), 17)];
    (layers, points)
}

fn dnn_layers(first_hidden: usize, classes: usize) -> (Vec<LayerSpec>, Vec<(String, usize)>) {
    use LayerSpec::*;
    let layers = vec![
        Flatten, // Flatten0
        Dense { units: first_hidden },
        Relu,
        Dropout { keep: DROPOUT_KEEP },
        Dense { units: 64 }, // FC1
        Relu,
        Dropout { keep: DROPOUT_KEEP },
        Dense { units: 32 }, // FC2
        Relu,
        Dense { units: classes },
        Softmax,
    ];
    let points = vec![(FLATTEN0.to_string(), 0), (FC1.to_string(), 5), (FC2.to_string(), 8)];
    (layers, points)
}

fn count_params(net: &Network) -> usize {
    net.layers()
        .iter()
        .enumerate()
        .map(|(i, l)| match *l {
            LayerSpec::Dense { units } => (net.layer_input_shape(i)[0] + 1) * units,
            LayerSpec::Conv2d { filters, kernel } => (net.layer_input_shape(i)[0] * kernel * kernel + 1) * filters,
            _ => 0,
        })
        .sum()
}

/// Builds an untrained classifier for `(channels, height, width)` inputs.
///
/// The DNN's first hidden layer is sized so its trainable-parameter count matches the ConvNet's.
pub fn build_model(kind: ModelKind, input_shape: &[usize], classes: &[ClassInfo], seed: u64) -> Result<PrimaryModel> {
    let c = classes.len();
    if c < 2 {
        return Err(invalid("a classifier needs at least two classes"));
    }
    if input_shape.len() != 3 {
        return Err(Error::InvalidShape(format!("input must be (channels, h, w), got {input_shape:?}")));
    }
    let (conv_layers, conv_points) = convnet_layers(c);
    let convnet = Network::new(input_shape.to_vec(), conv_layers)?;
    let (network, points) = match kind {
        ModelKind::ConvNet => (convnet, conv_points),
        ModelKind::Dnn => {
            let target = count_params(&convnet) as f64;
            let fan_in: usize = input_shape.iter().product();
            let fixed = (64 + 1) * 32 + (32 + 1) * c + 64;
            let hidden = ((target - fixed as f64) / (fan_in + 1 + 64) as f64).round().max(1.0) as usize;
            let (layers, points) = dnn_layers(hidden, c);
            (Network::new(input_shape.to_vec(), layers)?, points)
        }
    };
    let params = network.init_params(seed);
    Ok(PrimaryModel { kind, network, params, points, classes: classes.to_vec(), gate: None })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Minibatch losses of the first epoch, in order.
    pub first_epoch_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Extra objective evaluated on every training minibatch alongside the classification loss.
pub trait StepHook {
    /// Returns the auxiliary loss and gradients to inject at layer outputs of the primary network.
    fn step(
        &mut self,
        model: &PrimaryModel,
        acts: &Activations<f32>,
        labels: &[usize],
        learning_rate: f64,
    ) -> Result<(f64, Vec<(usize, DenseArray<f32>)>)>;

    /// Called after each epoch's validation pass; `improved` marks a new best epoch.
    fn epoch_end(&mut self, _epoch: usize, _improved: bool) {}
}

struct NoHook;

impl StepHook for NoHook {
    fn step(
        &mut self,
        _: &PrimaryModel,
        _: &Activations<f32>,
        _: &[usize],
        _: f64,
    ) -> Result<(f64, Vec<(usize, DenseArray<f32>)>)> {
        Ok((0.0, Vec::new()))
    }
}

/// Trains with minibatch SGD on cross-entropy and returns the parameters of the best validation epoch.
pub fn train_primary(
    model: PrimaryModel,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &SgdConfig,
) -> Result<(PrimaryModel, TrainReport)> {
    train_primary_with(model, train, val, cfg, &mut NoHook)
}

pub fn train_primary_with(
    mut model: PrimaryModel,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &SgdConfig,
    hook: &mut dyn StepHook,
) -> Result<(PrimaryModel, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training or validation set"));
    }
    let classes = model.classes.len();
    if let Some(&bad) = train.labels().iter().chain(val.labels()).find(|&&l| l >= classes) {
        return Err(invalid(format!("label {bad} outside {classes} classes")));
    }
    let net = model.network.clone();
    net.check_params(&model.params)?;
    let logits = net.len() - 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport { best_val_accuracy: -1.0, ..Default::default() };
    let mut best = model.params.clone();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let x = train.images().select_rows(batch)?;
            let y: Vec<usize> = batch.iter().map(|&i| train.labels()[i]).collect();
            let acts = forward(&net, &model.params, &x, Mode::Train(&mut rng))?;
            let probs = acts.output();
            let (batch_loss, grad) = loss::softmax_cross_entropy(probs, &y)?;
            let (aux_loss, extra) = hook.step(&model, &acts, &y, lr)?;
            if !(batch_loss + aux_loss).is_finite() {
                return Err(Error::Diverged { epoch });
            }
            for (i, &label) in y.iter().enumerate() {
                if probs.argmax_row(i) == label {
                    correct += 1;
                }
            }
            let mut injections: Vec<(usize, &DenseArray<f32>)> = vec![(logits, &grad)];
            injections.extend(extra.iter().map(|(l, g)| (*l, g)));
            let grads = backward_injected(&net, &model.params, &acts, &injections)?;
            sgd_step(&mut model.params, &grads.params, lr, cfg.l2).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Diverged { epoch },
                other => other,
            })?;
            if epoch == 0 {
                report.first_epoch_losses.push(batch_loss + aux_loss);
            }
            loss_sum += batch_loss * y.len() as f64;
            seen += y.len();
        }
        let val_accuracy = accuracy(&model, val)?;
        report.history.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / seen as f64,
            train_accuracy: correct as f64 / seen as f64,
            val_accuracy,
        });
        let improved = val_accuracy > report.best_val_accuracy;
        if improved {
            report.best_val_accuracy = val_accuracy;
            report.best_epoch = epoch;
            best = model.params.clone();
        }
        hook.epoch_end(epoch, improved);
    }
    model.params = best;
    Ok((model, report))
}

impl PrimaryModel {
    pub fn point_layer(&self, point: &str) -> Result<usize> {
        self.points
            .iter()
            .find(|(name, _)| name == point)
            .map(|&(_, l)| l)
            .ok_or_else(|| Error::UnknownPoint(point.to_string()))
    }

    pub fn representation_width(&self, point: &str) -> Result<usize> {
        Ok(self.network.output_width(self.point_layer(point)?))
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_input(&self, images: &DenseArray<f32>) -> Result<()> {
        if &images.shape()[1..] != self.network.input_shape() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                expected: self.network.input_shape().to_vec(),
                actual: images.shape()[1..].to_vec(),
            });
        }
        Ok(())
    }

    /// Runs layers `0..=last` in infer mode over `images`, in fixed-size chunks.
    fn run_to(&self, images: &DenseArray<f32>, last: usize) -> Result<DenseArray<f32>> {
        self.check_input(images)?;
        let n = images.outer();
        let width = self.network.output_width(last);
        let mut out = Vec::with_capacity(n * width);
        let start_chunks: Vec<usize> = (0..n).step_by(INFER_CHUNK).collect();
        for s in start_chunks {
            let idx: Vec<usize> = (s..(s + INFER_CHUNK).min(n)).collect();
            let x = images.select_rows(&idx)?;
            let acts = forward_range(&self.network, &self.params, 0, last + 1, &x, Mode::Infer)?;
            out.extend_from_slice(acts.output().data());
        }
        DenseArray::new(vec![n, width], out)
    }

    /// Softmax rows for a batch `(n, c, h, w)`.
    pub fn classify_batch(&self, images: &DenseArray<f32>) -> Result<DenseArray<f32>> {
        self.run_to(images, self.network.len() - 1)
    }

    /// Representations `(n, l_point)` for a batch.
    pub fn extract_batch(&self, images: &DenseArray<f32>, point: &str) -> Result<DenseArray<f32>> {
        let layer = self.point_layer(point)?;
        self.run_to(images, layer)
    }

    /// Completes the forward pass from a representation taken at `point`.
    pub fn classify_from_representation(&self, reps: &DenseArray<f32>, point: &str) -> Result<DenseArray<f32>> {
        let layer = self.point_layer(point)?;
        let shape = self.network.layer_output_shape(layer);
        let mut full = vec![reps.outer()];
        full.extend_from_slice(shape);
        let x = reps.clone().reshape(full)?;
        let acts = forward_range(&self.network, &self.params, layer + 1, self.network.len(), &x, Mode::Infer)?;
        let out = acts.output();
        DenseArray::new(vec![out.outer(), out.inner()], out.data().to_vec())
    }

    fn single(&self, image: &[f32]) -> Result<DenseArray<f32>> {
        let mut shape = vec![1];
        shape.extend_from_slice(self.network.input_shape());
        DenseArray::new(shape, image.to_vec())
    }
}

/// Softmax vector of length C for one image.
pub fn classify(model: &PrimaryModel, image: &[f32]) -> Result<Vec<f32>> {
    Ok(model.classify_batch(&model.single(image)?)?.into_data())
}

/// Infer-mode activation at `point` for one image.
pub fn extract_representation(model: &PrimaryModel, image: &[f32], point: &str) -> Result<Vec<f32>> {
    Ok(model.extract_batch(&model.single(image)?, point)?.into_data())
}

pub fn accuracy(model: &PrimaryModel, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let probs = model.classify_batch(ds.images())?;
    let correct = (0..ds.len()).filter(|&i| probs.argmax_row(i) == ds.labels()[i]).count();
    Ok(correct as f64 / ds.len() as f64)
}

/// Threshold = mean softmax probability assigned to the true class.
pub fn calibrate_from_softmax(probs: &DenseArray<f32>, labels: &[usize]) -> Result<UncertaintyGate> {
    if labels.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    if probs.outer() != labels.len() {
        return Err(invalid("softmax rows and labels differ in count"));
    }
    let sum: f64 = labels.iter().enumerate().map(|(i, &l)| probs.row(i)[l] as f64).sum();
    Ok(UncertaintyGate { threshold: sum / labels.len() as f64 })
}

pub fn calibrate_uncertainty(model: &PrimaryModel, val: &LabeledDataset) -> Result<UncertaintyGate> {
    if val.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    calibrate_from_softmax(&model.classify_batch(val.images())?, val.labels())
}

/// Confident iff the top probability reaches the threshold.
pub fn uncertainty_gate(gate: &UncertaintyGate, softmax: &[f32]) -> GateOutcome {
    let top = softmax[argmax(softmax)] as f64;
    if top >= gate.threshold {
        GateOutcome::Confident
    } else {
        GateOutcome::Uncertain
    }
}

pub(crate) fn encode_classes(classes: &[ClassInfo]) -> String {
    classes
        .iter()
        .map(|c| match c.attribute {
            ClassAttribute::EdgeCount(e) => format!("{}:edges:{e}", c.name),
            ClassAttribute::Liveliness(l) => format!("{}:live:{l}", c.name),
        })
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn decode_classes(s: &str) -> Result<Vec<ClassInfo>> {
    s.split(',')
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            let bad = || invalid(format!("bad class record {item:?}"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let v: u32 = parts[2].parse().map_err(|_| bad())?;
            let attribute = match parts[1] {
                "edges" => ClassAttribute::EdgeCount(v),
                "live" if v <= 1 => ClassAttribute::Liveliness(v as u8),
                _ => return Err(bad()),
            };
            Ok(ClassInfo::new(parts[0], attribute))
        })
        .collect()
}

impl PrimaryModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint {
            networks: vec![NetworkRecord {
                name: "primary".into(),
                network: self.network.clone(),
                params: self.params.clone(),
            }],
            ..Default::default()
        };
        ckpt.meta.insert("role".into(), "primary".into());
        ckpt.meta.insert("kind".into(), self.kind.to_string());
        ckpt.meta
            .insert("points".into(), self.points.iter().map(|(n, l)| format!("{n}={l}")).collect::<Vec<_>>().join(","));
        ckpt.meta.insert("classes".into(), encode_classes(&self.classes));
        if let Some(g) = self.gate {
            ckpt.meta.insert("tau_u".into(), format!("{:e}", g.threshold));
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let missing = |k: &str| invalid(format!("primary checkpoint lacks {k:?}"));
        let rec = ckpt.network("primary").ok_or_else(|| missing("primary network"))?;
        let kind = ckpt.meta.get("kind").ok_or_else(|| missing("kind"))?.parse()?;
        let points = ckpt
            .meta
            .get("points")
            .ok_or_else(|| missing("points"))?
            .split(',')
            .map(|p| {
                let (name, layer) = p.split_once('=').ok_or_else(|| invalid(format!("bad point {p:?}")))?;
                let layer: usize = layer.parse().map_err(|_| invalid(format!("bad point {p:?}")))?;
                if layer >= rec.network.len() {
                    return Err(invalid(format!("point {name} beyond network")));
                }
                Ok((name.to_string(), layer))
            })
            .collect::<Result<Vec<_>>>()?;
        let classes = decode_classes(ckpt.meta.get("classes").ok_or_else(|| missing("classes"))?)?;
        if rec.network.output_shape() != [classes.len()] {
            return Err(invalid("output width differs from class count"));
        }
        let gate = match ckpt.meta.get("tau_u") {
            Some(v) => Some(UncertaintyGate { threshold: v.parse().map_err(|_| invalid(format!("bad tau_u {v:?}")))? }),
            None => None,
        };
        Ok(Self { kind, network: rec.network.clone(), params: rec.params.clone(), points, classes, gate })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
