//! Siamese comparator over representation pairs.
//!
//! Both inputs pass through one shared trunk. In antisymmetric mode a scoring head `s` sees the
//! concatenated embeddings and the output is `tanh(s(a, b) − s(b, a))`, so `t(a, b) = −t(b, a)`
//! holds exactly for any parameters. In three-class mode the head is a softmax over {−1, 0, +1}.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{DenseArray, Scalar};
use crate::bank::RepresentationBank;
use crate::error::{invalid, Error, Result};
use crate::nn::{
    backward, forward, loss, sgd_step, Checkpoint, LayerSpec, Mode, ModelParams, Network, NetworkRecord, SgdConfig,
};
pub use crate::relation::{relation, RelationTargets};

const TRUNK_UNITS: [usize; 2] = [64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    Antisymmetric,
    ThreeClass,
}

impl fmt::Display for HeadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadMode::Antisymmetric => "antisymmetric",
            HeadMode::ThreeClass => "three_class",
        })
    }
}

impl FromStr for HeadMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "antisymmetric" => Ok(HeadMode::Antisymmetric),
            "three_class" => Ok(HeadMode::ThreeClass),
            other => Err(invalid(format!("unknown head mode {other:?}"))),
        }
    }
}

/// Maps a ternary relation to a class index of the three-class head.
pub fn relation_class(z: f32) -> usize {
    if z < -0.5 {
        0
    } else if z > 0.5 {
        2
    } else {
        1
    }
}

/// Per-feature affine normalization applied to both inputs before the trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

impl Standardizer {
    /// Fits mean and standard deviation per column; constant columns get unit scale.
    pub fn fit(rows: &DenseArray<f32>) -> Self {
        let (n, w) = (rows.outer(), rows.inner());
        let mut mean = vec![0.0f64; w];
        for i in 0..n {
            for (m, &v) in mean.iter_mut().zip(rows.row(i)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; w];
        for i in 0..n {
            for ((s, &v), &m) in var.iter_mut().zip(rows.row(i)).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let inv_std = var
            .iter()
            .map(|&s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-6 {
                    (1.0 / sd) as f32
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean: mean.into_iter().map(|m| m as f32).collect(), inv_std }
    }

    fn apply<T: Scalar>(&self, x: &DenseArray<T>) -> DenseArray<T> {
        let w = self.mean.len();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % w;
            *v = (*v - T::from_f64(self.mean[c] as f64)) * T::from_f64(self.inv_std[c] as f64);
        }
        out
    }

    fn backward<T: Scalar>(&self, grad: &mut DenseArray<T>) {
        let w = self.inv_std.len();
        for (i, g) in grad.data_mut().iter_mut().enumerate() {
            *g = *g * T::from_f64(self.inv_std[i % w] as f64);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorParams<T> {
    pub trunk: ModelParams<T>,
    pub head: ModelParams<T>,
}

impl<T: Scalar> ComparatorParams<T> {
    pub fn cast<U: Scalar>(&self) -> ComparatorParams<U> {
        ComparatorParams { trunk: self.trunk.cast(), head: self.head.cast() }
    }

    pub fn zeros_like(&self) -> Self {
        Self { trunk: self.trunk.zeros_like(), head: self.head.zeros_like() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorModel {
    pub mode: HeadMode,
    pub trunk: Network,
    pub head: Network,
    pub params: ComparatorParams<f32>,
    pub standardizer: Option<Standardizer>,
}

impl ComparatorModel {
    /// `head_hidden = 0` gives a linear scoring head.
    pub fn new(mode: HeadMode, input_width: usize, head_hidden: usize, seed: u64) -> Result<Self> {
        if input_width == 0 {
            return Err(invalid("comparator input width must be positive"));
        }
        let trunk = Network::new(
            vec![input_width],
            vec![
                LayerSpec::Dense { units: TRUNK_UNITS[0] },
                LayerSpec::Relu,
                LayerSpec::Dense { units: TRUNK_UNITS[1] },
                LayerSpec::Relu,
            ],
        )?;
        let mut head_layers = Vec::new();
        if head_hidden > 0 {
            head_layers.push(LayerSpec::Dense { units: head_hidden });
            head_layers.push(LayerSpec::Relu);
        }
        match mode {
            HeadMode::Antisymmetric => head_layers.push(LayerSpec::Dense { units: 1 }),
            HeadMode::ThreeClass => {
                head_layers.push(LayerSpec::Dense { units: 3 });
                head_layers.push(LayerSpec::Softmax);
            }
        }
        let head = Network::new(vec![2 * TRUNK_UNITS[1]], head_layers)?;
        let params = ComparatorParams { trunk: trunk.init_params(seed), head: head.init_params(seed ^ 0x5bd1_e995) };
        Ok(Self { mode, trunk, head, params, standardizer: None })
    }

    pub fn input_width(&self) -> usize {
        self.trunk.input_shape()[0]
    }

    fn check_pair(&self, a: &DenseArray<f32>, b: &DenseArray<f32>) -> Result<()> {
        for x in [a, b] {
            if x.shape().len() != 2 || x.inner() != self.input_width() {
                return Err(Error::ShapeMismatch {
                    layer: 0,
                    expected: vec![self.input_width()],
                    actual: x.shape()[1..].to_vec(),
                });
            }
        }
        if a.outer() != b.outer() {
            return Err(invalid("left and right batches differ in length"));
        }
        Ok(())
    }

    /// Relation values in `[−1, 1]` for paired rows. Three-class mode reports `p(+1) − p(−1)`.
    pub fn relate(&self, a: &DenseArray<f32>, b: &DenseArray<f32>) -> Result<Vec<f32>> {
        self.check_pair(a, b)?;
        let out = pair_forward(self, &self.params, a, b)?;
        Ok(out.values())
    }

    /// Three-class distributions `(n, 3)` over {−1, 0, +1}.
    pub fn relate_distribution(&self, a: &DenseArray<f32>, b: &DenseArray<f32>) -> Result<DenseArray<f32>> {
        if self.mode != HeadMode::ThreeClass {
            return Err(invalid("class distributions need a three-class comparator"));
        }
        self.check_pair(a, b)?;
        match pair_forward(self, &self.params, a, b)?.head {
            HeadOut::Classes { probs, .. } => Ok(probs),
            HeadOut::Scores { .. } => unreachable!("mode checked above"),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint {
            networks: vec![
                NetworkRecord { name: "trunk".into(), network: self.trunk.clone(), params: self.params.trunk.clone() },
                NetworkRecord { name: "head".into(), network: self.head.clone(), params: self.params.head.clone() },
            ],
            ..Default::default()
        };
        ckpt.meta.insert("role".into(), "comparator".into());
        ckpt.meta.insert("mode".into(), self.mode.to_string());
        if let Some(s) = &self.standardizer {
            let join = |v: &[f32]| v.iter().map(f32::to_string).collect::<Vec<_>>().join(",");
            ckpt.meta.insert("std_mean".into(), join(&s.mean));
            ckpt.meta.insert("std_inv".into(), join(&s.inv_std));
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let missing = |k: &str| invalid(format!("comparator checkpoint lacks {k:?}"));
        let trunk = ckpt.network("trunk").ok_or_else(|| missing("trunk"))?;
        let head = ckpt.network("head").ok_or_else(|| missing("head"))?;
        let mode: HeadMode = ckpt.meta.get("mode").ok_or_else(|| missing("mode"))?.parse()?;
        let parse = |k: &str| -> Result<Vec<f32>> {
            ckpt.meta[k].split(',').map(|v| v.parse().map_err(|_| invalid(format!("bad {k} entry {v:?}")))).collect()
        };
        let standardizer = if ckpt.meta.contains_key("std_mean") {
            let s = Standardizer { mean: parse("std_mean")?, inv_std: parse("std_inv")? };
            let w = trunk.network.input_shape()[0];
            if s.mean.len() != w || s.inv_std.len() != w {
                return Err(invalid("standardizer width differs from trunk input"));
            }
            Some(s)
        } else {
            None
        };
        let expected_out = match mode {
            HeadMode::Antisymmetric => 1,
            HeadMode::ThreeClass => 3,
        };
        if head.network.output_shape() != [expected_out]
            || head.network.input_shape() != [2 * trunk.network.output_shape()[0]]
        {
            return Err(invalid("head shape inconsistent with mode or trunk"));
        }
        Ok(Self {
            mode,
            trunk: trunk.network.clone(),
            head: head.network.clone(),
            params: ComparatorParams { trunk: trunk.params.clone(), head: head.params.clone() },
            standardizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Forward state kept for the backward pass.
pub(crate) struct PairForward<T> {
    acts_a: crate::nn::Activations<T>,
    acts_b: crate::nn::Activations<T>,
    head: HeadOut<T>,
}

pub(crate) enum HeadOut<T> {
    Scores { acts_ab: crate::nn::Activations<T>, acts_ba: crate::nn::Activations<T>, t: Vec<T> },
    Classes { acts: crate::nn::Activations<T>, probs: DenseArray<T> },
}

impl<T: Scalar> PairForward<T> {
    fn values(&self) -> Vec<T> {
        match &self.head {
            HeadOut::Scores { t, .. } => t.clone(),
            HeadOut::Classes { probs, .. } => (0..probs.outer()).map(|i| probs.row(i)[2] - probs.row(i)[0]).collect(),
        }
    }
}

fn concat_rows<T: Scalar>(a: &DenseArray<T>, b: &DenseArray<T>) -> DenseArray<T> {
    let (n, wa, wb) = (a.outer(), a.inner(), b.inner());
    let mut data = Vec::with_capacity(n * (wa + wb));
    for i in 0..n {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    DenseArray::new(vec![n, wa + wb], data).expect("positive widths")
}

/// Splits a `(n, 2w)` gradient into its left and right halves.
fn split_rows<T: Scalar>(g: &DenseArray<T>, w: usize) -> (DenseArray<T>, DenseArray<T>) {
    let n = g.outer();
    let (mut l, mut r) = (Vec::with_capacity(n * w), Vec::with_capacity(n * w));
    for i in 0..n {
        l.extend_from_slice(&g.row(i)[..w]);
        r.extend_from_slice(&g.row(i)[w..]);
    }
    (DenseArray::new(vec![n, w], l).expect("w > 0"), DenseArray::new(vec![n, w], r).expect("w > 0"))
}

pub(crate) fn pair_forward<T: Scalar>(
    model: &ComparatorModel,
    params: &ComparatorParams<T>,
    a: &DenseArray<T>,
    b: &DenseArray<T>,
) -> Result<PairForward<T>> {
    let (a, b) = match &model.standardizer {
        Some(s) => (s.apply(a), s.apply(b)),
        None => (a.clone(), b.clone()),
    };
    let acts_a = forward(&model.trunk, &params.trunk, &a, Mode::Infer)?;
    let acts_b = forward(&model.trunk, &params.trunk, &b, Mode::Infer)?;
    let (ea, eb) = (acts_a.output(), acts_b.output());
    let head = match model.mode {
        HeadMode::Antisymmetric => {
            let acts_ab = forward(&model.head, &params.head, &concat_rows(ea, eb), Mode::Infer)?;
            let acts_ba = forward(&model.head, &params.head, &concat_rows(eb, ea), Mode::Infer)?;
            let t =
                acts_ab.output().data().iter().zip(acts_ba.output().data()).map(|(&x, &y)| (x - y).tanh()).collect();
            HeadOut::Scores { acts_ab, acts_ba, t }
        }
        HeadMode::ThreeClass => {
            let acts = forward(&model.head, &params.head, &concat_rows(ea, eb), Mode::Infer)?;
            let probs = acts.output().clone();
            HeadOut::Classes { acts, probs }
        }
    };
    Ok(PairForward { acts_a, acts_b, head })
}

pub(crate) struct PairGrads<T> {
    pub params: ComparatorParams<T>,
    pub da: DenseArray<T>,
    pub db: DenseArray<T>,
}

/// Backward pass given `dL/dt` (antisymmetric) or `dL/dprobs` (three-class).
pub(crate) fn pair_backward<T: Scalar>(
    model: &ComparatorModel,
    params: &ComparatorParams<T>,
    fwd: &PairForward<T>,
    out_grad: &DenseArray<T>,
) -> Result<PairGrads<T>> {
    let w = model.trunk.output_shape()[0];
    let (head_grads, gea, geb) = match &fwd.head {
        HeadOut::Scores { acts_ab, acts_ba, t } => {
            let n = t.len();
            let du: Vec<T> = t.iter().zip(out_grad.data()).map(|(&t, &g)| g * (T::one() - t * t)).collect();
            let ds1 = DenseArray::new(vec![n, 1], du.clone())?;
            let ds2 = DenseArray::new(vec![n, 1], du.into_iter().map(|v| -v).collect())?;
            let g1 = backward(&model.head, &params.head, acts_ab, &ds1)?;
            let g2 = backward(&model.head, &params.head, acts_ba, &ds2)?;
            let (a1, b1) = split_rows(&g1.input, w);
            let (b2, a2) = split_rows(&g2.input, w);
            let mut hp = g1.params;
            hp.add_assign(&g2.params)?;
            let mut gea = a1;
            gea.add_assign(&a2)?;
            let mut geb = b1;
            geb.add_assign(&b2)?;
            (hp, gea, geb)
        }
        HeadOut::Classes { acts, .. } => {
            // The head ends in softmax; inject the logits gradient directly when given one.
            let g = backward(&model.head, &params.head, acts, out_grad)?;
            let (gea, geb) = split_rows(&g.input, w);
            (g.params, gea, geb)
        }
    };
    let ta = backward(&model.trunk, &params.trunk, &fwd.acts_a, &gea)?;
    let tb = backward(&model.trunk, &params.trunk, &fwd.acts_b, &geb)?;
    let mut trunk = ta.params;
    trunk.add_assign(&tb.params)?;
    let (mut da, mut db) = (ta.input, tb.input);
    if let Some(s) = &model.standardizer {
        s.backward(&mut da);
        s.backward(&mut db);
    }
    Ok(PairGrads { params: ComparatorParams { trunk, head: head_grads }, da, db })
}

/// Comparator loss and output gradient for a forward result.
pub(crate) fn pair_loss<T: Scalar>(fwd: &PairForward<T>, targets: &[f32]) -> Result<(f64, DenseArray<T>)> {
    match &fwd.head {
        HeadOut::Scores { t, .. } => {
            let pred = DenseArray::new(vec![t.len()], t.clone())?;
            let tgt: Vec<T> = targets.iter().map(|&z| T::from_f64(z as f64)).collect();
            loss::mean_squared_error(&pred, &tgt)
        }
        HeadOut::Classes { probs, .. } => {
            let labels: Vec<usize> = targets.iter().map(|&z| relation_class(z)).collect();
            loss::cross_entropy(probs, &labels)
        }
    }
}

/// Ordered pairs of rows `(left, right, target)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub rows: DenseArray<f32>,
    pub pairs: Vec<(usize, usize, f32)>,
}

impl PairDataset {
    /// All ordered pairs of `rows` minus an exact seeded drop of `drop_fraction` of them.
    ///
    /// With `symmetrize`, drops remove `(p, q)` and `(q, p)` together so every kept pair has its mirror.
    pub fn from_rows(
        rows: DenseArray<f32>,
        labels: &[usize],
        z: &RelationTargets,
        drop_fraction: f64,
        symmetrize: bool,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&drop_fraction) {
            return Err(invalid(format!("drop fraction {drop_fraction} must lie in [0, 1)")));
        }
        let m = labels.len();
        if rows.outer() != m {
            return Err(invalid("rows and labels differ in count"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= z.num_classes()) {
            return Err(invalid(format!("label {l} not covered by the relation targets")));
        }
        let total = m * m;
        let keep = ((1.0 - drop_fraction) * total as f64).round() as usize;
        let drop = total - keep;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dropped = vec![false; total];
        if symmetrize {
            let mut offdiag: Vec<(usize, usize)> = (0..m).flat_map(|p| (p + 1..m).map(move |q| (p, q))).collect();
            let mut diag: Vec<usize> = (0..m).collect();
            offdiag.shuffle(&mut rng);
            diag.shuffle(&mut rng);
            let mut mirrored = (drop / 2).min(offdiag.len());
            let mut selfs = drop - 2 * mirrored;
            if selfs > diag.len() {
                // Not enough self-pairs for the odd remainder; unreachable for drop < total.
                selfs -= 2;
                mirrored += 1;
            }
            for &(p, q) in &offdiag[..mirrored] {
                dropped[p * m + q] = true;
                dropped[q * m + p] = true;
            }
            for &p in &diag[..selfs] {
                dropped[p * m + p] = true;
            }
        } else {
            let mut all: Vec<usize> = (0..total).collect();
            all.shuffle(&mut rng);
            for &i in &all[..drop] {
                dropped[i] = true;
            }
        }
        let pairs = (0..total)
            .filter(|&i| !dropped[i])
            .map(|i| {
                let (p, q) = (i / m, i % m);
                (p, q, z.get(labels[p], labels[q]))
            })
            .collect();
        Ok(Self { rows, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Result<(DenseArray<f32>, DenseArray<f32>, Vec<f32>)> {
        let left: Vec<usize> = idx.iter().map(|&i| self.pairs[i].0).collect();
        let right: Vec<usize> = idx.iter().map(|&i| self.pairs[i].1).collect();
        let targets = idx.iter().map(|&i| self.pairs[i].2).collect();
        Ok((self.rows.select_rows(&left)?, self.rows.select_rows(&right)?, targets))
    }
}

pub fn make_pair_dataset(
    bank: &RepresentationBank,
    z: &RelationTargets,
    drop_fraction: f64,
    symmetrize: bool,
    seed: u64,
) -> Result<PairDataset> {
    PairDataset::from_rows(bank.rows.clone(), &bank.labels, z, drop_fraction, symmetrize, seed)
}

/// Single comparator evaluation `t(r_p, r_q)`.
pub fn comparator_forward(model: &ComparatorModel, r_p: &[f32], r_q: &[f32]) -> Result<f32> {
    let a = DenseArray::new(vec![1, r_p.len()], r_p.to_vec())?;
    let b = DenseArray::new(vec![1, r_q.len()], r_q.to_vec())?;
    Ok(model.relate(&a, &b)?[0])
}

/// Ternary decision for a relation value: the three-class argmax, or rounding in antisymmetric mode.
pub fn predicted_relation(model: &ComparatorModel, a: &DenseArray<f32>, b: &DenseArray<f32>) -> Result<Vec<i8>> {
    match model.mode {
        HeadMode::Antisymmetric => Ok(model
            .relate(a, b)?
            .into_iter()
            .map(|t| {
                if t > 0.5 {
                    1
                } else if t < -0.5 {
                    -1
                } else {
                    0
                }
            })
            .collect()),
        HeadMode::ThreeClass => {
            let p = model.relate_distribution(a, b)?;
            Ok((0..p.outer()).map(|i| p.argmax_row(i) as i8 - 1).collect())
        }
    }
}

/// Fraction of pairs whose ternary prediction equals the target.
pub fn pair_accuracy(model: &ComparatorModel, pairs: &PairDataset) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair dataset"));
    }
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let mut correct = 0;
    for chunk in idx.chunks(1024) {
        let (a, b, z) = pairs.batch(chunk)?;
        let pred = predicted_relation(model, &a, &b)?;
        correct += pred.iter().zip(&z).filter(|(&p, &z)| p as f32 == z).count();
    }
    Ok(correct as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparatorEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Minibatch SGD on squared error (antisymmetric) or cross-entropy (three-class).
pub fn train_comparator(
    mut model: ComparatorModel,
    pairs: &PairDataset,
    cfg: &SgdConfig,
) -> Result<(ComparatorModel, Vec<ComparatorEpoch>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("pair dataset"));
    }
    if pairs.rows.inner() != model.input_width() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![model.input_width()],
            actual: vec![pairs.rows.inner()],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (a, b, z) = pairs.batch(chunk)?;
            let fwd = pair_forward(&model, &model.params, &a, &b)?;
            let (l, g) = pair_loss(&fwd, &z)?;
            if !l.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += l * chunk.len() as f64;
            let grads = pair_backward(&model, &model.params, &fwd, &g)?;
            let diverged = |e| match e {
                Error::NonFiniteGradient { .. } => Error::Diverged { epoch },
                other => other,
            };
            sgd_step(&mut model.params.trunk, &grads.params.trunk, lr, cfg.l2).map_err(diverged)?;
            sgd_step(&mut model.params.head, &grads.params.head, lr, cfg.l2).map_err(diverged)?;
        }
        history.push(ComparatorEpoch {
            epoch,
            loss: loss_sum / pairs.len() as f64,
            accuracy: pair_accuracy(&model, pairs)?,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shapes::ShapeClass;
    use crate::data::ClassInfo;
    use crate::nn::gradcheck::{central_difference, relative_error};
    use rand::Rng;

    fn shape_z() -> RelationTargets {
        let classes: Vec<ClassInfo> = ShapeClass::KNOWN.iter().map(|c| c.info()).collect();
        RelationTargets::from_classes(&classes).unwrap()
    }

    fn random_rows(n: usize, w: usize, seed: u64) -> DenseArray<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseArray::new(vec![n, w], (0..n * w).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    /// Rows whose first feature encodes the class's edge count, plus noise features.
    fn ordinal_rows(per_class: usize, w: usize, seed: u64) -> (DenseArray<f32>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..4 {
            for _ in 0..per_class {
                labels.push(c);
                data.push(c as f32 + rng.gen_range(-0.2..0.2));
                data.extend((1..w).map(|_| rng.gen_range(-1.0f32..1.0)));
            }
        }
        (DenseArray::new(vec![labels.len(), w], data).unwrap(), labels)
    }

    #[test]
    fn antisymmetric_exactly() {
        for head_hidden in [0, 16] {
            let m = ComparatorModel::new(HeadMode::Antisymmetric, 10, head_hidden, 1).unwrap();
            let a = random_rows(500, 10, 2);
            let b = random_rows(500, 10, 3);
            let ab = m.relate(&a, &b).unwrap();
            let ba = m.relate(&b, &a).unwrap();
            for (x, y) in ab.iter().zip(&ba) {
                assert!((x + y).abs() <= 1e-6);
                assert!((-1.0..=1.0).contains(x));
            }
            assert!(m.relate(&a, &a).unwrap().iter().all(|&t| t == 0.0));
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let m = ComparatorModel::new(HeadMode::Antisymmetric, 10, 0, 1).unwrap();
        assert!(comparator_forward(&m, &[0.0; 9], &[0.0; 10]).is_err());
    }

    #[test]
    fn pair_counts() {
        let (rows, labels) = ordinal_rows(25, 3, 0);
        let z = shape_z();
        assert_eq!(PairDataset::from_rows(rows.clone(), &labels, &z, 0.0, false, 0).unwrap().len(), 10000);
        for sym in [false, true] {
            let p = PairDataset::from_rows(rows.clone(), &labels, &z, 0.2, sym, 4).unwrap();
            assert_eq!(p.len(), 8000);
        }
        let p = PairDataset::from_rows(rows.clone(), &labels, &z, 0.2001, true, 4).unwrap();
        assert_eq!(p.len(), 7999);
        assert!(PairDataset::from_rows(rows.clone(), &labels, &z, 1.0, false, 0).is_err());
        let one = PairDataset::from_rows(rows.select_rows(&[0]).unwrap(), &[2], &z, 0.0, false, 0).unwrap();
        assert_eq!(one.pairs, vec![(0, 0, 0.0)]);
    }

    #[test]
    fn symmetrized_pairs_have_mirrors() {
        let (rows, labels) = ordinal_rows(5, 3, 0);
        let p = PairDataset::from_rows(rows, &labels, &shape_z(), 0.37, true, 9).unwrap();
        let set: std::collections::HashSet<(usize, usize)> = p.pairs.iter().map(|&(a, b, _)| (a, b)).collect();
        for &(a, b, z) in &p.pairs {
            assert!(set.contains(&(b, a)));
            assert_eq!(z, shape_z().get(labels[a], labels[b]));
        }
    }

    #[test]
    fn learns_ordinal_relation() {
        let (rows, labels) = ordinal_rows(10, 6, 1);
        let (held, held_labels) = ordinal_rows(10, 6, 2);
        let z = shape_z();
        let pairs = PairDataset::from_rows(rows, &labels, &z, 0.2, false, 3).unwrap();
        let cfg = SgdConfig { learning_rate: 0.05, l2: 0.0, batch_size: 32, epochs: 40, ..Default::default() };
        for mode in [HeadMode::Antisymmetric, HeadMode::ThreeClass] {
            let m = ComparatorModel::new(mode, 6, 0, 4).unwrap();
            let (m, hist) = train_comparator(m, &pairs, &cfg).unwrap();
            assert!(hist.last().unwrap().accuracy >= 0.95, "{mode}: {:?}", hist.last());
            let fresh = PairDataset::from_rows(held.clone(), &held_labels, &z, 0.0, false, 0).unwrap();
            assert!(pair_accuracy(&m, &fresh).unwrap() >= 0.9);
        }
    }

    #[test]
    fn zero_targets_converge_to_zero() {
        let rows = random_rows(12, 4, 5);
        let z = RelationTargets::from_matrix(vec![vec![0.0]]).unwrap();
        let pairs = PairDataset::from_rows(rows.clone(), &[0; 12], &z, 0.0, false, 0).unwrap();
        let cfg = SgdConfig { learning_rate: 0.05, epochs: 30, ..Default::default() };
        let m = ComparatorModel::new(HeadMode::Antisymmetric, 4, 0, 6).unwrap();
        let (m, _) = train_comparator(m, &pairs, &cfg).unwrap();
        let shifted: Vec<usize> = (0..12).map(|i| (i + 5) % 12).collect();
        let t = m.relate(&rows, &rows.select_rows(&shifted).unwrap()).unwrap();
        assert!(t.iter().all(|v| v.abs() < 0.1), "{t:?}");
    }

    fn loss_of(
        model: &ComparatorModel,
        p: &ComparatorParams<f64>,
        a: &DenseArray<f64>,
        b: &DenseArray<f64>,
        z: &[f32],
    ) -> f64 {
        pair_loss(&pair_forward(model, p, a, b).unwrap(), z).unwrap().0
    }

    #[test]
    fn backward_matches_finite_differences() {
        for mode in [HeadMode::Antisymmetric, HeadMode::ThreeClass] {
            let mut m = ComparatorModel::new(mode, 5, 6, 8).unwrap();
            m.standardizer = Some(Standardizer::fit(&random_rows(20, 5, 1)));
            let p: ComparatorParams<f64> = m.params.cast();
            let a: DenseArray<f64> = random_rows(4, 5, 2).cast();
            let b: DenseArray<f64> = random_rows(4, 5, 3).cast();
            let z = [1.0, -1.0, 0.0, 1.0];
            let fwd = pair_forward(&m, &p, &a, &b).unwrap();
            let (_, g) = pair_loss(&fwd, &z).unwrap();
            let grads = pair_backward(&m, &p, &fwd, &g).unwrap();
            let mut worst = 0.0f64;
            let mut xa = a.data().to_vec();
            let num = central_difference(&mut xa, 1e-6, |x| {
                loss_of(&m, &p, &DenseArray::new(vec![4, 5], x.to_vec()).unwrap(), &b, &z)
            });
            for (n, an) in num.iter().zip(grads.da.data()) {
                worst = worst.max(relative_error(*an, *n));
            }
            let mut xb = b.data().to_vec();
            let num = central_difference(&mut xb, 1e-6, |x| {
                loss_of(&m, &p, &a, &DenseArray::new(vec![4, 5], x.to_vec()).unwrap(), &z)
            });
            for (n, an) in num.iter().zip(grads.db.data()) {
                worst = worst.max(relative_error(*an, *n));
            }
            let head_w = grads.params.head.layers[0].as_ref().unwrap().weight.data().to_vec();
            let mut w = p.head.layers[0].as_ref().unwrap().weight.data().to_vec();
            let num = central_difference(&mut w, 1e-6, |x| {
                let mut q = p.clone();
                q.head.layers[0].as_mut().unwrap().weight.data_mut().copy_from_slice(x);
                loss_of(&m, &q, &a, &b, &z)
            });
            for (n, an) in num.iter().zip(&head_w) {
                worst = worst.max(relative_error(*an, *n));
            }
            assert!(worst < 1e-5, "{mode}: {worst}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = ComparatorModel::new(HeadMode::ThreeClass, 7, 0, 1).unwrap();
        m.standardizer = Some(Standardizer::fit(&random_rows(9, 7, 2)));
        let back =
            ComparatorModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
