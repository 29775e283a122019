//! Simultaneous training of the primary learner and the comparator on
//! `classification + λ · relational` loss. Relational pairs are drawn inside each minibatch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::array::{DenseArray, Scalar};
use crate::comparator::{pair_backward, pair_forward, pair_loss, ComparatorModel, ComparatorParams, RelationTargets};
use crate::data::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::nn::{sgd_step, Activations, SgdConfig};
use crate::primary::{train_primary_with, PrimaryModel, StepHook, TrainReport};

#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig {
    pub lambda: f64,
    /// Extraction point feeding the comparator.
    pub point: String,
    /// Seed of the in-batch partner permutation, independent of the primary's shuffle and dropout.
    pub pair_seed: u64,
    pub comparator_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointReport {
    pub primary: TrainReport,
    /// Unweighted comparator loss of every step.
    pub comparator_losses: Vec<f64>,
    /// Steps per epoch, for slicing `comparator_losses`.
    pub steps_per_epoch: usize,
}

/// Comparator loss over pairs `(i, partner[i])` and its gradients.
///
/// Returns `(loss, comparator parameter gradients, d loss / d reps)`.
pub(crate) fn relational_gradient<T: Scalar>(
    cmp: &ComparatorModel,
    params: &ComparatorParams<T>,
    reps: &DenseArray<T>,
    labels: &[usize],
    partner: &[usize],
    z: &RelationTargets,
) -> Result<(f64, ComparatorParams<T>, DenseArray<T>)> {
    let n = reps.outer();
    if labels.len() != n || partner.len() != n {
        return Err(invalid("labels and partners must match the batch"));
    }
    let b = reps.select_rows(partner)?;
    let targets: Vec<f32> = (0..n).map(|i| z.get(labels[i], labels[partner[i]])).collect();
    let fwd = pair_forward(cmp, params, reps, &b)?;
    let (loss, g) = pair_loss(&fwd, &targets)?;
    let grads = pair_backward(cmp, params, &fwd, &g)?;
    let mut d = grads.da;
    for (i, &j) in partner.iter().enumerate() {
        for (x, &y) in d.row_mut(j).iter_mut().zip(grads.db.row(i)) {
            *x = *x + y;
        }
    }
    Ok((loss, grads.params, d))
}

struct JointHook<'a> {
    cmp: ComparatorModel,
    best: ComparatorParams<f32>,
    z: &'a RelationTargets,
    lambda: f64,
    layer: usize,
    l2: f64,
    rng: ChaCha8Rng,
    losses: Vec<f64>,
}

impl StepHook for JointHook<'_> {
    fn step(
        &mut self,
        _model: &PrimaryModel,
        acts: &Activations<f32>,
        labels: &[usize],
        learning_rate: f64,
    ) -> Result<(f64, Vec<(usize, DenseArray<f32>)>)> {
        let out = acts.layer_output(self.layer).ok_or(Error::MissingActivation(self.layer))?;
        let shape = out.shape().to_vec();
        let n = out.outer();
        let reps = out.clone().reshape(vec![n, out.len() / n])?;
        let mut partner: Vec<usize> = (0..n).collect();
        partner.shuffle(&mut self.rng);
        let (loss, grads, mut d) = relational_gradient(&self.cmp, &self.cmp.params, &reps, labels, &partner, self.z)?;
        self.losses.push(loss);
        if !loss.is_finite() {
            return Ok((f64::NAN, Vec::new()));
        }
        sgd_step(&mut self.cmp.params.trunk, &grads.trunk, learning_rate, self.l2)?;
        sgd_step(&mut self.cmp.params.head, &grads.head, learning_rate, self.l2)?;
        if self.lambda == 0.0 {
            return Ok((0.0, Vec::new()));
        }
        d.scale(self.lambda as f32);
        Ok((self.lambda * loss, vec![(self.layer, d.reshape(shape)?)]))
    }

    fn epoch_end(&mut self, _epoch: usize, improved: bool) {
        if improved {
            self.best = self.cmp.params.clone();
        }
    }
}

/// Trains both models together; returns the primary and comparator from the best validation epoch.
///
/// With `lambda = 0` the primary follows exactly the `train_primary` trajectory while the comparator
/// still learns from the evolving representations.
pub fn train_joint(
    primary: PrimaryModel,
    comparator: ComparatorModel,
    train: &LabeledDataset,
    val: &LabeledDataset,
    z: &RelationTargets,
    joint: &JointConfig,
    cfg: &SgdConfig,
) -> Result<(PrimaryModel, ComparatorModel, JointReport)> {
    if !(joint.lambda >= 0.0 && joint.lambda.is_finite()) {
        return Err(invalid(format!("lambda must be a non-negative number, got {}", joint.lambda)));
    }
    let layer = primary.point_layer(&joint.point)?;
    let width = primary.representation_width(&joint.point)?;
    if width != comparator.input_width() {
        return Err(Error::ShapeMismatch { layer, expected: vec![comparator.input_width()], actual: vec![width] });
    }
    if z.num_classes() != primary.num_classes() {
        return Err(invalid("relation targets and primary disagree on the class count"));
    }
    let mut hook = JointHook {
        best: comparator.params.clone(),
        cmp: comparator,
        z,
        lambda: joint.lambda,
        layer,
        l2: joint.comparator_l2,
        rng: ChaCha8Rng::seed_from_u64(joint.pair_seed),
        losses: Vec::new(),
    };
    let (primary, report) = train_primary_with(primary, train, val, cfg, &mut hook)?;
    let mut cmp = hook.cmp;
    cmp.params = hook.best;
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    Ok((primary, cmp, JointReport { primary: report, comparator_losses: hook.losses, steps_per_epoch }))
}
