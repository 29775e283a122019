use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::array::{DenseArray, Scalar};
use crate::error::{Error, Result};

use super::layer::{LayerSpec, ModelParams};
use super::network::Network;
use super::ops::{self, ConvGeom};

/// Forward-pass mode. Train mode samples dropout masks from the supplied generator.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut ChaCha8Rng),
}

#[derive(Debug, Clone)]
pub(crate) enum LayerCache<T> {
    None,
    DropoutMask(Vec<T>),
    PoolArgmax(Vec<u32>),
}

/// Every intermediate activation of one forward pass.
///
/// `outputs[0]` is the input batch and `outputs[i + 1]` the output of layer `start + i`.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    pub outputs: Vec<DenseArray<T>>,
    pub(crate) caches: Vec<LayerCache<T>>,
    pub(crate) start: usize,
}

impl<T: Scalar> Activations<T> {
    /// Output of the final layer.
    pub fn output(&self) -> &DenseArray<T> {
        self.outputs.last().expect("activations never empty")
    }

    /// Output of absolute layer index `layer`.
    pub fn layer_output(&self, layer: usize) -> Option<&DenseArray<T>> {
        layer.checked_sub(self.start).and_then(|i| self.outputs.get(i + 1))
    }
}

pub fn forward<T: Scalar>(
    net: &Network,
    params: &ModelParams<T>,
    batch: &DenseArray<T>,
    mode: Mode<'_>,
) -> Result<Activations<T>> {
    forward_range(net, params, 0, net.len(), batch, mode)
}

/// Runs layers `start..end`, where `input` is what layer `start` consumes.
pub fn forward_range<T: Scalar>(
    net: &Network,
    params: &ModelParams<T>,
    start: usize,
    end: usize,
    input: &DenseArray<T>,
    mut mode: Mode<'_>,
) -> Result<Activations<T>> {
    if start > end || end > net.len() {
        return Err(Error::InvalidArgument(format!(
            "layer range {start}..{end} outside network of {} layers",
            net.len()
        )));
    }
    if params.layers.len() != net.len() {
        return Err(Error::InvalidShape("parameter slot count differs from layer count".into()));
    }
    let expected = net.layer_input_shape(start);
    if input.shape().len() != expected.len() + 1 || &input.shape()[1..] != expected {
        return Err(Error::ShapeMismatch {
            layer: start,
            expected: expected.to_vec(),
            actual: input.shape()[1..].to_vec(),
        });
    }
    let n = input.outer();
    let mut outputs = Vec::with_capacity(end - start + 1);
    let mut caches = Vec::with_capacity(end - start);
    outputs.push(input.clone());

    for i in start..end {
        let x = outputs.last().expect("input pushed");
        let in_shape = net.layer_input_shape(i);
        let out_shape = net.layer_output_shape(i);
        let (data, cache) = match net.layers()[i] {
            LayerSpec::Dense { units } => {
                let p = param_slot(params, i)?;
                let y = ops::dense_forward(x.data(), p.weight.data(), p.bias.data(), n, in_shape[0], units);
                (y, LayerCache::None)
            }
            LayerSpec::Conv2d { filters, kernel } => {
                let p = param_slot(params, i)?;
                let g = ConvGeom { channels: in_shape[0], height: in_shape[1], width: in_shape[2], filters, kernel };
                (ops::conv_forward(g, x.data(), p.weight.data(), p.bias.data(), n), LayerCache::None)
            }
            LayerSpec::MaxPool2d { size } => {
                let (y, idx) = ops::maxpool_forward(x.data(), n, in_shape, size);
                (y, LayerCache::PoolArgmax(idx))
            }
            LayerSpec::Flatten => (x.data().to_vec(), LayerCache::None),
            LayerSpec::Relu => {
                (x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(), LayerCache::None)
            }
            LayerSpec::Softmax => (ops::softmax_rows(x.data(), in_shape[0]), LayerCache::None),
            LayerSpec::Dropout { keep } => match &mut mode {
                Mode::Infer => (x.data().to_vec(), LayerCache::None),
                Mode::Train(rng) => {
                    let scale = T::from_f64(1.0 / keep as f64);
                    let mask: Vec<T> =
                        (0..x.len()).map(|_| if rng.gen::<f32>() < keep { scale } else { T::zero() }).collect();
                    let y = x.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
                    (y, LayerCache::DropoutMask(mask))
                }
            },
        };
        let mut shape = Vec::with_capacity(out_shape.len() + 1);
        shape.push(n);
        shape.extend_from_slice(out_shape);
        outputs.push(DenseArray::from_parts_unchecked(shape, data));
        caches.push(cache);
    }
    Ok(Activations { outputs, caches, start })
}

pub(crate) fn param_slot<T>(params: &ModelParams<T>, layer: usize) -> Result<&super::layer::LayerParams<T>> {
    params
        .layers
        .get(layer)
        .and_then(|p| p.as_ref())
        .ok_or_else(|| Error::InvalidShape(format!("layer {layer} has no parameters")))
}

/// Convenience: infer-mode output of the whole network.
pub fn predict<T: Scalar>(net: &Network, params: &ModelParams<T>, batch: &DenseArray<T>) -> Result<DenseArray<T>> {
    let mut acts = forward(net, params, batch, Mode::Infer)?;
    Ok(acts.outputs.pop().expect("activations never empty"))
}
