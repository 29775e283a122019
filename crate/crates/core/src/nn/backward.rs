use crate::array::{DenseArray, Scalar};
use crate::error::{Error, Result};

use super::forward::{param_slot, Activations, LayerCache};
use super::layer::{LayerParams, LayerSpec, ModelParams};
use super::network::Network;
use super::ops::{self, ConvGeom};

/// Parameter gradients plus the gradient with respect to the forward input.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: ModelParams<T>,
    pub input: DenseArray<T>,
}

/// Backpropagates `output_grad` (gradient of the loss with respect to the final output).
pub fn backward<T: Scalar>(
    net: &Network,
    params: &ModelParams<T>,
    acts: &Activations<T>,
    output_grad: &DenseArray<T>,
) -> Result<Gradients<T>> {
    let last = acts.start + acts.caches.len();
    if last == acts.start {
        return Err(Error::MissingActivation(acts.start));
    }
    backward_injected(net, params, acts, &[(last - 1, output_grad)])
}

/// Backpropagates gradients injected at arbitrary layer outputs.
///
/// Each `(layer, grad)` adds `grad` to the loss gradient with respect to the output of `layer`.
/// Layers above the highest injection point contribute nothing.
pub fn backward_injected<T: Scalar>(
    net: &Network,
    params: &ModelParams<T>,
    acts: &Activations<T>,
    injections: &[(usize, &DenseArray<T>)],
) -> Result<Gradients<T>> {
    let start = acts.start;
    let end = start + acts.caches.len();
    if acts.outputs.len() != acts.caches.len() + 1 || end > net.len() {
        return Err(Error::MissingActivation(end));
    }
    let top = injections.iter().map(|&(l, _)| l).max().ok_or(Error::Empty("gradient injections"))?;
    if top >= end || injections.iter().any(|&(l, _)| l < start) {
        return Err(Error::MissingActivation(top));
    }
    for &(l, g) in injections {
        let out = &acts.outputs[l - start + 1];
        if g.shape() != out.shape() {
            return Err(Error::ShapeMismatch { layer: l, expected: out.shape().to_vec(), actual: g.shape().to_vec() });
        }
    }

    let mut grads = params.zeros_like();
    let mut grad = DenseArray::zeros(acts.outputs[top - start + 1].shape().to_vec());
    let n = acts.outputs[0].outer();

    for i in (start..=top).rev() {
        for &(l, g) in injections {
            if l == i {
                grad.add_assign(g)?;
            }
        }
        let x = &acts.outputs[i - start];
        let y = &acts.outputs[i - start + 1];
        let in_shape = net.layer_input_shape(i);
        let dx: Vec<T> = match net.layers()[i] {
            LayerSpec::Dense { units } => {
                let p = param_slot(params, i)?;
                let (dx, dw, db) = ops::dense_backward(x.data(), p.weight.data(), grad.data(), n, in_shape[0], units);
                store(&mut grads, i, p, dw, db);
                dx
            }
            LayerSpec::Conv2d { filters, kernel } => {
                let p = param_slot(params, i)?;
                let g = ConvGeom { channels: in_shape[0], height: in_shape[1], width: in_shape[2], filters, kernel };
                let (dx, dw, db) = ops::conv_backward(g, x.data(), p.weight.data(), grad.data(), n);
                store(&mut grads, i, p, dw, db);
                dx
            }
            LayerSpec::MaxPool2d { .. } => match &acts.caches[i - start] {
                LayerCache::PoolArgmax(idx) => ops::maxpool_backward(grad.data(), idx, n, x.inner()),
                _ => return Err(Error::MissingActivation(i)),
            },
            LayerSpec::Flatten => grad.data().to_vec(),
            LayerSpec::Relu => {
                grad.data().iter().zip(y.data()).map(|(&g, &v)| if v > T::zero() { g } else { T::zero() }).collect()
            }
            LayerSpec::Softmax => ops::softmax_backward(y.data(), grad.data(), in_shape[0]),
            LayerSpec::Dropout { .. } => match &acts.caches[i - start] {
                LayerCache::DropoutMask(mask) => grad.data().iter().zip(mask).map(|(&g, &m)| g * m).collect(),
                // Infer-mode dropout is the identity.
                LayerCache::None => grad.data().to_vec(),
                LayerCache::PoolArgmax(_) => return Err(Error::MissingActivation(i)),
            },
        };
        grad = DenseArray::from_parts_unchecked(x.shape().to_vec(), dx);
    }
    Ok(Gradients { params: grads, input: grad })
}

fn store<T: Scalar>(grads: &mut ModelParams<T>, layer: usize, p: &LayerParams<T>, dw: Vec<T>, db: Vec<T>) {
    grads.layers[layer] = Some(LayerParams {
        weight: DenseArray::from_parts_unchecked(p.weight.shape().to_vec(), dw),
        bias: DenseArray::from_parts_unchecked(p.bias.shape().to_vec(), db),
    });
}
