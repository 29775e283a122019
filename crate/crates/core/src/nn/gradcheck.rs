//! Central finite-difference verification of the analytic backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::array::DenseArray;
use crate::error::Result;

use super::backward::backward;
use super::forward::{forward, Mode};
use super::layer::{LayerSpec, ModelParams};
use super::network::Network;

/// `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Central-difference derivative of `f` with respect to every coordinate of `x`.
pub fn central_difference<F>(x: &mut [f64], eps: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + eps;
            let plus = f(x);
            x[i] = orig - eps;
            let minus = f(x);
            x[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(layer, 0 = weight | 1 = bias, element)` of the worst agreement.
    pub worst: (usize, usize, usize),
    pub checked: usize,
}

/// Compares backward-pass parameter gradients of `loss(forward(batch))` with central differences.
///
/// `loss` maps the network output to `(value, d value / d output)`. The forward pass runs in infer mode.
pub fn grad_check<F>(
    net: &Network,
    params: &ModelParams<f64>,
    batch: &DenseArray<f64>,
    loss: F,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&DenseArray<f64>) -> Result<(f64, DenseArray<f64>)>,
{
    net.check_params(params)?;
    let acts = forward(net, params, batch, Mode::Infer)?;
    let (_, out_grad) = loss(acts.output())?;
    let analytic = backward(net, params, &acts, &out_grad)?.params;

    let eval = |p: &ModelParams<f64>| -> f64 {
        forward(net, p, batch, Mode::Infer).and_then(|a| loss(a.output())).map(|(v, _)| v).unwrap_or(f64::NAN)
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport { max_relative_error: 0.0, worst: (0, 0, 0), checked: 0 };
    for layer in 0..params.layers.len() {
        let Some(grad) = analytic.layers[layer].as_ref() else { continue };
        for (which, g) in [&grad.weight, &grad.bias].into_iter().enumerate() {
            for idx in 0..g.len() {
                let orig = *param_mut(&mut probe, layer, which, idx);
                *param_mut(&mut probe, layer, which, idx) = orig + eps;
                let plus = eval(&probe);
                *param_mut(&mut probe, layer, which, idx) = orig - eps;
                let minus = eval(&probe);
                *param_mut(&mut probe, layer, which, idx) = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let err = relative_error(g.data()[idx], numeric);
                report.checked += 1;
                if !(err <= report.max_relative_error) {
                    report.max_relative_error = err;
                    report.worst = (layer, which, idx);
                }
            }
        }
    }
    Ok(report)
}

fn param_mut(p: &mut ModelParams<f64>, layer: usize, which: usize, idx: usize) -> &mut f64 {
    let lp = p.layers[layer].as_mut().expect("parameter layer");
    let arr = if which == 0 { &mut lp.weight } else { &mut lp.bias };
    &mut arr.data_mut()[idx]
}

/// Uniform `[-1, 1)` batch.
pub fn random_batch(shape: Vec<usize>, seed: u64) -> DenseArray<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = shape.iter().product();
    DenseArray::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("length matches shape")
}

/// Smallest distance of any ReLU input to zero, or of any pool window's max to its runner-up.
///
/// Central differences are only trustworthy when this exceeds the step size.
pub fn kink_margin(net: &Network, params: &ModelParams<f64>, batch: &DenseArray<f64>) -> Result<f64> {
    let acts = forward(net, params, batch, Mode::Infer)?;
    let mut margin = f64::INFINITY;
    for (i, layer) in net.layers().iter().enumerate() {
        let x = &acts.outputs[i];
        match *layer {
            LayerSpec::Relu => {
                for v in x.data() {
                    margin = margin.min(v.abs());
                }
            }
            LayerSpec::MaxPool2d { size } => {
                let s = net.layer_input_shape(i);
                let (c, h, w) = (s[0], s[1], s[2]);
                for e in 0..x.outer() {
                    let xr = x.row(e);
                    for ch in 0..c {
                        for oy in 0..h / size {
                            for ox in 0..w / size {
                                let mut vals: Vec<f64> = (0..size * size)
                                    .map(|k| xr[(ch * h + oy * size + k / size) * w + ox * size + k % size])
                                    .collect();
                                vals.sort_by(|a, b| b.total_cmp(a));
                                margin = margin.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(margin)
}

/// Draws parameters and inputs until every kink is at least `min_margin` away.
pub fn kink_free_draw(
    net: &Network,
    batch_shape: &[usize],
    min_margin: f64,
    tries: u64,
) -> Result<Option<(ModelParams<f64>, DenseArray<f64>)>> {
    for seed in 0..tries {
        let params = net.init_params::<f64>(seed);
        let batch = random_batch(batch_shape.to_vec(), 1000 + seed);
        if kink_margin(net, &params, &batch)? > min_margin {
            return Ok(Some((params, batch)));
        }
    }
    Ok(None)
}
