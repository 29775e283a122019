use serde::{Deserialize, Serialize};

use crate::array::Scalar;
use crate::error::{Error, Result};

use super::layer::ModelParams;

/// Plain minibatch SGD with an L2 penalty and step decay of the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Multiply the learning rate by `decay_factor` every `decay_every` epochs (0 disables).
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, l2: 1e-4, batch_size: 32, epochs: 15, seed: 0, decay_every: 5, decay_factor: 0.5 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::InvalidArgument(format!("l2 coefficient {} must be non-negative", self.l2)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.decay_factor > 0.0) {
            return Err(Error::InvalidArgument("decay factor must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during zero-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.decay_every {
            0 => self.learning_rate,
            every => self.learning_rate * self.decay_factor.powi((epoch / every) as i32),
        }
    }
}

/// `θ ← θ − lr·(g + l2·θ)` for every parameter. Leaves `params` untouched if any gradient is not finite.
pub fn sgd_step<T: Scalar>(params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64, l2: f64) -> Result<()> {
    if params.layers.len() != grads.layers.len() {
        return Err(Error::InvalidShape("gradient slot count differs from parameters".into()));
    }
    for (i, (p, g)) in params.layers.iter().zip(&grads.layers).enumerate() {
        match (p, g) {
            (None, None) => {}
            (Some(p), Some(g)) => {
                if p.weight.shape() != g.weight.shape() || p.bias.shape() != g.bias.shape() {
                    return Err(Error::ShapeMismatch {
                        layer: i,
                        expected: p.weight.shape().to_vec(),
                        actual: g.weight.shape().to_vec(),
                    });
                }
                if !g.weight.is_finite() || !g.bias.is_finite() {
                    return Err(Error::NonFiniteGradient { layer: i });
                }
            }
            _ => return Err(Error::InvalidShape(format!("layer {i} gradient slot mismatch"))),
        }
    }
    let lr = T::from_f64(lr);
    let l2 = T::from_f64(l2);
    for (p, g) in params.arrays_mut().zip(grads.arrays()) {
        for (theta, &grad) in p.data_mut().iter_mut().zip(g.data()) {
            *theta = *theta - lr * (grad + l2 * *theta);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::DenseArray;
    use crate::nn::LayerParams;

    fn single(theta: f64, grad: f64) -> (ModelParams<f64>, ModelParams<f64>) {
        let mk = |v: f64| ModelParams {
            layers: vec![Some(LayerParams {
                weight: DenseArray::new(vec![1, 1], vec![v]).unwrap(),
                bias: DenseArray::new(vec![1], vec![v]).unwrap(),
            })],
        };
        (mk(theta), mk(grad))
    }

    #[test]
    fn arithmetic_cases() {
        let (mut p, g) = single(1.0, 0.5);
        sgd_step(&mut p, &g, 0.1, 0.0).unwrap();
        assert!((p.layers[0].as_ref().unwrap().weight.data()[0] - 0.95).abs() < 1e-15);

        let (mut p, g) = single(1.0, 0.0);
        sgd_step(&mut p, &g, 0.1, 0.01).unwrap();
        assert!((p.layers[0].as_ref().unwrap().weight.data()[0] - 0.999).abs() < 1e-15);

        let (mut p, g) = single(0.7, 0.0);
        let before = p.clone();
        sgd_step(&mut p, &g, 0.1, 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let (mut p, g) = single(1.0, f64::NAN);
        let before = p.clone();
        assert!(matches!(sgd_step(&mut p, &g, 0.1, 0.0), Err(Error::NonFiniteGradient { layer: 0 })));
        assert_eq!(p, before);
    }

    #[test]
    fn decay_schedule() {
        let cfg = SgdConfig { learning_rate: 0.01, decay_every: 5, decay_factor: 0.5, ..Default::default() };
        assert_eq!(cfg.learning_rate_at(4), 0.01);
        assert_eq!(cfg.learning_rate_at(5), 0.005);
        assert_eq!(cfg.learning_rate_at(12), 0.0025);
    }
}
