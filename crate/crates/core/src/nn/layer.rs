use rand::Rng;

use crate::array::{DenseArray, Scalar};
use crate::error::{Error, Result};

/// One stage of a sequential network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    /// Valid (unpadded) stride-1 convolution with square kernels.
    Conv2d {
        filters: usize,
        kernel: usize,
    },
    /// Non-overlapping square pooling; trailing rows/columns that do not fill a window are dropped.
    MaxPool2d {
        size: usize,
    },
    Flatten,
    Relu,
    Softmax,
    /// Inverted dropout: survivors are scaled by `1 / keep` at train time.
    Dropout {
        keep: f32,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    /// Per-example output shape for a per-example input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |reason: &str| {
            Err(Error::InvalidShape(format!("layer {index} ({}): {reason}, input {input:?}", self.name())))
        };
        match *self {
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return bad("dense expects a flat input");
                }
                if units == 0 {
                    return bad("zero units");
                }
                Ok(vec![units])
            }
            LayerSpec::Conv2d { filters, kernel } => {
                if input.len() != 3 {
                    return bad("conv2d expects (channels, height, width)");
                }
                if filters == 0 || kernel == 0 {
                    return bad("zero filters or kernel");
                }
                if input[1] < kernel || input[2] < kernel {
                    return bad("input smaller than kernel");
                }
                Ok(vec![filters, input[1] - kernel + 1, input[2] - kernel + 1])
            }
            LayerSpec::MaxPool2d { size } => {
                if input.len() != 3 {
                    return bad("maxpool2d expects (channels, height, width)");
                }
                if size == 0 || input[1] < size || input[2] < size {
                    return bad("input smaller than pool window");
                }
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return bad("softmax expects a flat input");
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { keep } => {
                if !(keep > 0.0 && keep <= 1.0) {
                    return bad("keep probability outside (0, 1]");
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Weight and bias of a parameterized layer.
///
/// Dense weights are `(in, out)`; convolution weights are `(filters, channels, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: DenseArray<T>,
    pub bias: DenseArray<T>,
}

/// Parameters of a whole network, one slot per layer (`None` for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub layers: Vec<Option<LayerParams<T>>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.as_ref().map(|p| LayerParams {
                        weight: DenseArray::zeros(p.weight.shape().to_vec()),
                        bias: DenseArray::zeros(p.bias.shape().to_vec()),
                    })
                })
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| l.as_ref().map(|p| LayerParams { weight: p.weight.cast(), bias: p.bias.cast() }))
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.layers.iter().flatten().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    /// Total parameter vectors in layer order, weight before bias.
    pub fn arrays(&self) -> impl Iterator<Item = &DenseArray<T>> {
        self.layers.iter().flatten().flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut DenseArray<T>> {
        self.layers.iter_mut().flatten().flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().all(|a| a.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.arrays_mut().zip(other.arrays()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        self.arrays_mut().for_each(|a| a.scale(factor));
    }
}

/// Fan-in scaled uniform initialization: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero bias.
pub(crate) fn init_layer<T: Scalar, R: Rng>(spec: &LayerSpec, input: &[usize], rng: &mut R) -> Option<LayerParams<T>> {
    let (wshape, fan_in, out) = match *spec {
        LayerSpec::Dense { units } => (vec![input[0], units], input[0], units),
        LayerSpec::Conv2d { filters, kernel } => {
            let fan_in = input[0] * kernel * kernel;
            (vec![filters, input[0], kernel, kernel], fan_in, filters)
        }
        _ => return None,
    };
    let limit = (6.0 / fan_in as f64).sqrt();
    let len: usize = wshape.iter().product();
    let data = (0..len).map(|_| T::from_f64(rng.gen_range(-limit..limit))).collect();
    Some(LayerParams { weight: DenseArray::from_parts_unchecked(wshape, data), bias: DenseArray::zeros(vec![out]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_inference() {
        let conv = LayerSpec::Conv2d { filters: 8, kernel: 3 };
        assert_eq!(conv.output_shape(0, &[1, 25, 25]).unwrap(), vec![8, 23, 23]);
        let pool = LayerSpec::MaxPool2d { size: 2 };
        assert_eq!(pool.output_shape(1, &[16, 21, 21]).unwrap(), vec![16, 10, 10]);
        assert_eq!(LayerSpec::Flatten.output_shape(2, &[32, 3, 3]).unwrap(), vec![288]);
        assert!(LayerSpec::Dense { units: 4 }.output_shape(3, &[2, 2]).is_err());
        assert!(pool.output_shape(4, &[1, 1, 1]).is_err());
    }

    #[test]
    fn dropout_keep_bounds() {
        assert!(LayerSpec::Dropout { keep: 1.0 }.output_shape(0, &[3]).is_ok());
        assert!(LayerSpec::Dropout { keep: 0.0 }.output_shape(0, &[3]).is_err());
        assert!(LayerSpec::Dropout { keep: 1.5 }.output_shape(0, &[3]).is_err());
    }
}
