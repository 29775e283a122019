use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::array::Scalar;
use crate::error::{Error, Result};

use super::layer::{init_layer, LayerSpec, ModelParams};

/// A validated sequential chain of layers with every intermediate shape resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    /// `shapes[0]` is the per-example input shape, `shapes[i + 1]` the output of layer `i`.
    shapes: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidShape(format!("bad input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer.output_shape(i, &shapes[i])?;
            shapes.push(next);
        }
        Ok(Self { layers, shapes })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("shapes never empty")
    }

    /// Shape entering layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Shape produced by layer `i`.
    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i + 1]
    }

    /// Flattened output width `l_i` of layer `i`.
    pub fn output_width(&self, i: usize) -> usize {
        self.shapes[i + 1].iter().product()
    }

    pub fn init_params<T: Scalar>(&self, seed: u64) -> ModelParams<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams {
            layers: self.layers.iter().enumerate().map(|(i, l)| init_layer(l, &self.shapes[i], &mut rng)).collect(),
        }
    }

    /// Checks that `params` has the slot layout and array shapes this chain requires.
    pub fn check_params<T: Scalar>(&self, params: &ModelParams<T>) -> Result<()> {
        if params.layers.len() != self.layers.len() {
            return Err(Error::InvalidShape(format!(
                "{} parameter slots for {} layers",
                params.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, slot)) in self.layers.iter().zip(&params.layers).enumerate() {
            let input = &self.shapes[i];
            let expected = match *layer {
                LayerSpec::Dense { units } => Some((vec![input[0], units], units)),
                LayerSpec::Conv2d { filters, kernel } => Some((vec![filters, input[0], kernel, kernel], filters)),
                _ => None,
            };
            match (expected, slot) {
                (None, None) => {}
                (Some((wshape, b)), Some(p)) => {
                    if p.weight.shape() != wshape.as_slice() || p.bias.shape() != [b] {
                        return Err(Error::ShapeMismatch {
                            layer: i,
                            expected: wshape,
                            actual: p.weight.shape().to_vec(),
                        });
                    }
                }
                _ => return Err(Error::InvalidShape(format!("layer {i} ({}) parameter slot mismatch", layer.name()))),
            }
        }
        Ok(())
    }
}
