//! Batch-mean losses and their gradients.

use crate::array::{DenseArray, Scalar};
use crate::error::{Error, Result};

fn check_labels<T: Scalar>(probs: &DenseArray<T>, labels: &[usize]) -> Result<usize> {
    if probs.shape().len() != 2 || probs.outer() != labels.len() {
        return Err(Error::InvalidShape(format!("probabilities {:?} for {} labels", probs.shape(), labels.len())));
    }
    let width = probs.inner();
    if let Some(&bad) = labels.iter().find(|&&l| l >= width) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {width} classes")));
    }
    Ok(width)
}

/// Mean cross-entropy of softmax outputs, with the gradient taken with respect to the probabilities.
pub fn cross_entropy<T: Scalar>(probs: &DenseArray<T>, labels: &[usize]) -> Result<(f64, DenseArray<T>)> {
    let width = check_labels(probs, labels)?;
    let n = labels.len() as f64;
    let tiny = 1e-12;
    let mut grad = DenseArray::zeros(probs.shape().to_vec());
    let mut loss = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let p = probs.row(i)[l].as_f64().max(tiny);
        loss -= p.ln();
        grad.data_mut()[i * width + l] = T::from_f64(-1.0 / (p * n));
    }
    Ok((loss / n, grad))
}

/// Mean cross-entropy plus its gradient with respect to the logits feeding the softmax:
/// `(softmax - onehot) / n`.
pub fn softmax_cross_entropy<T: Scalar>(probs: &DenseArray<T>, labels: &[usize]) -> Result<(f64, DenseArray<T>)> {
    let width = check_labels(probs, labels)?;
    let n = labels.len();
    let inv = T::from_f64(1.0 / n as f64);
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        loss -= probs.row(i)[l].as_f64().max(1e-12).ln();
        let row = &mut grad.data_mut()[i * width..(i + 1) * width];
        row[l] = row[l] - T::one();
        row.iter_mut().for_each(|v| *v = *v * inv);
    }
    Ok((loss / n as f64, grad))
}

/// Mean squared error over all elements.
pub fn mean_squared_error<T: Scalar>(pred: &DenseArray<T>, target: &[T]) -> Result<(f64, DenseArray<T>)> {
    if pred.len() != target.len() {
        return Err(Error::InvalidShape(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    let n = pred.len() as f64;
    let mut grad = DenseArray::zeros(pred.shape().to_vec());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target) {
        let d = p.as_f64() - t.as_f64();
        loss += d * d;
        *g = T::from_f64(2.0 * d / n);
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_uniform() {
        let probs = DenseArray::new(vec![2, 4], vec![0.25f64; 8]).unwrap();
        let (loss, _) = cross_entropy(&probs, &[0, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&probs, &[4, 0]).is_err());
    }

    #[test]
    fn fused_gradient_is_softmax_minus_onehot() {
        let probs = DenseArray::new(vec![1, 3], vec![0.2f64, 0.5, 0.3]).unwrap();
        let (_, g) = softmax_cross_entropy(&probs, &[1]).unwrap();
        assert_eq!(g.data(), &[0.2, -0.5, 0.3]);
    }
}
