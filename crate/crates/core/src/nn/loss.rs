//! Categorical cross-entropy, `C = -(1/N) * sum_n sum_k y_nk * ln(a_nk)`.

use super::tensor::Tensor;
use crate::error::{HarError, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped to `[CE_EPSILON, 1]` before the logarithm.
pub const CE_EPSILON: f64 = 1e-12;

pub fn one_hot<S: Scalar>(classes: &[usize], k: usize) -> Result<Tensor<S>> {
    let mut t = Tensor::zeros(&[classes.len(), k]);
    for (row, &c) in t.data_mut().chunks_exact_mut(k).zip(classes) {
        if c >= k {
            return Err(HarError::invalid(format!("class {c} out of range for {k} classes")));
        }
        row[c] = S::one();
    }
    Ok(t)
}

fn check<S: Scalar>(probs: &Tensor<S>, targets: &Tensor<S>) -> Result<(usize, usize)> {
    probs.expect_rank(2, "cross_entropy")?;
    targets.expect_shape(probs.shape(), "cross_entropy targets")?;
    let k = probs.shape()[1];
    for (i, row) in targets.data().chunks_exact(k).enumerate() {
        let ones = row.iter().filter(|&&v| v == S::one()).count();
        let zeros = row.iter().filter(|&&v| v == S::zero()).count();
        if ones != 1 || zeros != k - 1 {
            return Err(HarError::invalid(format!("target row {i} is not one-hot")));
        }
    }
    Ok((probs.shape()[0], k))
}

pub fn cross_entropy<S: Scalar>(probs: &Tensor<S>, targets: &Tensor<S>) -> Result<S> {
    let (n, _) = check(probs, targets)?;
    let eps = S::of(CE_EPSILON);
    let mut total = S::zero();
    for (&a, &y) in probs.data().iter().zip(targets.data()) {
        if y != S::zero() {
            total -= y * a.max(eps).min(S::one()).ln();
        }
    }
    // -0.0 would otherwise leak out of an exact match.
    Ok((total / S::of(n as f64)).max(S::zero()))
}

/// Gradient of [`cross_entropy`] with respect to the probabilities.
pub fn cross_entropy_grad<S: Scalar>(probs: &Tensor<S>, targets: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, _) = check(probs, targets)?;
    let eps = S::of(CE_EPSILON);
    let nf = S::of(n as f64);
    let mut g = Tensor::zeros(probs.shape());
    for ((gv, &a), &y) in g.data_mut().iter_mut().zip(probs.data()).zip(targets.data()) {
        if y != S::zero() {
            *gv = -y / (a.max(eps) * nf);
        }
    }
    Ok(g)
}

/// Gradient of softmax followed by cross-entropy with respect to the
/// logits: `(a - y) / N`.
pub fn softmax_cross_entropy_grad<S: Scalar>(probs: &Tensor<S>, targets: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, _) = check(probs, targets)?;
    let nf = S::of(n as f64);
    let mut g = probs.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(targets.data()) {
        *gv = (*gv - y) / nf;
    }
    Ok(g)
}
