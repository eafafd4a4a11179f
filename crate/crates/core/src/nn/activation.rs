use rand::Rng as _;

use super::tensor::Tensor;
use crate::error::{HarError, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default)]
pub struct Relu<S> {
    mask: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> Relu<S> {
    pub fn new() -> Self {
        Relu {
            mask: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn infer(&self, x: &Tensor<S>) -> Tensor<S> {
        let mut out = x.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(S::zero()));
        out
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        self.mask = Some(x.data().iter().map(|&v| v > S::zero()).collect());
        self.infer(x)
    }

    pub fn backward(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let mask = self.mask.as_ref().ok_or(HarError::NoForwardCache("relu"))?;
        if mask.len() != g.len() {
            return Err(HarError::shape("relu backward: gradient size mismatch"));
        }
        let mut dx = g.clone();
        for (d, &keep) in dx.data_mut().iter_mut().zip(mask) {
            if !keep {
                *d = S::zero();
            }
        }
        Ok(dx)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.mask = None;
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - prob)` during
/// training, so inference is the identity.
#[derive(Debug, Clone)]
pub struct Dropout<S> {
    pub prob: f64,
    mask: Option<Vec<S>>,
}

impl<S: Scalar> Dropout<S> {
    pub fn new(prob: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&prob) {
            return Err(HarError::invalid(format!("dropout probability {prob} not in [0, 1)")));
        }
        Ok(Dropout { prob, mask: None })
    }

    pub fn forward(&mut self, x: &Tensor<S>, training: Option<&mut Rng>) -> Tensor<S> {
        let rng = match training {
            Some(rng) if self.prob > 0.0 => rng,
            _ => {
                self.mask = None;
                return x.clone();
            }
        };
        let scale = S::of(1.0 / (1.0 - self.prob));
        let mask: Vec<S> = (0..x.len())
            .map(|_| {
                if rng.random::<f64>() < self.prob {
                    S::zero()
                } else {
                    scale
                }
            })
            .collect();
        let mut out = x.clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        out
    }

    /// Gradient flows only through the units kept in the last forward pass.
    pub fn backward(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let mut dx = g.clone();
        if let Some(mask) = &self.mask {
            if mask.len() != g.len() {
                return Err(HarError::shape("dropout backward: gradient size mismatch"));
            }
            for (d, &m) in dx.data_mut().iter_mut().zip(mask) {
                *d *= m;
            }
        }
        Ok(dx)
    }

    pub fn mask(&self) -> Option<&[S]> {
        self.mask.as_deref()
    }

    pub(crate) fn clear_cache(&mut self) {
        self.mask = None;
    }
}

/// Numerically stable softmax of one row.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax over `[batch, classes]`.
#[derive(Debug, Clone, Default)]
pub struct Softmax<S> {
    output: Option<Tensor<S>>,
}

impl<S: Scalar> Softmax<S> {
    pub fn new() -> Self {
        Softmax { output: None }
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.expect_rank(2, "softmax")?;
        if x.shape()[1] < 2 {
            return Err(HarError::shape("softmax needs at least two classes"));
        }
        let k = x.shape()[1];
        let mut out = Tensor::zeros(x.shape());
        for (orow, xrow) in out.data_mut().chunks_exact_mut(k).zip(x.data().chunks_exact(k)) {
            orow.copy_from_slice(&softmax(xrow));
        }
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let out = self.infer(x)?;
        self.output = Some(out.clone());
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let a = self.output.as_ref().ok_or(HarError::NoForwardCache("softmax"))?;
        g.expect_shape(a.shape(), "softmax backward")?;
        let k = a.shape()[1];
        let mut dx = Tensor::zeros(a.shape());
        for ((drow, arow), grow) in dx
            .data_mut()
            .chunks_exact_mut(k)
            .zip(a.data().chunks_exact(k))
            .zip(g.data().chunks_exact(k))
        {
            let dot: S = arow.iter().zip(grow).map(|(&a, &g)| a * g).sum();
            for j in 0..k {
                drow[j] = arow[j] * (grow[j] - dot);
            }
        }
        Ok(dx)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.output = None;
    }
}
