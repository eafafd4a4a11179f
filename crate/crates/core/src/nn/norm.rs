use super::tensor::{Param, Tensor};
use crate::error::{HarError, Result};
use crate::scalar::Scalar;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Batch normalization over the trailing (feature-map) axis. Statistics are
/// taken over every other axis, i.e. across batch, time and column.
#[derive(Debug, Clone)]
pub struct BatchNorm<S> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    cache: Option<BnCache<S>>,
}

#[derive(Debug, Clone)]
enum BnCache<S> {
    Train { xhat: Vec<S>, inv_std: Vec<S> },
    Infer { inv_std: Vec<S>, x: Tensor<S> },
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Param::new(Tensor::full(&[features], S::one())),
            beta: Param::new(Tensor::zeros(&[features])),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], S::one()),
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.value.len()
    }

    fn check(&self, x: &Tensor<S>) -> Result<usize> {
        let f = self.features();
        if x.shape().len() < 2 || *x.shape().last().unwrap() != f {
            return Err(HarError::shape(format!(
                "batchnorm over {f} features got shape {:?}",
                x.shape()
            )));
        }
        Ok(f)
    }

    fn inference_inv_std(&self) -> Vec<S> {
        let eps = S::of(BN_EPSILON);
        self.running_var
            .data()
            .iter()
            .map(|&v| S::one() / (v + eps).sqrt())
            .collect()
    }

    /// Normalize with the running statistics.
    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let f = self.check(x)?;
        let inv_std = self.inference_inv_std();
        let (g, b, m) = (self.gamma.value.data(), self.beta.value.data(), self.running_mean.data());
        let mut out = x.clone();
        for row in out.data_mut().chunks_exact_mut(f) {
            for j in 0..f {
                row[j] = g[j] * ((row[j] - m[j]) * inv_std[j]) + b[j];
            }
        }
        Ok(out)
    }

    /// Normalize with batch statistics and fold them into the running averages.
    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let f = self.check(x)?;
        let m = x.len() / f;
        let mf = S::of(m as f64);
        let mut mean = vec![S::zero(); f];
        for row in x.data().chunks_exact(f) {
            for j in 0..f {
                mean[j] += row[j];
            }
        }
        mean.iter_mut().for_each(|v| *v /= mf);
        let mut var = vec![S::zero(); f];
        for row in x.data().chunks_exact(f) {
            for j in 0..f {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= mf);
        let eps = S::of(BN_EPSILON);
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();

        let mut xhat = x.data().to_vec();
        for row in xhat.chunks_exact_mut(f) {
            for j in 0..f {
                row[j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        let mut out = Tensor::zeros(x.shape());
        for (orow, hrow) in out.data_mut().chunks_exact_mut(f).zip(xhat.chunks_exact(f)) {
            for j in 0..f {
                orow[j] = g[j] * hrow[j] + b[j];
            }
        }

        let mom = S::of(BN_MOMENTUM);
        let unbias = if m > 1 { mf / (mf - S::one()) } else { S::one() };
        for j in 0..f {
            let rm = &mut self.running_mean.data_mut()[j];
            *rm = mom * *rm + (S::one() - mom) * mean[j];
            let rv = &mut self.running_var.data_mut()[j];
            *rv = mom * *rv + (S::one() - mom) * var[j] * unbias;
        }
        self.cache = Some(BnCache::Train { xhat, inv_std });
        Ok(out)
    }

    /// Inference-mode forward that keeps what backward needs.
    pub fn forward_infer(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let out = self.infer(x)?;
        self.cache = Some(BnCache::Infer {
            inv_std: self.inference_inv_std(),
            x: x.clone(),
        });
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let f = self.features();
        let cache = self.cache.as_ref().ok_or(HarError::NoForwardCache("batchnorm"))?;
        let gamma = self.gamma.value.data().to_vec();
        let mut dx = Tensor::zeros(g.shape());
        match cache {
            BnCache::Train { xhat, inv_std } => {
                if xhat.len() != g.len() {
                    return Err(HarError::shape("batchnorm backward: gradient size mismatch"));
                }
                let m = S::of((g.len() / f) as f64);
                let mut sum_g = vec![S::zero(); f];
                let mut sum_gx = vec![S::zero(); f];
                for (grow, hrow) in g.data().chunks_exact(f).zip(xhat.chunks_exact(f)) {
                    for j in 0..f {
                        sum_g[j] += grow[j];
                        sum_gx[j] += grow[j] * hrow[j];
                    }
                }
                {
                    let dgamma = self.gamma.grad.data_mut();
                    for j in 0..f {
                        dgamma[j] += sum_gx[j];
                    }
                }
                {
                    let dbeta = self.beta.grad.data_mut();
                    for j in 0..f {
                        dbeta[j] += sum_g[j];
                    }
                }
                for ((drow, grow), hrow) in dx
                    .data_mut()
                    .chunks_exact_mut(f)
                    .zip(g.data().chunks_exact(f))
                    .zip(xhat.chunks_exact(f))
                {
                    for j in 0..f {
                        // dxhat = g * gamma; the batch sums scale by gamma too.
                        drow[j] = gamma[j] * inv_std[j] / m
                            * (m * grow[j] - sum_g[j] - hrow[j] * sum_gx[j]);
                    }
                }
            }
            BnCache::Infer { inv_std, x } => {
                if x.len() != g.len() {
                    return Err(HarError::shape("batchnorm backward: gradient size mismatch"));
                }
                let mean = self.running_mean.data();
                let dgamma = self.gamma.grad.data_mut();
                for (grow, xrow) in g.data().chunks_exact(f).zip(x.data().chunks_exact(f)) {
                    for j in 0..f {
                        dgamma[j] += grow[j] * (xrow[j] - mean[j]) * inv_std[j];
                    }
                }
                let dbeta = self.beta.grad.data_mut();
                for (drow, grow) in dx.data_mut().chunks_exact_mut(f).zip(g.data().chunks_exact(f)) {
                    for j in 0..f {
                        dbeta[j] += grow[j];
                        drow[j] = grow[j] * gamma[j] * inv_std[j];
                    }
                }
            }
        }
        Ok(dx)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}
