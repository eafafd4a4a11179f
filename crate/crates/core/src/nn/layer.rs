use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::activation::{Dropout, Relu, Softmax};
use super::conv::{Conv2d, Padding};
use super::dense::{Dense, Flatten};
use super::lstm::Lstm;
use super::norm::BatchNorm;
use super::pool::MaxPool;
use super::tensor::{Param, Tensor};
use crate::error::{HarError, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2d,
    MaxPool,
    Relu,
    Dropout,
    BatchNorm,
    Flatten,
    Dense,
    Lstm,
    Softmax,
}

impl LayerKind {
    pub fn short_name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv",
            LayerKind::MaxPool => "pool",
            LayerKind::Relu => "relu",
            LayerKind::Dropout => "dropout",
            LayerKind::BatchNorm => "bn",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense => "dense",
            LayerKind::Lstm => "lstm",
            LayerKind::Softmax => "softmax",
        }
    }
}

/// Architecture description of one layer; shapes are resolved when the
/// network is built against a concrete input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        kernel: usize,
        filters: usize,
        padding: Padding,
    },
    MaxPool {
        size: usize,
    },
    Relu,
    Dropout {
        prob: f64,
    },
    BatchNorm,
    Flatten {
        keep_time: bool,
    },
    Dense {
        units: usize,
    },
    Lstm {
        hidden: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::MaxPool { .. } => LayerKind::MaxPool,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
            LayerSpec::BatchNorm => LayerKind::BatchNorm,
            LayerSpec::Flatten { .. } => LayerKind::Flatten,
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Lstm { .. } => LayerKind::Lstm,
            LayerSpec::Softmax => LayerKind::Softmax,
        }
    }
}

/// Glorot-uniform draw on `[-limit, limit]`, `limit = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<S: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| S::of(rng.random_range(-limit..=limit))).collect();
    // Shape and data length agree by construction.
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[derive(Debug, Clone)]
pub enum Layer<S> {
    Conv2d(Conv2d<S>),
    MaxPool(MaxPool<S>),
    Relu(Relu<S>),
    Dropout(Dropout<S>),
    BatchNorm(BatchNorm<S>),
    Flatten(Flatten),
    Dense(Dense<S>),
    Lstm(Lstm<S>),
    Softmax(Softmax<S>),
}

impl<S: Scalar> Layer<S> {
    /// Instantiate `spec` for per-sample input shape `input` (batch axis
    /// excluded). Returns the layer and its per-sample output shape.
    pub fn build(spec: &LayerSpec, input: &[usize], rng: &mut Rng) -> Result<(Self, Vec<usize>)> {
        let bad = |what: &str| {
            HarError::shape(format!("{what} cannot follow per-sample shape {input:?}"))
        };
        Ok(match *spec {
            LayerSpec::Conv2d {
                kernel,
                filters,
                padding,
            } => {
                let [t, c, f] = input else {
                    return Err(bad("conv2d"));
                };
                if kernel == 0 || filters == 0 {
                    return Err(HarError::invalid("conv2d kernel and filter count must be positive"));
                }
                let w = glorot_uniform(&[kernel, *f, filters], kernel * f, kernel * filters, rng);
                let conv = Conv2d::new(w, Tensor::zeros(&[filters]), padding)?;
                let t_out = conv.output_time(*t)?;
                (Layer::Conv2d(conv), vec![t_out, *c, filters])
            }
            LayerSpec::MaxPool { size } => {
                let [t, c, f] = input else {
                    return Err(bad("maxpool"));
                };
                let pool = MaxPool::new(size)?;
                let t_out = pool.output_time(*t);
                (Layer::MaxPool(pool), vec![t_out, *c, *f])
            }
            LayerSpec::Relu => (Layer::Relu(Relu::new()), input.to_vec()),
            LayerSpec::Dropout { prob } => (Layer::Dropout(Dropout::new(prob)?), input.to_vec()),
            LayerSpec::BatchNorm => {
                let f = *input.last().ok_or_else(|| bad("batchnorm"))?;
                (Layer::BatchNorm(BatchNorm::new(f)), input.to_vec())
            }
            LayerSpec::Flatten { keep_time } => {
                let out = if keep_time {
                    if input.len() < 2 {
                        return Err(bad("sequence flatten"));
                    }
                    vec![input[0], input[1..].iter().product()]
                } else {
                    vec![input.iter().product()]
                };
                (Layer::Flatten(Flatten::new(keep_time)), out)
            }
            LayerSpec::Dense { units } => {
                let [d] = input else {
                    return Err(bad("dense"));
                };
                let w = glorot_uniform(&[*d, units], *d, units, rng);
                (Layer::Dense(Dense::new(w, Tensor::zeros(&[units]))?), vec![units])
            }
            LayerSpec::Lstm { hidden } => {
                let [_, d] = input else {
                    return Err(bad("lstm"));
                };
                let wx = glorot_uniform(&[*d, 4 * hidden], *d, 4 * hidden, rng);
                let wh = glorot_uniform(&[hidden, 4 * hidden], hidden, 4 * hidden, rng);
                let lstm = Lstm::new(wx, wh, Tensor::zeros(&[4 * hidden]))?;
                (Layer::Lstm(lstm), vec![hidden])
            }
            LayerSpec::Softmax => {
                let [k] = input else {
                    return Err(bad("softmax"));
                };
                if *k < 2 {
                    return Err(HarError::shape("softmax needs at least two classes"));
                }
                (Layer::Softmax(Softmax::new()), input.to_vec())
            }
        })
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::Relu(_) => LayerKind::Relu,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Flatten(_) => LayerKind::Flatten,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Lstm(_) => LayerKind::Lstm,
            Layer::Softmax(_) => LayerKind::Softmax,
        }
    }

    /// Inference-mode forward without caching (dropout off, running batch statistics).
    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Layer::Conv2d(l) => l.infer(x),
            Layer::MaxPool(l) => l.infer(x),
            Layer::Relu(l) => Ok(l.infer(x)),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Flatten(l) => l.infer(x),
            Layer::Dense(l) => l.infer(x),
            Layer::Lstm(l) => l.infer(x),
            Layer::Softmax(l) => l.infer(x),
        }
    }

    /// Caching forward. `training` carries the dropout generator; `None`
    /// selects inference behaviour for dropout and batch normalization.
    pub fn forward(&mut self, x: &Tensor<S>, training: Option<&mut Rng>) -> Result<Tensor<S>> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Dropout(l) => Ok(l.forward(x, training)),
            Layer::BatchNorm(l) => {
                if training.is_some() {
                    l.forward_train(x)
                } else {
                    l.forward_infer(x)
                }
            }
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Lstm(l) => l.forward(x),
            Layer::Softmax(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Layer::Conv2d(l) => l.backward(g),
            Layer::MaxPool(l) => l.backward(g),
            Layer::Relu(l) => l.backward(g),
            Layer::Dropout(l) => l.backward(g),
            Layer::BatchNorm(l) => l.backward(g),
            Layer::Flatten(l) => l.backward(g),
            Layer::Dense(l) => l.backward(g),
            Layer::Lstm(l) => l.backward(g),
            Layer::Softmax(l) => l.backward(g),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.clear_cache(),
            Layer::MaxPool(l) => l.clear_cache(),
            Layer::Relu(l) => l.clear_cache(),
            Layer::Dropout(l) => l.clear_cache(),
            Layer::BatchNorm(l) => l.clear_cache(),
            Layer::Flatten(l) => l.clear_cache(),
            Layer::Dense(l) => l.clear_cache(),
            Layer::Lstm(l) => l.clear_cache(),
            Layer::Softmax(l) => l.clear_cache(),
        }
    }

    /// Trainable parameters with their local names.
    pub fn params(&self) -> Vec<(&'static str, &Param<S>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::BatchNorm(l) => vec![("gamma", &l.gamma), ("beta", &l.beta)],
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Lstm(l) => vec![
                ("w_input", &l.w_input),
                ("w_hidden", &l.w_hidden),
                ("bias", &l.bias),
            ],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Param<S>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::BatchNorm(l) => vec![("gamma", &mut l.gamma), ("beta", &mut l.beta)],
            Layer::Dense(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::Lstm(l) => vec![
                ("w_input", &mut l.w_input),
                ("w_hidden", &mut l.w_hidden),
                ("bias", &mut l.bias),
            ],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that still has to be persisted.
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<S>)> {
        match self {
            Layer::BatchNorm(l) => vec![
                ("running_mean", &l.running_mean),
                ("running_var", &l.running_var),
            ],
            _ => Vec::new(),
        }
    }

    /// Parameter values followed by buffers, in the order of [`Layer::params`] then [`Layer::buffers`].
    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Tensor<S>)> {
        match self {
            Layer::BatchNorm(l) => vec![
                ("gamma", &mut l.gamma.value),
                ("beta", &mut l.beta.value),
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            other => other
                .params_mut()
                .into_iter()
                .map(|(n, p)| (n, &mut p.value))
                .collect(),
        }
    }
}
