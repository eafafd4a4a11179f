use serde::{Deserialize, Serialize};

use super::network::Network;
use super::tensor::Tensor;
use crate::error::{HarError, Result};
use crate::scalar::Scalar;

/// Plain stochastic gradient descent, `p <- p - lr * g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub learning_rate: f64,
    pub step_count: u64,
}

impl Sgd {
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(HarError::invalid(format!("learning rate {learning_rate} must be positive")));
        }
        Ok(Sgd {
            learning_rate,
            step_count: 0,
        })
    }

    pub fn step<S: Scalar>(&mut self, net: &mut Network<S>) -> Result<()> {
        let lr = S::of(self.learning_rate);
        for (_, p) in net.named_params_mut() {
            apply(&mut p.value, &p.grad, lr)?;
        }
        self.step_count += 1;
        Ok(())
    }
}

fn apply<S: Scalar>(value: &mut Tensor<S>, grad: &Tensor<S>, lr: S) -> Result<()> {
    if value.shape() != grad.shape() {
        return Err(HarError::shape(format!(
            "sgd: parameter {:?} vs gradient {:?}",
            value.shape(),
            grad.shape()
        )));
    }
    for (p, &g) in value.data_mut().iter_mut().zip(grad.data()) {
        *p -= lr * g;
    }
    Ok(())
}

/// One update of a single tensor.
pub fn sgd_step<S: Scalar>(value: &mut Tensor<S>, grad: &Tensor<S>, learning_rate: f64) -> Result<()> {
    apply(value, grad, S::of(learning_rate))
}
