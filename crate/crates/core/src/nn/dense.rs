use super::tensor::{Param, Tensor};
use crate::error::{HarError, Result};
use crate::scalar::Scalar;

/// Fully connected layer, `[batch, in] -> [batch, out]`.
#[derive(Debug, Clone)]
pub struct Dense<S> {
    /// `[in, out]`
    pub weight: Param<S>,
    pub bias: Param<S>,
    input: Option<Tensor<S>>,
}

impl<S: Scalar> Dense<S> {
    pub fn new(weight: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        weight.expect_rank(2, "dense weight")?;
        bias.expect_shape(&[weight.shape()[1]], "dense bias")?;
        Ok(Dense {
            weight: Param::new(weight),
            bias: Param::new(bias),
            input: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.expect_rank(2, "dense")?;
        let (n, din) = (x.shape()[0], x.shape()[1]);
        if din != self.in_features() {
            return Err(HarError::shape(format!(
                "dense expects {} inputs, got {din}",
                self.in_features()
            )));
        }
        let dout = self.out_features();
        let w = self.weight.value.data();
        let mut out = Tensor::zeros(&[n, dout]);
        for (orow, xrow) in out.data_mut().chunks_exact_mut(dout).zip(x.data().chunks_exact(din)) {
            orow.copy_from_slice(self.bias.value.data());
            for (i, &xv) in xrow.iter().enumerate() {
                for (o, &wv) in orow.iter_mut().zip(&w[i * dout..(i + 1) * dout]) {
                    *o += xv * wv;
                }
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self.input.as_ref().ok_or(HarError::NoForwardCache("dense"))?;
        let (n, din, dout) = (x.shape()[0], self.in_features(), self.out_features());
        g.expect_shape(&[n, dout], "dense backward")?;
        let w = self.weight.value.data();
        let dw = self.weight.grad.data_mut();
        let db = self.bias.grad.data_mut();
        let mut dx = Tensor::zeros(x.shape());
        for ((dxrow, xrow), grow) in dx
            .data_mut()
            .chunks_exact_mut(din)
            .zip(x.data().chunks_exact(din))
            .zip(g.data().chunks_exact(dout))
        {
            for (d, &gv) in db.iter_mut().zip(grow) {
                *d += gv;
            }
            for i in 0..din {
                let wrow = &w[i * dout..(i + 1) * dout];
                let dwrow = &mut dw[i * dout..(i + 1) * dout];
                let mut acc = S::zero();
                for ((dwv, &wv), &gv) in dwrow.iter_mut().zip(wrow).zip(grow) {
                    *dwv += xrow[i] * gv;
                    acc += wv * gv;
                }
                dxrow[i] = acc;
            }
        }
        Ok(dx)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.input = None;
    }
}

/// Collapses trailing axes: `[batch, ...] -> [batch, prod]`, or with
/// `keep_time` `[batch, time, ...] -> [batch, time, prod]` for sequence layers.
#[derive(Debug, Clone)]
pub struct Flatten {
    pub keep_time: bool,
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new(keep_time: bool) -> Self {
        Flatten {
            keep_time,
            input_shape: None,
        }
    }

    pub fn output_shape(&self, shape: &[usize]) -> Vec<usize> {
        if self.keep_time && shape.len() >= 2 {
            vec![shape[0], shape[1], shape[2..].iter().product()]
        } else {
            vec![shape[0], shape[1..].iter().product()]
        }
    }

    pub fn infer<S: Scalar>(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.clone().reshape(&self.output_shape(x.shape()))
    }

    pub fn forward<S: Scalar>(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.input_shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    pub fn backward<S: Scalar>(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let shape = self.input_shape.as_ref().ok_or(HarError::NoForwardCache("flatten"))?;
        g.clone().reshape(shape)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.input_shape = None;
    }
}
