//! Temporal convolution over `[batch, time, column, feature]` tensors.
//!
//! The kernel spans `kernel` time steps and a single sensor column, so the
//! column axis passes through untouched and every column is filtered with
//! the same weights.

use serde::{Deserialize, Serialize};

use super::tensor::{Param, Tensor};
use crate::error::{HarError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Zero padding that keeps the time length.
    Same,
    Valid,
}

#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    /// `[kernel, in_features, out_features]`
    pub weight: Param<S>,
    /// `[out_features]`
    pub bias: Param<S>,
    pub padding: Padding,
    input: Option<Tensor<S>>,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(weight: Tensor<S>, bias: Tensor<S>, padding: Padding) -> Result<Self> {
        weight.expect_rank(3, "conv weight")?;
        bias.expect_shape(&[weight.shape()[2]], "conv bias")?;
        Ok(Conv2d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            padding,
            input: None,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[2]
    }

    fn pad_lo(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel() - 1) / 2,
            Padding::Valid => 0,
        }
    }

    pub fn output_time(&self, time: usize) -> Result<usize> {
        match self.padding {
            Padding::Same => Ok(time),
            Padding::Valid if time >= self.kernel() => Ok(time - self.kernel() + 1),
            Padding::Valid => Err(HarError::shape(format!(
                "valid convolution with kernel {} needs at least that many time steps, got {time}",
                self.kernel()
            ))),
        }
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<(usize, usize, usize)> {
        x.expect_rank(4, "conv2d")?;
        let s = x.shape();
        if s[3] != self.in_features() {
            return Err(HarError::shape(format!(
                "conv2d weights expect {} input feature maps, input has {}",
                self.in_features(),
                s[3]
            )));
        }
        Ok((s[0], s[1], s[2]))
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (n, t_in, cols) = self.check_input(x)?;
        let t_out = self.output_time(t_in)?;
        let (k, fi, fo) = (self.kernel(), self.in_features(), self.out_features());
        let pad = self.pad_lo() as isize;
        let w = self.weight.value.data();
        let b = self.bias.value.data();
        let xd = x.data();
        let mut out = Tensor::zeros(&[n, t_out, cols, fo]);
        let od = out.data_mut();
        for ni in 0..n {
            for t in 0..t_out {
                for c in 0..cols {
                    let o_off = ((ni * t_out + t) * cols + c) * fo;
                    let orow = &mut od[o_off..o_off + fo];
                    orow.copy_from_slice(b);
                    for kk in 0..k {
                        let ti = t as isize + kk as isize - pad;
                        if ti < 0 || ti >= t_in as isize {
                            continue;
                        }
                        let x_off = ((ni * t_in + ti as usize) * cols + c) * fi;
                        let xrow = &xd[x_off..x_off + fi];
                        for (f, &xv) in xrow.iter().enumerate() {
                            let w_off = (kk * fi + f) * fo;
                            let wrow = &w[w_off..w_off + fo];
                            for (o, &wv) in orow.iter_mut().zip(wrow) {
                                *o += xv * wv;
                            }
                        }
                    }
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
        let x = self.input.as_ref().ok_or(HarError::NoForwardCache("conv2d"))?;
        let (n, t_in, cols) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let t_out = self.output_time(t_in)?;
        let (k, fi, fo) = (self.kernel(), self.in_features(), self.out_features());
        g.expect_shape(&[n, t_out, cols, fo], "conv2d backward")?;
        let pad = self.pad_lo() as isize;

        let mut dx = Tensor::zeros(x.shape());
        let gd = g.data();
        let xd = x.data();
        let w = self.weight.value.data();
        let dw = self.weight.grad.data_mut();
        let db = self.bias.grad.data_mut();
        let dxd = dx.data_mut();
        for ni in 0..n {
            for t in 0..t_out {
                for c in 0..cols {
                    let g_off = ((ni * t_out + t) * cols + c) * fo;
                    let grow = &gd[g_off..g_off + fo];
                    for (d, &gv) in db.iter_mut().zip(grow) {
                        *d += gv;
                    }
                    for kk in 0..k {
                        let ti = t as isize + kk as isize - pad;
                        if ti < 0 || ti >= t_in as isize {
                            continue;
                        }
                        let x_off = ((ni * t_in + ti as usize) * cols + c) * fi;
                        for f in 0..fi {
                            let w_off = (kk * fi + f) * fo;
                            let xv = xd[x_off + f];
                            let mut acc = S::zero();
                            for ((dwv, &wv), &gv) in dw[w_off..w_off + fo]
                                .iter_mut()
                                .zip(&w[w_off..w_off + fo])
                                .zip(grow)
                            {
                                *dwv += xv * gv;
                                acc += wv * gv;
                            }
                            dxd[x_off + f] += acc;
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.input = None;
    }
}
