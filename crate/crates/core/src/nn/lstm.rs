//! Single-layer LSTM returning the final hidden state.
//!
//! Gate layout inside the `4 * hidden` axis is input, forget, candidate,
//! output. Initial hidden and cell states are zero.

use super::tensor::{Param, Tensor};
use crate::error::{HarError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Lstm<S> {
    /// `[input, 4 * hidden]`
    pub w_input: Param<S>,
    /// `[hidden, 4 * hidden]`
    pub w_hidden: Param<S>,
    /// `[4 * hidden]`
    pub bias: Param<S>,
    cache: Option<LstmCache<S>>,
}

#[derive(Debug, Clone)]
struct LstmCache<S> {
    input: Tensor<S>,
    /// Activated gates per (sample, step): `[n, t, 4h]`.
    gates: Vec<S>,
    /// Cell state per (sample, step): `[n, t, h]`.
    cells: Vec<S>,
    /// Hidden state per (sample, step): `[n, t, h]`.
    hiddens: Vec<S>,
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

impl<S: Scalar> Lstm<S> {
    pub fn new(w_input: Tensor<S>, w_hidden: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        w_input.expect_rank(2, "lstm input weights")?;
        let h4 = w_input.shape()[1];
        if h4 % 4 != 0 {
            return Err(HarError::shape("lstm gate axis must be a multiple of 4"));
        }
        w_hidden.expect_shape(&[h4 / 4, h4], "lstm hidden weights")?;
        bias.expect_shape(&[h4], "lstm bias")?;
        Ok(Lstm {
            w_input: Param::new(w_input),
            w_hidden: Param::new(w_hidden),
            bias: Param::new(bias),
            cache: None,
        })
    }

    pub fn input_size(&self) -> usize {
        self.w_input.value.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hidden.value.shape()[0]
    }

    fn run(&self, x: &Tensor<S>, keep: bool) -> Result<(Tensor<S>, Option<LstmCache<S>>)> {
        x.expect_rank(3, "lstm")?;
        let (n, steps, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if d != self.input_size() {
            return Err(HarError::shape(format!(
                "lstm expects {} features per step, got {d}",
                self.input_size()
            )));
        }
        let h = self.hidden_size();
        let h4 = 4 * h;
        let wx = self.w_input.value.data();
        let wh = self.w_hidden.value.data();
        let b = self.bias.value.data();

        let mut gates_all = if keep { vec![S::zero(); n * steps * h4] } else { Vec::new() };
        let mut cells_all = if keep { vec![S::zero(); n * steps * h] } else { Vec::new() };
        let mut hid_all = if keep { vec![S::zero(); n * steps * h] } else { Vec::new() };
        let mut out = Tensor::zeros(&[n, h]);

        let mut z = vec![S::zero(); h4];
        let mut hprev = vec![S::zero(); h];
        let mut cprev = vec![S::zero(); h];
        for ni in 0..n {
            hprev.fill(S::zero());
            cprev.fill(S::zero());
            for t in 0..steps {
                z.copy_from_slice(b);
                let xrow = &x.data()[(ni * steps + t) * d..(ni * steps + t + 1) * d];
                for (i, &xv) in xrow.iter().enumerate() {
                    for (zv, &wv) in z.iter_mut().zip(&wx[i * h4..(i + 1) * h4]) {
                        *zv += xv * wv;
                    }
                }
                for (i, &hv) in hprev.iter().enumerate() {
                    for (zv, &wv) in z.iter_mut().zip(&wh[i * h4..(i + 1) * h4]) {
                        *zv += hv * wv;
                    }
                }
                for j in 0..h {
                    let ig = sigmoid(z[j]);
                    let fg = sigmoid(z[h + j]);
                    let gg = z[2 * h + j].tanh();
                    let og = sigmoid(z[3 * h + j]);
                    z[j] = ig;
                    z[h + j] = fg;
                    z[2 * h + j] = gg;
                    z[3 * h + j] = og;
                    cprev[j] = fg * cprev[j] + ig * gg;
                    hprev[j] = og * cprev[j].tanh();
                }
                if keep {
                    let base = ni * steps + t;
                    gates_all[base * h4..(base + 1) * h4].copy_from_slice(&z);
                    cells_all[base * h..(base + 1) * h].copy_from_slice(&cprev);
                    hid_all[base * h..(base + 1) * h].copy_from_slice(&hprev);
                }
            }
            out.data_mut()[ni * h..(ni + 1) * h].copy_from_slice(&hprev);
        }
        let cache = keep.then(|| LstmCache {
            input: x.clone(),
            gates: gates_all,
            cells: cells_all,
            hiddens: hid_all,
        });
        Ok((out, cache))
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(self.run(x, false)?.0)
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (out, cache) = self.run(x, true)?;
        self.cache = cache;
        Ok(out)
    }

    /// Backpropagation through time from the gradient of the final hidden state.
    pub fn backward(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self.cache.as_ref().ok_or(HarError::NoForwardCache("lstm"))?;
        let x = &cache.input;
        let (n, steps, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let h = self.hidden_size();
        let h4 = 4 * h;
        g.expect_shape(&[n, h], "lstm backward")?;
        let wx = self.w_input.value.data();
        let wh = self.w_hidden.value.data();
        let dwx = self.w_input.grad.data_mut();
        let dwh = self.w_hidden.grad.data_mut();
        let db = self.bias.grad.data_mut();
        let mut dx = Tensor::zeros(x.shape());

        let zero_h = vec![S::zero(); h];
        let mut dh = vec![S::zero(); h];
        let mut dc = vec![S::zero(); h];
        let mut dz = vec![S::zero(); h4];
        for ni in 0..n {
            dh.copy_from_slice(&g.data()[ni * h..(ni + 1) * h]);
            dc.fill(S::zero());
            for t in (0..steps).rev() {
                let base = ni * steps + t;
                let gates = &cache.gates[base * h4..(base + 1) * h4];
                let c = &cache.cells[base * h..(base + 1) * h];
                let (c_prev, h_prev) = if t == 0 {
                    (&zero_h[..], &zero_h[..])
                } else {
                    (
                        &cache.cells[(base - 1) * h..base * h],
                        &cache.hiddens[(base - 1) * h..base * h],
                    )
                };
                for j in 0..h {
                    let (ig, fg, gg, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                    let tc = c[j].tanh();
                    let d_o = dh[j] * tc;
                    dc[j] += dh[j] * og * (S::one() - tc * tc);
                    let d_i = dc[j] * gg;
                    let d_g = dc[j] * ig;
                    let d_f = dc[j] * c_prev[j];
                    dz[j] = d_i * ig * (S::one() - ig);
                    dz[h + j] = d_f * fg * (S::one() - fg);
                    dz[2 * h + j] = d_g * (S::one() - gg * gg);
                    dz[3 * h + j] = d_o * og * (S::one() - og);
                    dc[j] *= fg;
                }
                for (bv, &zv) in db.iter_mut().zip(&dz) {
                    *bv += zv;
                }
                let xrow = &x.data()[base * d..(base + 1) * d];
                let dxrow = &mut dx.data_mut()[base * d..(base + 1) * d];
                for i in 0..d {
                    let wrow = &wx[i * h4..(i + 1) * h4];
                    let dwrow = &mut dwx[i * h4..(i + 1) * h4];
                    let mut acc = S::zero();
                    for ((dwv, &wv), &zv) in dwrow.iter_mut().zip(wrow).zip(&dz) {
                        *dwv += xrow[i] * zv;
                        acc += wv * zv;
                    }
                    dxrow[i] = acc;
                }
                for i in 0..h {
                    let wrow = &wh[i * h4..(i + 1) * h4];
                    let dwrow = &mut dwh[i * h4..(i + 1) * h4];
                    let mut acc = S::zero();
                    for ((dwv, &wv), &zv) in dwrow.iter_mut().zip(wrow).zip(&dz) {
                        *dwv += h_prev[i] * zv;
                        acc += wv * zv;
                    }
                    dh[i] = acc;
                }
            }
        }
        Ok(dx)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}
