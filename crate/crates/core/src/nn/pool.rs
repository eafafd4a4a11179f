use super::tensor::Tensor;
use crate::error::{HarError, Result};
use crate::scalar::Scalar;

/// Max pooling along the time axis of `[batch, time, column, feature]`.
///
/// Windows have stride equal to their size. A trailing partial window is
/// pooled as-is, so the output length is `ceil(time / size)`; inputs
/// shorter than one window pass through unchanged.
#[derive(Debug, Clone)]
pub struct MaxPool<S> {
    pub size: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> MaxPool<S> {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(HarError::invalid("pool size must be positive"));
        }
        Ok(MaxPool {
            size,
            cache: None,
            _marker: std::marker::PhantomData,
        })
    }

    pub fn output_time(&self, time: usize) -> usize {
        if time < self.size {
            time
        } else {
            time.div_ceil(self.size)
        }
    }

    /// Pooled tensor plus, for every output element, the flat input index it came from.
    pub fn pool_with_argmax(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Vec<usize>)> {
        x.expect_rank(4, "maxpool")?;
        let s = x.shape();
        let (n, t_in, cols, f) = (s[0], s[1], s[2], s[3]);
        let t_out = self.output_time(t_in);
        let win = if t_in < self.size { 1 } else { self.size };
        let inner = cols * f;
        let xd = x.data();
        let mut out = Tensor::zeros(&[n, t_out, cols, f]);
        let mut argmax = vec![0usize; out.len()];
        let od = out.data_mut();
        for ni in 0..n {
            for to in 0..t_out {
                let start = to * win;
                let end = (start + win).min(t_in);
                let o_base = (ni * t_out + to) * inner;
                for j in 0..inner {
                    let mut best_idx = (ni * t_in + start) * inner + j;
                    let mut best = xd[best_idx];
                    for ti in start + 1..end {
                        let idx = (ni * t_in + ti) * inner + j;
                        // Strict comparison: ties resolve to the earliest step.
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                    od[o_base + j] = best;
                    argmax[o_base + j] = best_idx;
                }
            }
        }
        Ok((out, argmax))
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(self.pool_with_argmax(x)?.0)
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (out, argmax) = self.pool_with_argmax(x)?;
        self.cache = Some((x.shape().to_vec(), argmax));
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<S>) -> Result<Tensor<S>> {
        let (shape, argmax) = self.cache.as_ref().ok_or(HarError::NoForwardCache("maxpool"))?;
        if g.len() != argmax.len() {
            return Err(HarError::shape("maxpool backward: gradient does not match output"));
        }
        let mut dx = Tensor::zeros(shape);
        let dxd = dx.data_mut();
        for (&idx, &gv) in argmax.iter().zip(g.data()) {
            dxd[idx] += gv;
        }
        Ok(dx)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}
