//! Helpers shared by the integration test targets: random tensors, a
//! central-difference gradient checker and naive reference kernels.
#![allow(dead_code)]

use har_core::nn::{LayerSpec, Network, Tensor};
use har_core::rng::{rng_from, Rng};
use rand::Rng as _;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Below this magnitude both gradients count as zero.
pub const GRAD_ZERO: f64 = 1e-8;
/// Elements checked per tensor (all of them when the tensor is smaller).
const PER_TENSOR: usize = 24;

pub fn rand_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradReport {
    pub max_rel: f64,
    pub checked: usize,
    /// Elements whose finite differences straddle a non-differentiable point.
    pub kinks: usize,
}

impl GradReport {
    pub fn merge(&mut self, other: GradReport) {
        self.max_rel = self.max_rel.max(other.max_rel);
        self.checked += other.checked;
        self.kinks += other.kinks;
    }

    pub fn passes(&self) -> bool {
        self.max_rel < GRAD_REL_TOL && self.checked > 0 && self.kinks * 10 <= self.checked
    }
}

/// Scalar objective `sum(out * weights)` of a fresh copy of `net`. With
/// `mode = Some(seed)` the pass runs in training mode with a dropout stream
/// rebuilt from `seed`, so every evaluation sees the same mask.
fn objective(net: &Network<f64>, x: &Tensor<f64>, weights: &Tensor<f64>, mode: Option<u64>) -> f64 {
    let mut net = net.clone();
    let mut rng = mode.map(|s| rng_from(s, &[0]));
    let out = net.forward(x, rng.as_mut()).unwrap();
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

fn compare(analytic: f64, eval: &mut dyn FnMut(f64) -> f64, report: &mut GradReport) {
    let h = FD_STEP;
    let fd1 = (eval(h) - eval(-h)) / (2.0 * h);
    let fd2 = (eval(2.0 * h) - eval(-2.0 * h)) / (4.0 * h);
    // On a smooth objective the two estimates differ by O(h^2) plus rounding;
    // a larger gap means a ReLU/max kink lies within the stencil.
    if (fd1 - fd2).abs() > 1e-7 * fd1.abs().max(1.0) {
        report.kinks += 1;
        return;
    }
    report.checked += 1;
    let scale = analytic.abs().max(fd1.abs());
    if scale < GRAD_ZERO {
        return;
    }
    report.max_rel = report.max_rel.max((analytic - fd1).abs() / scale);
}

fn indices(len: usize, rng: &mut Rng) -> Vec<usize> {
    if len <= PER_TENSOR {
        (0..len).collect()
    } else {
        rand::seq::index::sample(rng, len, PER_TENSOR).into_vec()
    }
}

/// Compare every parameter gradient and the input gradient of `net` at `x`
/// against central finite differences.
pub fn grad_check(net: &Network<f64>, x: &Tensor<f64>, mode: Option<u64>, rng: &mut Rng) -> GradReport {
    let probe = {
        let mut n = net.clone();
        let mut r = mode.map(|s| rng_from(s, &[0]));
        n.forward(x, r.as_mut()).unwrap()
    };
    let weights = rand_tensor(probe.shape(), -1.0, 1.0, rng);

    let mut analytic = net.clone();
    let mut r = mode.map(|s| rng_from(s, &[0]));
    analytic.forward(x, r.as_mut()).unwrap();
    analytic.zero_grad();
    let dx = analytic.backward(&weights).unwrap();

    let mut report = GradReport::default();
    for i in indices(x.len(), rng) {
        let mut eval = |d: f64| {
            let mut xp = x.clone();
            xp.data_mut()[i] += d;
            objective(net, &xp, &weights, mode)
        };
        compare(dx.data()[i], &mut eval, &mut report);
    }
    let params = analytic.named_params();
    for (k, (_, p)) in params.iter().enumerate() {
        for i in indices(p.value.len(), rng) {
            let mut eval = |d: f64| {
                let mut perturbed = net.clone();
                perturbed.named_params_mut()[k].1.value.data_mut()[i] += d;
                objective(&perturbed, x, &weights, mode)
            };
            compare(p.grad.data()[i], &mut eval, &mut report);
        }
    }
    report
}

/// Build a network from `specs` for per-sample shape `input` with a random seed.
pub fn network(specs: &[LayerSpec], input: &[usize], seed: u64) -> Network<f64> {
    Network::build(specs, input, &mut rng_from(seed, &[1])).unwrap()
}

/// Naive convolution: `out[n,t,c,o] = b[o] + sum_k sum_f x[n,t+k-pad,c,f] w[k,f,o]`.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, pad: usize, t_out: usize) -> Vec<f64> {
    let [n, t_in, cols, fi] = x.shape() else { panic!("rank") };
    let [k, _, fo] = w.shape() else { panic!("rank") };
    let at = |s: &[usize], idx: &[usize]| idx.iter().zip(s).fold(0, |acc, (i, d)| acc * d + i);
    let mut out = Vec::new();
    for ni in 0..*n {
        for t in 0..t_out {
            for c in 0..*cols {
                for o in 0..*fo {
                    let mut s = b.data()[o];
                    for kk in 0..*k {
                        let ti = t as i64 + kk as i64 - pad as i64;
                        if ti < 0 || ti >= *t_in as i64 {
                            continue;
                        }
                        for f in 0..*fi {
                            s += x.data()[at(x.shape(), &[ni, ti as usize, c, f])] * w.data()[at(w.shape(), &[kk, f, o])];
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Naive max pooling with stride = size, partial trailing window, identity below one window.
pub fn naive_pool(x: &Tensor<f64>, size: usize) -> Vec<f64> {
    let [n, t_in, cols, f] = x.shape() else { panic!("rank") };
    let get = |ni: usize, t: usize, c: usize, j: usize| x.data()[((ni * t_in + t) * cols + c) * f + j];
    if *t_in < size {
        return x.data().to_vec();
    }
    let t_out = (t_in + size - 1) / size;
    let mut out = Vec::new();
    for ni in 0..*n {
        for to in 0..t_out {
            for c in 0..*cols {
                for j in 0..*f {
                    let mut m = f64::NEG_INFINITY;
                    for t in to * size..((to + 1) * size).min(*t_in) {
                        m = m.max(get(ni, t, c, j));
                    }
                    out.push(m);
                }
            }
        }
    }
    out
}

/// Textbook softmax without any stabilization.
pub fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `-(1/N) sum_n sum_k y ln(max(p, 1e-12))` over `[N, K]` row-major data.
pub fn naive_cross_entropy(p: &[f64], y: &[f64], k: usize) -> f64 {
    let n = p.len() / k;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..k {
            total -= y[i * k + j] * p[i * k + j].max(1e-12).ln();
        }
    }
    total / n as f64
}
