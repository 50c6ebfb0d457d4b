//! Small dense networks with hand-written backpropagation.
//!
//! Everything is `f64` and row-major. A network keeps all of its parameters in
//! one flat vector (per layer: weights `out x in`, then biases `out`), so soft
//! updates, optimizers and checkpoints work on plain slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn hcat(parts: &[&Mat]) -> Mat {
        let rows = parts[0].rows;
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut off = 0;
            for p in parts {
                debug_assert_eq!(p.rows, rows);
                dst[off..off + p.cols].copy_from_slice(p.row(r));
                off += p.cols;
            }
        }
        out
    }

    /// Copies columns `start..start + width` into a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }
}

/// `c = a * b^T (+ c if accumulate)` where `b` is stored `n x k` row-major.
fn gemm_abt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, beta: f64) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a * b` with `a` `m x k`, `b` `k x n`.
fn gemm_ab(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, beta: f64) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c += a^T * b` with `a` `m x k`, `b` `m x n`, `c` `k x n`.
fn gemm_atb_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    unsafe {
        matrixmultiply::dgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Mish,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Mish => mish(x),
        }
    }

    /// Derivative evaluated from the pre-activation.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        self.apply_with_derivative(x).1
    }

    /// `(f(x), f'(x))` sharing one transcendental evaluation.
    #[inline]
    pub fn apply_with_derivative(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Identity => (x, 1.0),
            Activation::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Mish => mish_with_derivative(x),
        }
    }
}

/// `x * tanh(softplus(x))`, using `tanh(ln(1+e^x)) = (e^2x + 2e^x) / (e^2x + 2e^x + 2)`.
#[inline]
pub fn mish(x: f64) -> f64 {
    mish_with_derivative(x).0
}

#[inline]
pub fn mish_derivative(x: f64) -> f64 {
    mish_with_derivative(x).1
}

#[inline]
pub fn mish_with_derivative(x: f64) -> (f64, f64) {
    if x > 20.0 {
        return (x, 1.0);
    }
    let e = x.exp();
    let n = e * (e + 2.0);
    let t = n / (n + 2.0);
    // d/dx tanh(sp(x)) = (1 - t^2) * sigmoid(x)
    let sig = e / (1.0 + e);
    (x * t, t + x * (1.0 - t * t) * sig)
}

/// Feed-forward network: hidden layers share one activation, the last layer
/// has its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<f64>,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Mat>,
    /// Activation derivatives at each layer's pre-activation.
    derivs: Vec<Mat>,
}

impl Mlp {
    /// PyTorch-style init: every weight and bias uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let count = Self::param_count_for(sizes);
        let mut params = Vec::with_capacity(count);
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params,
        }
    }

    pub fn from_params(sizes: &[usize], hidden: Activation, output: Activation, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == Self::param_count_for(sizes)).then(|| Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params,
        })
    }

    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layer_count() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Offsets of (weights, biases) for `layer`.
    fn layer_offsets(&self, layer: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(layer) {
            off += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
        (off, off + fan_in * fan_out)
    }

    fn affine(&self, layer: usize, x: &Mat) -> Mat {
        let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
        assert_eq!(x.cols, fan_in, "layer {layer} input width");
        let (w_off, b_off) = self.layer_offsets(layer);
        let bias = &self.params[b_off..b_off + fan_out];
        let mut z = Mat::zeros(x.rows, fan_out);
        for r in 0..x.rows {
            z.row_mut(r).copy_from_slice(bias);
        }
        gemm_abt(
            &x.data,
            &self.params[w_off..b_off],
            &mut z.data,
            x.rows,
            fan_in,
            fan_out,
            1.0,
        );
        z
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut h = x.clone();
        for layer in 0..self.layer_count() {
            let mut z = self.affine(layer, &h);
            let act = self.activation(layer);
            if act != Activation::Identity {
                z.data.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: &Mat) -> (Mat, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layer_count());
        let mut derivs = Vec::with_capacity(self.layer_count());
        let mut h = x.clone();
        for layer in 0..self.layer_count() {
            let mut z = self.affine(layer, &h);
            let act = self.activation(layer);
            let mut d = Mat::zeros(z.rows, z.cols);
            if act == Activation::Identity {
                d.data.iter_mut().for_each(|v| *v = 1.0);
            } else {
                for (zv, dv) in z.data.iter_mut().zip(d.data.iter_mut()) {
                    let (f, df) = act.apply_with_derivative(*zv);
                    *zv = f;
                    *dv = df;
                }
            }
            inputs.push(h);
            derivs.push(d);
            h = z;
        }
        (h, MlpCache { inputs, derivs })
    }

    /// Backpropagates `grad_out` (dL/d output). Parameter gradients are
    /// accumulated into `grad_params` when given; the input gradient is
    /// returned when `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &Mat,
        mut grad_params: Option<&mut [f64]>,
        want_input_grad: bool,
    ) -> Option<Mat> {
        if let Some(g) = grad_params.as_deref() {
            assert_eq!(g.len(), self.params.len(), "gradient buffer length");
        }
        let mut delta = grad_out.clone();
        for layer in (0..self.layer_count()).rev() {
            let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
            if self.activation(layer) != Activation::Identity {
                for (d, &dv) in delta.data.iter_mut().zip(&cache.derivs[layer].data) {
                    *d *= dv;
                }
            }
            let x = &cache.inputs[layer];
            let batch = x.rows;
            if let Some(g) = grad_params.as_deref_mut() {
                let (w_off, b_off) = self.layer_offsets(layer);
                // dW (out x in) += delta^T x
                gemm_atb_acc(&delta.data, &x.data, &mut g[w_off..b_off], batch, fan_out, fan_in);
                let gb = &mut g[b_off..b_off + fan_out];
                for r in 0..batch {
                    for (acc, d) in gb.iter_mut().zip(delta.row(r)) {
                        *acc += d;
                    }
                }
            }
            if layer == 0 && !want_input_grad {
                return None;
            }
            let (w_off, b_off) = self.layer_offsets(layer);
            let mut prev = Mat::zeros(batch, fan_in);
            gemm_ab(
                &delta.data,
                &self.params[w_off..b_off],
                &mut prev.data,
                batch,
                fan_out,
                fan_in,
                0.0,
            );
            delta = prev;
        }
        Some(delta)
    }
}

/// `target <- rho * online + (1 - rho) * target`, elementwise.
pub fn polyak(target: &mut [f64], online: &[f64], rho: f64) {
    assert_eq!(target.len(), online.len(), "soft update shape mismatch");
    for (t, &o) in target.iter_mut().zip(online) {
        *t = rho * o + (1.0 - rho) * *t;
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr / bc1;
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= step * self.m[i] / ((self.v[i] / bc2).sqrt() + self.eps);
        }
    }
}
