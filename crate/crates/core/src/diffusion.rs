//! Conditional diffusion action sampler.
//!
//! A noise-prediction network `eps(a_k, k, s)` drives a DDPM reverse chain
//! that starts from `a_K ~ N(0, I)` and ends at `a_0`; the emitted action is
//! `tanh(a_0)`. All noise in the chain is drawn up front, so the sample is a
//! deterministic function of the weights given the rng state and gradients
//! flow through every reverse step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Mat, Mlp, MlpCache};

pub const DEFAULT_STEPS: usize = 5;
pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 0.2;
pub const HIDDEN_UNITS: usize = 128;
pub const STEP_EMBED_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
    Cosine,
}

/// Variance schedule, indexed `1..=K` through the accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Linearly spaced betas from `beta_min` to `beta_max`.
pub fn make_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<DiffusionSchedule> {
    DiffusionSchedule::new(ScheduleKind::Linear, steps, beta_min, beta_max)
}

impl DiffusionSchedule {
    pub fn new(kind: ScheduleKind, steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("diffusion_steps", "must be at least 1"));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::config(
                "beta_min/beta_max",
                format!("need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"),
            ));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear => (0..steps)
                .map(|i| {
                    if steps == 1 {
                        beta_min
                    } else {
                        beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
                    }
                })
                .collect(),
            ScheduleKind::Cosine => {
                // Cosine alpha_bar curve, betas clipped into [beta_min, beta_max].
                let s = 0.008;
                let f = |t: f64| {
                    let x = (t / steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
                    x.cos().powi(2)
                };
                let mut prev = beta_min;
                (1..=steps)
                    .map(|k| {
                        let b = (1.0 - f(k as f64) / f(k as f64 - 1.0)).clamp(beta_min, beta_max);
                        prev = b.max(prev);
                        prev
                    })
                    .collect()
            }
        };
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Self {
            kind,
            beta_min,
            beta_max,
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alphas[k - 1]
    }

    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bars[k - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Coefficient of the predicted noise in the reverse mean, before the
    /// `1 / sqrt(alpha)` scaling.
    fn eps_coef(&self, k: usize) -> f64 {
        self.beta(k) / (1.0 - self.alpha_bar(k)).sqrt()
    }
}

/// `a_k = sqrt(alpha_bar_k) a_0 + sqrt(1 - alpha_bar_k) noise`.
pub fn forward_noise(a0: &[f64], k: usize, schedule: &DiffusionSchedule, noise: &[f64]) -> Vec<f64> {
    assert_eq!(a0.len(), noise.len(), "noise dimension");
    let ab = schedule.alpha_bar(k);
    let (s0, s1) = (ab.sqrt(), (1.0 - ab).sqrt());
    a0.iter().zip(noise).map(|(a, n)| s0 * a + s1 * n).collect()
}

/// Anything that predicts the injected noise for a batch of noisy actions.
pub trait NoisePredictor {
    fn predict(&self, a_k: &Mat, k: usize, obs: &Mat) -> Mat;
}

/// One reverse step: `a_{k-1} = mean + sqrt(beta_k) z`, with `z = 0` at `k = 1`.
pub fn denoise_step<P, R>(
    a_k: &Mat,
    k: usize,
    obs: &Mat,
    predictor: &P,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Mat
where
    P: NoisePredictor + ?Sized,
    R: Rng + ?Sized,
{
    let eps = predictor.predict(a_k, k, obs);
    let z = if k > 1 {
        Some(normal_mat(a_k.rows, a_k.cols, rng))
    } else {
        None
    };
    reverse_update(a_k, &eps, k, schedule, z.as_ref())
}

fn reverse_update(a_k: &Mat, eps: &Mat, k: usize, schedule: &DiffusionSchedule, z: Option<&Mat>) -> Mat {
    let inv_sqrt_alpha = 1.0 / schedule.alpha(k).sqrt();
    let coef = schedule.eps_coef(k);
    let sigma = schedule.beta(k).sqrt();
    let mut out = Mat::zeros(a_k.rows, a_k.cols);
    for i in 0..out.data.len() {
        let mean = (a_k.data[i] - coef * eps.data[i]) * inv_sqrt_alpha;
        out.data[i] = match z {
            Some(z) => mean + sigma * z.data[i],
            None => mean,
        };
    }
    out
}

fn normal_mat<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
    )
}

/// Sinusoidal embedding of the step index.
pub fn step_embedding(k: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for j in 0..half {
        let freq = (-(10_000f64.ln()) * j as f64 / half as f64).exp();
        let x = k as f64 * freq;
        out[j] = x.sin();
        out[half + j] = x.cos();
    }
    out
}

/// Noise-prediction network: `[a_k | embed(k) | s] -> 128 -> 128 -> eps`,
/// mish hidden units and (by default) a tanh output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    net: Mlp,
    action_dim: usize,
    obs_dim: usize,
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(action_dim: usize, obs_dim: usize, rng: &mut R) -> Self {
        Self::with_hidden(action_dim, obs_dim, &[HIDDEN_UNITS, HIDDEN_UNITS], rng)
    }

    pub fn with_hidden<R: Rng + ?Sized>(action_dim: usize, obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        Self::with_output(action_dim, obs_dim, hidden, Activation::Tanh, rng)
    }

    pub fn with_output<R: Rng + ?Sized>(
        action_dim: usize,
        obs_dim: usize,
        hidden: &[usize],
        output: Activation,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![action_dim + STEP_EMBED_DIM + obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Self {
            net: Mlp::new(&sizes, Activation::Mish, output, rng),
            action_dim,
            obs_dim,
        }
    }

    pub fn from_net(net: Mlp, action_dim: usize, obs_dim: usize) -> Result<Self> {
        if net.input_dim() != action_dim + STEP_EMBED_DIM + obs_dim || net.output_dim() != action_dim {
            return Err(Error::Load(format!(
                "denoiser network {:?} does not fit action_dim {action_dim}, obs_dim {obs_dim}",
                net.sizes()
            )));
        }
        Ok(Self {
            net,
            action_dim,
            obs_dim,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn input(&self, a_k: &Mat, k: usize, obs: &Mat) -> Mat {
        assert_eq!(a_k.cols, self.action_dim, "noisy action width");
        assert_eq!(obs.cols, self.obs_dim, "observation width");
        assert_eq!(a_k.rows, obs.rows, "batch size");
        let emb = step_embedding(k, STEP_EMBED_DIM);
        let width = self.action_dim + STEP_EMBED_DIM + self.obs_dim;
        let mut x = Mat::zeros(a_k.rows, width);
        for r in 0..a_k.rows {
            let row = x.row_mut(r);
            row[..self.action_dim].copy_from_slice(a_k.row(r));
            row[self.action_dim..self.action_dim + STEP_EMBED_DIM].copy_from_slice(&emb);
            row[self.action_dim + STEP_EMBED_DIM..].copy_from_slice(obs.row(r));
        }
        x
    }
}

impl NoisePredictor for Denoiser {
    fn predict(&self, a_k: &Mat, k: usize, obs: &Mat) -> Mat {
        self.net.forward(&self.input(a_k, k, obs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOutput {
    pub action: Vec<f64>,
    /// `a_K, ..., a_0` when requested.
    pub chain: Option<Vec<Vec<f64>>>,
}

/// Everything the backward pass through the chain needs.
#[derive(Debug)]
pub struct SamplerTape {
    /// Network caches ordered by step `k = K..1`.
    caches: Vec<MlpCache>,
    action: Mat,
}

impl SamplerTape {
    pub fn action(&self) -> &Mat {
        &self.action
    }
}

/// Diffusion policy: denoiser plus schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionActor {
    pub denoiser: Denoiser,
    pub schedule: DiffusionSchedule,
}

impl DiffusionActor {
    pub fn new(denoiser: Denoiser, schedule: DiffusionSchedule) -> Self {
        Self { denoiser, schedule }
    }

    pub fn action_dim(&self) -> usize {
        self.denoiser.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.denoiser.obs_dim
    }

    /// Draws one action for a single observation.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, record_chain: bool) -> SamplerOutput {
        let obs = Mat::from_vec(1, obs.len(), obs.to_vec());
        let mut a = normal_mat(1, self.action_dim(), rng);
        let mut chain = record_chain.then(|| vec![a.data.clone()]);
        for k in (1..=self.schedule.steps()).rev() {
            a = denoise_step(&a, k, &obs, &self.denoiser, &self.schedule, rng);
            if let Some(c) = chain.as_mut() {
                c.push(a.data.clone());
            }
        }
        SamplerOutput {
            action: a.data.iter().map(|v| v.tanh()).collect(),
            chain,
        }
    }

    /// Batched sampling without a tape.
    pub fn sample_batch<R: Rng + ?Sized>(&self, obs: &Mat, rng: &mut R) -> Mat {
        let mut a = normal_mat(obs.rows, self.action_dim(), rng);
        for k in (1..=self.schedule.steps()).rev() {
            a = denoise_step(&a, k, obs, &self.denoiser, &self.schedule, rng);
        }
        a.data.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    /// Batched sampling that records what [`Self::backward`] needs. Draws
    /// random numbers in the same order as [`Self::sample_batch`].
    pub fn sample_batch_taped<R: Rng + ?Sized>(&self, obs: &Mat, rng: &mut R) -> SamplerTape {
        let mut a = normal_mat(obs.rows, self.action_dim(), rng);
        let mut caches = Vec::with_capacity(self.schedule.steps());
        for k in (1..=self.schedule.steps()).rev() {
            let x = self.denoiser.input(&a, k, obs);
            let (eps, cache) = self.denoiser.net.forward_cached(&x);
            let z = (k > 1).then(|| normal_mat(a.rows, a.cols, rng));
            a = reverse_update(&a, &eps, k, &self.schedule, z.as_ref());
            caches.push(cache);
        }
        a.data.iter_mut().for_each(|v| *v = v.tanh());
        SamplerTape { caches, action: a }
    }

    /// Accumulates dL/dweights into `grad_params` given dL/daction.
    pub fn backward(&self, tape: &SamplerTape, grad_action: &Mat, grad_params: &mut [f64]) {
        let steps = self.schedule.steps();
        let d = self.action_dim();
        // through the final tanh
        let mut g = grad_action.clone();
        for (gv, &y) in g.data.iter_mut().zip(&tape.action.data) {
            *gv *= 1.0 - y * y;
        }
        // tape.caches[i] belongs to step k = steps - i
        for k in 1..=steps {
            let cache = &tape.caches[steps - k];
            let inv_sqrt_alpha = 1.0 / self.schedule.alpha(k).sqrt();
            let coef = self.schedule.eps_coef(k);
            let mut g_eps = g.clone();
            g_eps.data.iter_mut().for_each(|v| *v *= -coef * inv_sqrt_alpha);
            let need_input = k < steps;
            let g_in = self.denoiser.net.backward(cache, &g_eps, Some(grad_params), need_input);
            if let Some(g_in) = g_in {
                let mut next = Mat::zeros(g.rows, d);
                for r in 0..g.rows {
                    let src = g_in.row(r);
                    let dst = next.row_mut(r);
                    let gr = g.row(r);
                    for c in 0..d {
                        dst[c] = gr[c] * inv_sqrt_alpha + src[c];
                    }
                }
                g = next;
            }
        }
    }
}
