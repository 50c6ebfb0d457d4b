//! The two actor implementations the trainer can drive.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionActor, DiffusionSchedule, SamplerTape};
use crate::nn::{Activation, Mat, Mlp, MlpCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    /// Deterministic MLP actor (TD3).
    Mlp,
    /// Conditional diffusion sampler (DTD3).
    Diffusion,
}

/// `obs -> hidden -> hidden -> action`, mish hidden units, tanh output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpActor {
    pub net: Mlp,
}

impl MlpActor {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            net: Mlp::new(
                &[obs_dim, hidden, hidden, action_dim],
                Activation::Mish,
                Activation::Tanh,
                rng,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Actor {
    Mlp(MlpActor),
    Diffusion(DiffusionActor),
}

#[derive(Debug)]
pub enum ActorTape {
    Mlp { cache: MlpCache, action: Mat },
    Diffusion(SamplerTape),
}

impl ActorTape {
    pub fn action(&self) -> &Mat {
        match self {
            ActorTape::Mlp { action, .. } => action,
            ActorTape::Diffusion(t) => t.action(),
        }
    }
}

impl Actor {
    pub fn kind(&self) -> ActorKind {
        match self {
            Actor::Mlp(_) => ActorKind::Mlp,
            Actor::Diffusion(_) => ActorKind::Diffusion,
        }
    }

    /// Builds a freshly initialized actor. `schedule` is ignored for MLP actors.
    pub fn build<R: Rng + ?Sized>(
        kind: ActorKind,
        obs_dim: usize,
        action_dim: usize,
        hidden: usize,
        schedule: &DiffusionSchedule,
        rng: &mut R,
    ) -> Self {
        Self::build_with_output(kind, obs_dim, action_dim, hidden, schedule, Activation::Tanh, rng)
    }

    /// As [`Actor::build`], choosing the denoiser's output activation.
    pub fn build_with_output<R: Rng + ?Sized>(
        kind: ActorKind,
        obs_dim: usize,
        action_dim: usize,
        hidden: usize,
        schedule: &DiffusionSchedule,
        denoiser_output: Activation,
        rng: &mut R,
    ) -> Self {
        match kind {
            ActorKind::Mlp => Actor::Mlp(MlpActor::new(obs_dim, action_dim, hidden, rng)),
            ActorKind::Diffusion => Actor::Diffusion(DiffusionActor::new(
                crate::diffusion::Denoiser::with_output(action_dim, obs_dim, &[hidden, hidden], denoiser_output, rng),
                schedule.clone(),
            )),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Actor::Mlp(a) => a.net.params(),
            Actor::Diffusion(a) => a.denoiser.net().params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Actor::Mlp(a) => a.net.params_mut(),
            Actor::Diffusion(a) => a.denoiser.net_mut().params_mut(),
        }
    }

    pub fn network(&self) -> &Mlp {
        match self {
            Actor::Mlp(a) => &a.net,
            Actor::Diffusion(a) => a.denoiser.net(),
        }
    }

    /// Actions for a batch of observations. The MLP actor ignores `rng`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &Mat, rng: &mut R) -> Mat {
        match self {
            Actor::Mlp(a) => a.net.forward(obs),
            Actor::Diffusion(a) => a.sample_batch(obs, rng),
        }
    }

    pub fn act_taped<R: Rng + ?Sized>(&self, obs: &Mat, rng: &mut R) -> ActorTape {
        match self {
            Actor::Mlp(a) => {
                let (action, cache) = a.net.forward_cached(obs);
                ActorTape::Mlp { cache, action }
            }
            Actor::Diffusion(a) => ActorTape::Diffusion(a.sample_batch_taped(obs, rng)),
        }
    }

    /// Accumulates dL/dparams given dL/daction.
    pub fn backward(&self, tape: &ActorTape, grad_action: &Mat, grad_params: &mut [f64]) {
        match (self, tape) {
            (Actor::Mlp(a), ActorTape::Mlp { cache, .. }) => {
                a.net.backward(cache, grad_action, Some(grad_params), false);
            }
            (Actor::Diffusion(a), ActorTape::Diffusion(t)) => a.backward(t, grad_action, grad_params),
            _ => panic!("actor tape does not belong to this actor kind"),
        }
    }
}
