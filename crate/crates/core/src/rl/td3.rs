//! Twin-critic, delayed-actor update rules shared by TD3 and DTD3.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffusion::{self, DiffusionSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Adam, Mat, Mlp};
use crate::rl::actor::{Actor, ActorKind};
use crate::rl::buffer::{Batch, DEFAULT_CAPACITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Applies to actor and critics unless overridden below.
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_learning_rate: Option<f64>,
    pub gamma: f64,
    /// Soft-update rate.
    pub rho: f64,
    pub policy_delay: u64,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub explore_noise_std: f64,
    pub total_env_steps: u64,
    pub warmup_steps: u64,
    /// Greedy evaluation episode every this many training episodes (0 = off).
    pub eval_interval: u64,
    pub seed: u64,
    pub hidden_units: usize,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    #[serde(default)]
    pub beta_schedule: ScheduleKind,
    /// Output activation of the diffusion denoiser (`tanh` or `identity`).
    #[serde(default = "default_denoiser_output")]
    pub denoiser_output: Activation,
}

fn default_denoiser_output() -> Activation {
    Activation::Tanh
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            buffer_capacity: DEFAULT_CAPACITY,
            learning_rate: 3e-4,
            actor_learning_rate: None,
            critic_learning_rate: None,
            gamma: 0.99,
            rho: 0.005,
            policy_delay: 2,
            target_noise_std: 0.2,
            target_noise_clip: 0.5,
            explore_noise_std: 0.1,
            total_env_steps: 300_000,
            warmup_steps: 5_000,
            eval_interval: 0,
            seed: 0,
            hidden_units: diffusion::HIDDEN_UNITS,
            diffusion_steps: diffusion::DEFAULT_STEPS,
            beta_min: diffusion::DEFAULT_BETA_MIN,
            beta_max: diffusion::DEFAULT_BETA_MAX,
            beta_schedule: ScheduleKind::Linear,
            denoiser_output: Activation::Tanh,
        }
    }
}

impl TrainerConfig {
    pub fn actor_lr(&self) -> f64 {
        self.actor_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn critic_lr(&self) -> f64 {
        self.critic_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.beta_schedule, self.diffusion_steps, self.beta_min, self.beta_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::config("batch_size", "exceeds buffer_capacity"));
        }
        for (name, lr) in [
            ("learning_rate", Some(self.learning_rate)),
            ("actor_learning_rate", self.actor_learning_rate),
            ("critic_learning_rate", self.critic_learning_rate),
        ] {
            if let Some(lr) = lr {
                if !(lr.is_finite() && lr > 0.0) {
                    return Err(Error::config(name, format!("must be > 0, got {lr}")));
                }
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", format!("must be in (0, 1], got {}", self.gamma)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config("rho", format!("must be in (0, 1), got {}", self.rho)));
        }
        if self.policy_delay == 0 {
            return Err(Error::config("policy_delay", "must be at least 1"));
        }
        for (name, v) in [
            ("target_noise_std", self.target_noise_std),
            ("target_noise_clip", self.target_noise_clip),
            ("explore_noise_std", self.explore_noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.hidden_units == 0 {
            return Err(Error::config("hidden_units", "must be at least 1"));
        }
        if self.denoiser_output == Activation::Mish {
            return Err(Error::config("denoiser_output", "must be `tanh` or `identity`"));
        }
        self.schedule()?;
        Ok(())
    }
}

/// Builds a critic `[obs | action] -> hidden -> hidden -> Q`.
pub fn new_critic<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, hidden: usize, rng: &mut R) -> Mlp {
    Mlp::new(
        &[obs_dim + action_dim, hidden, hidden, 1],
        Activation::Mish,
        Activation::Identity,
        rng,
    )
}

fn q_values(critic: &Mlp, obs: &Mat, action: &Mat) -> Vec<f64> {
    critic.forward(&Mat::hcat(&[obs, action])).data
}

/// Two independently initialized Q-networks with their optimizers.
#[derive(Debug, Clone)]
pub struct TwinCritics {
    pub nets: [Mlp; 2],
    opts: [Adam; 2],
}

impl TwinCritics {
    pub fn new(nets: [Mlp; 2], lr: f64) -> Self {
        let opts = [
            Adam::new(nets[0].params().len(), lr),
            Adam::new(nets[1].params().len(), lr),
        ];
        Self { nets, opts }
    }
}

/// Target-policy-smoothed, min-of-twins bootstrap target.
pub fn critic_target<R: Rng + ?Sized>(
    batch: &Batch,
    target_actor: &Actor,
    target_critics: &[Mlp; 2],
    config: &TrainerConfig,
    rng: &mut R,
) -> Vec<f64> {
    let mut next_action = target_actor.act(&batch.next_obs, rng);
    if config.target_noise_std > 0.0 {
        let noise = Normal::new(0.0, config.target_noise_std).expect("valid std");
        let clip = config.target_noise_clip;
        for a in next_action.data.iter_mut() {
            let n: f64 = noise.sample(rng);
            *a = (*a + n.clamp(-clip, clip)).clamp(-1.0, 1.0);
        }
    }
    let q1 = q_values(&target_critics[0], &batch.next_obs, &next_action);
    let q2 = q_values(&target_critics[1], &batch.next_obs, &next_action);
    (0..batch.len())
        .map(|i| batch.reward[i] + config.gamma * (1.0 - batch.done[i]) * q1[i].min(q2[i]))
        .collect()
}

/// One Adam step of each twin on `mean((Q - y)^2)`. Returns the summed loss
/// measured before the step.
pub fn critic_update(critics: &mut TwinCritics, batch: &Batch, y: &[f64]) -> Result<f64> {
    assert_eq!(y.len(), batch.len(), "target length");
    let input = Mat::hcat(&[&batch.obs, &batch.action]);
    let n = batch.len() as f64;
    let mut total = 0.0;
    for (net, opt) in critics.nets.iter_mut().zip(critics.opts.iter_mut()) {
        let (q, cache) = net.forward_cached(&input);
        let mut grad = Mat::zeros(q.rows, 1);
        let mut loss = 0.0;
        for ((g, &qv), &yv) in grad.data.iter_mut().zip(&q.data).zip(y) {
            let diff = qv - yv;
            loss += diff * diff;
            *g = 2.0 * diff / n;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::TrainingFault {
                step: 0,
                reason: format!("non-finite critic loss {loss}"),
            });
        }
        let mut g = vec![0.0; net.params().len()];
        net.backward(&cache, &grad, Some(&mut g), false);
        opt.step(net.params_mut(), &g);
        total += loss;
    }
    Ok(total)
}

/// One Adam step on `-mean(Q1(s, actor(s)))`; only the actor changes.
/// Returns the loss measured before the step.
pub fn actor_update<R: Rng + ?Sized>(
    actor: &mut Actor,
    opt: &mut Adam,
    critic: &Mlp,
    obs: &Mat,
    rng: &mut R,
) -> Result<f64> {
    let tape = actor.act_taped(obs, rng);
    let action = tape.action();
    let input = Mat::hcat(&[obs, action]);
    let (q, cache) = critic.forward_cached(&input);
    let n = obs.rows as f64;
    let loss = -q.data.iter().sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::TrainingFault {
            step: 0,
            reason: format!("non-finite actor loss {loss}"),
        });
    }
    let grad_q = Mat::from_vec(q.rows, 1, vec![-1.0 / n; q.rows]);
    let grad_in = critic
        .backward(&cache, &grad_q, None, true)
        .expect("input gradient requested");
    let grad_action = grad_in.columns(obs.cols, action.cols);
    let mut g = vec![0.0; actor.params().len()];
    actor.backward(&tape, &grad_action, &mut g);
    opt.step(actor.params_mut(), &g);
    Ok(loss)
}

/// `target <- rho * online + (1 - rho) * target`.
pub fn soft_update(target: &mut [f64], online: &[f64], rho: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::Usage(format!(
            "soft update between {} and {} parameters",
            target.len(),
            online.len()
        )));
    }
    nn::polyak(target, online, rho);
    Ok(())
}

/// Online and target networks plus update counters.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub actor: Actor,
    pub actor_target: Actor,
    actor_opt: Adam,
    pub critics: TwinCritics,
    pub critic_targets: [Mlp; 2],
    pub config: TrainerConfig,
    pub critic_updates: u64,
    pub actor_updates: u64,
}

/// Losses of one [`Td3Agent::update`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateLosses {
    pub critic: f64,
    pub actor: Option<f64>,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(
        kind: ActorKind,
        obs_dim: usize,
        action_dim: usize,
        config: &TrainerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let schedule = config.schedule()?;
        let h = config.hidden_units;
        let actor = Actor::build_with_output(kind, obs_dim, action_dim, h, &schedule, config.denoiser_output, rng);
        let c1 = new_critic(obs_dim, action_dim, h, rng);
        let c2 = new_critic(obs_dim, action_dim, h, rng);
        Ok(Self::from_parts(actor, [c1, c2], config.clone()))
    }

    pub fn from_parts(actor: Actor, critics: [Mlp; 2], config: TrainerConfig) -> Self {
        let actor_opt = Adam::new(actor.params().len(), config.actor_lr());
        Self {
            actor_target: actor.clone(),
            actor,
            actor_opt,
            critic_targets: critics.clone(),
            critics: TwinCritics::new(critics, config.critic_lr()),
            config,
            critic_updates: 0,
            actor_updates: 0,
        }
    }

    /// One critic step; then, every `policy_delay` critic steps, one actor
    /// step followed by soft updates of all target networks.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateLosses> {
        let y = critic_target(batch, &self.actor_target, &self.critic_targets, &self.config, rng);
        let critic = critic_update(&mut self.critics, batch, &y)?;
        self.critic_updates += 1;
        let actor = self.delayed_actor_update(batch, rng)?;
        Ok(UpdateLosses { critic, actor })
    }

    /// Actor and target update, performed only when the critic-update
    /// counter is a multiple of `policy_delay`.
    pub fn delayed_actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<Option<f64>> {
        if self.critic_updates == 0 || !self.critic_updates.is_multiple_of(self.config.policy_delay) {
            return Ok(None);
        }
        let loss = actor_update(
            &mut self.actor,
            &mut self.actor_opt,
            &self.critics.nets[0],
            &batch.obs,
            rng,
        )?;
        self.actor_updates += 1;
        self.soft_update_targets()?;
        Ok(Some(loss))
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        let rho = self.config.rho;
        soft_update(self.actor_target.params_mut(), self.actor.params(), rho)?;
        for (t, o) in self.critic_targets.iter_mut().zip(&self.critics.nets) {
            soft_update(t.params_mut(), o.params(), rho)?;
        }
        Ok(())
    }
}
