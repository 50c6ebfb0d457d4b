//! Noise-free rollouts of trained checkpoints and of the fixed baselines.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{no_charge_wrap, GreedyMaxAoi, Policy, PolicyKind, RandomPolicy};
use crate::env::{EnvConfig, UavEnv};
use crate::error::{Error, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::metrics::EpisodeStats;
use crate::rl::Actor;
use crate::seeding::{derive_seed, episode_seed, EVAL_STREAM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: PolicyKind,
    pub episodes: u64,
    pub seed: u64,
    pub mean_episode_avg_aoi: f64,
    pub std_episode_avg_aoi: f64,
    pub mean_uploads: f64,
    pub episode_avg_aoi: Vec<f64>,
}

/// The policy a kind acts with. Learned kinds need their trained actor.
pub fn policy_for(kind: PolicyKind, actor: Option<Actor>) -> Result<Box<dyn Policy>> {
    let base: Box<dyn Policy> = match (kind, actor) {
        (PolicyKind::Random, _) => Box::new(RandomPolicy),
        (PolicyKind::GreedyMaxAoi, _) => Box::new(GreedyMaxAoi),
        (k, Some(a)) if k.actor_kind() == Some(a.kind()) => Box::new(a),
        (k, Some(a)) => {
            return Err(Error::Usage(format!(
                "policy `{k}` cannot act with a {:?} actor",
                a.kind()
            )))
        }
        (k, None) => return Err(Error::Usage(format!("policy `{k}` needs a checkpoint"))),
    };
    Ok(if kind.no_charge() {
        Box::new(no_charge_wrap(base))
    } else {
        base
    })
}

/// Runs one full episode from `layout_seed`.
pub fn rollout_episode(
    env_config: &EnvConfig,
    policy: &dyn Policy,
    layout_seed: u64,
    rng: &mut dyn RngCore,
) -> Result<EpisodeStats> {
    let (mut env, mut obs) = UavEnv::new(env_config.clone(), layout_seed)?;
    let mut stats = EpisodeStats::default();
    loop {
        let action = policy.act(&obs, rng);
        let out = env.step_raw(&action)?;
        stats.record_step(&out);
        if out.done {
            return Ok(stats);
        }
        obs = out.observation;
    }
}

/// Evaluates `policy` over `episodes` layouts drawn from the evaluation
/// stream of `seed`.
pub fn evaluate_policy(
    kind: PolicyKind,
    policy: &dyn Policy,
    env_config: &EnvConfig,
    episodes: u64,
    seed: u64,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    env_config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, EVAL_STREAM));
    let mut aoi = Vec::with_capacity(episodes as usize);
    let mut uploads = 0u64;
    for e in 0..episodes {
        let stats = rollout_episode(
            env_config,
            policy,
            episode_seed(env_config.seed, seed ^ EVAL_STREAM, e),
            &mut rng,
        )?;
        aoi.push(stats.episode_avg_aoi());
        uploads += stats.uploads();
    }
    let n = episodes as f64;
    let mean = aoi.iter().sum::<f64>() / n;
    let var = aoi.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalSummary {
        policy: kind,
        episodes,
        seed,
        mean_episode_avg_aoi: mean,
        std_episode_avg_aoi: var.sqrt(),
        mean_uploads: uploads as f64 / n,
        episode_avg_aoi: aoi,
    })
}

pub fn evaluate_checkpoint(checkpoint: &Checkpoint, episodes: u64, seed: u64) -> Result<EvalSummary> {
    let policy = policy_for(checkpoint.policy, Some(checkpoint.actor.clone()))?;
    evaluate_policy(checkpoint.policy, policy.as_ref(), &checkpoint.env, episodes, seed)
}

pub fn evaluate_baseline(kind: PolicyKind, env_config: &EnvConfig, episodes: u64, seed: u64) -> Result<EvalSummary> {
    if kind.is_learned() {
        return Err(Error::Usage(format!("policy `{kind}` is learned; pass a checkpoint")));
    }
    let policy = policy_for(kind, None)?;
    evaluate_policy(kind, policy.as_ref(), env_config, episodes, seed)
}
