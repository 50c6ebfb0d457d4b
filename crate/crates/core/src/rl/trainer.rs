//! The TD3 / DTD3 training loop.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::baselines::{force_no_charge, PolicyKind};
use crate::env::{EnvConfig, UavEnv};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeRecord, EpisodeStats};
use crate::nn::Mat;
use crate::rl::buffer::{ReplayBuffer, Transition};
use crate::rl::td3::{Td3Agent, TrainerConfig};
use crate::seeding::{derive_seed, episode_seed, EVAL_STREAM};

#[derive(Debug)]
pub struct TrainOutput {
    pub agent: Td3Agent,
    pub metrics: Vec<EpisodeRecord>,
    /// Digest of every sampled replay index, in order.
    pub batch_digest: u64,
}

fn fold_digest(digest: u64, value: u64) -> u64 {
    // FNV-1a over the 8 bytes of `value`
    let mut h = digest;
    for b in value.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn fault(step: u64, e: Error) -> Error {
    match e {
        Error::TrainingFault { reason, .. } => Error::TrainingFault { step, reason },
        other => other,
    }
}

/// Trains a learned policy kind. Every finished episode is passed to `sink`
/// before training continues, so a fault leaves all completed episodes
/// recorded.
pub fn train(
    env_config: &EnvConfig,
    policy: PolicyKind,
    config: &TrainerConfig,
    sink: &mut dyn FnMut(&EpisodeRecord) -> Result<()>,
) -> Result<TrainOutput> {
    let actor_kind = policy
        .actor_kind()
        .ok_or_else(|| Error::Usage(format!("policy kind `{policy}` has nothing to train")))?;
    env_config.validate()?;
    config.validate()?;

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (obs_dim, act_dim) = (env_config.obs_dim(), env_config.action_dim());
    let mut agent = Td3Agent::new(actor_kind, obs_dim, act_dim, config, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, obs_dim, act_dim);
    let explore = Normal::new(0.0, config.explore_noise_std).expect("validated std");

    let mut metrics = Vec::new();
    let mut digest = 0xcbf2_9ce4_8422_2325u64;
    if config.total_env_steps == 0 {
        return Ok(TrainOutput {
            agent,
            metrics,
            batch_digest: digest,
        });
    }

    let mut episode = 0u64;
    let (mut env, mut obs) = UavEnv::new(env_config.clone(), episode_seed(env_config.seed, config.seed, episode))?;
    let mut stats = EpisodeStats::default();

    for t in 0..config.total_env_steps {
        let mut action: Vec<f64> = if t < config.warmup_steps {
            (0..act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
        } else {
            let m = Mat::from_vec(1, obs_dim, obs.clone());
            let mut a = agent.actor.act(&m, &mut rng).data;
            if config.explore_noise_std > 0.0 {
                for v in a.iter_mut() {
                    *v = (*v + explore.sample(&mut rng)).clamp(-1.0, 1.0);
                }
            }
            a
        };
        if policy.no_charge() {
            force_no_charge(&mut action);
        }
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingFault {
                step: t,
                reason: "actor produced a non-finite action".into(),
            });
        }
        let out = env.step_raw(&action)?;
        stats.record_step(&out);
        // Episodes end on a time limit only, so the transition bootstraps.
        buffer.push(&Transition {
            observation: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_observation: out.observation.clone(),
            done: false,
        })?;

        if t >= config.warmup_steps && buffer.len() >= config.batch_size {
            let idx = buffer.sample_indices(&mut rng, config.batch_size);
            for &i in &idx {
                digest = fold_digest(digest, i as u64);
            }
            let batch = buffer.gather(&idx);
            let losses = agent.update(&batch, &mut rng).map_err(|e| fault(t, e))?;
            stats.record_critic_loss(losses.critic);
            if let Some(a) = losses.actor {
                stats.record_actor_loss(a);
            }
        }

        if out.done {
            let mut record = stats.finish(policy, config.seed, episode, t + 1);
            if config.eval_interval > 0 && (episode + 1).is_multiple_of(config.eval_interval) {
                record.eval_avg_aoi = Some(greedy_episode(env_config, policy, &agent, config.seed, episode)?);
            }
            record.wall_clock_s = started.elapsed().as_secs_f64();
            if !record.is_finite() {
                return Err(Error::TrainingFault {
                    step: t,
                    reason: format!("non-finite metrics in episode {episode}"),
                });
            }
            sink(&record)?;
            metrics.push(record);
            episode += 1;
            stats = EpisodeStats::default();
            obs = env.reset(episode_seed(env_config.seed, config.seed, episode))?;
        } else {
            obs = out.observation;
        }
    }

    Ok(TrainOutput {
        agent,
        metrics,
        batch_digest: digest,
    })
}

/// One noise-free episode on a dedicated evaluation seed stream.
fn greedy_episode(
    env_config: &EnvConfig,
    policy: PolicyKind,
    agent: &Td3Agent,
    run_seed: u64,
    episode: u64,
) -> Result<f64> {
    let eval_seed = derive_seed(run_seed ^ EVAL_STREAM, episode);
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let (mut env, mut obs) = UavEnv::new(env_config.clone(), eval_seed)?;
    let mut stats = EpisodeStats::default();
    loop {
        let m = Mat::from_vec(1, obs.len(), obs);
        let mut action = agent.actor.act(&m, &mut rng).data;
        if policy.no_charge() {
            force_no_charge(&mut action);
        }
        let out = env.step_raw(&action)?;
        stats.record_step(&out);
        if out.done {
            return Ok(stats.episode_avg_aoi());
        }
        obs = out.observation;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (EnvConfig, TrainerConfig) {
        let env = EnvConfig {
            num_devices: 2,
            episode_slots: 20,
            ..EnvConfig::default()
        };
        let cfg = TrainerConfig {
            batch_size: 16,
            buffer_capacity: 1000,
            hidden_units: 16,
            total_env_steps: 100,
            warmup_steps: 30,
            seed: 5,
            ..TrainerConfig::default()
        };
        (env, cfg)
    }

    #[test]
    fn zero_steps_returns_initial_weights() {
        let (env, cfg) = small();
        let cfg = TrainerConfig {
            total_env_steps: 0,
            ..cfg
        };
        let out = train(&env, PolicyKind::Td3, &cfg, &mut |_| Ok(())).unwrap();
        assert!(out.metrics.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fresh = Td3Agent::new(crate::rl::ActorKind::Mlp, 10, 5, &cfg, &mut rng).unwrap();
        assert_eq!(out.agent.actor, fresh.actor);
        assert_eq!(out.agent.critics.nets, fresh.critics.nets);
    }

    #[test]
    fn seeded_runs_repeat() {
        let (env, cfg) = small();
        for kind in [PolicyKind::Td3, PolicyKind::Dtd3] {
            let a = train(&env, kind, &cfg, &mut |_| Ok(())).unwrap();
            let b = train(&env, kind, &cfg, &mut |_| Ok(())).unwrap();
            let strip = |m: &[EpisodeRecord]| {
                m.iter()
                    .map(|r| EpisodeRecord {
                        wall_clock_s: 0.0,
                        ..r.clone()
                    })
                    .collect::<Vec<_>>()
            };
            assert_eq!(strip(&a.metrics), strip(&b.metrics));
            assert_eq!(a.batch_digest, b.batch_digest);
            assert_eq!(a.agent.actor, b.agent.actor);
            assert_eq!(a.metrics.len(), 5);
            let c = train(&env, kind, &TrainerConfig { seed: 6, ..cfg.clone() }, &mut |_| Ok(())).unwrap();
            assert_ne!(a.batch_digest, c.batch_digest);
        }
    }

    #[test]
    fn delayed_update_count_is_exact() {
        let (env, cfg) = small();
        let cfg = TrainerConfig { policy_delay: 3, ..cfg };
        let out = train(&env, PolicyKind::Td3, &cfg, &mut |_| Ok(())).unwrap();
        assert_eq!(out.agent.critic_updates, 70);
        assert_eq!(out.agent.actor_updates, 70 / 3);
    }

    #[test]
    fn baselines_cannot_be_trained() {
        let (env, cfg) = small();
        assert!(matches!(
            train(&env, PolicyKind::GreedyMaxAoi, &cfg, &mut |_| Ok(())),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn records_stream_to_sink_in_order() {
        let (env, cfg) = small();
        let cfg = TrainerConfig {
            eval_interval: 2,
            ..cfg
        };
        let mut seen = Vec::new();
        let out = train(&env, PolicyKind::NoChargeTd3, &cfg, &mut |r| {
            seen.push(r.episode);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert!(out.metrics[1].eval_avg_aoi.is_some());
        assert!(out.metrics[0].eval_avg_aoi.is_none());
        assert!(out.metrics.iter().all(|r| r.is_finite()));
        assert_eq!(out.metrics.last().unwrap().env_steps, 100);
    }
}
