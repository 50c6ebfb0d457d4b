//! Oracles and checks shared by the integration tests and the acceptance
//! binary. Each check returns a description of the first violation.
#![allow(dead_code)]

use aoi_core::diffusion::{
    denoise_step, forward_noise, make_schedule, Denoiser, DiffusionActor, DiffusionSchedule, NoisePredictor,
};
use aoi_core::env::{EnvConfig, EnvState, SlotAction, UavEnv};
use aoi_core::nn::{polyak, Activation, Adam, Mat, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<String, String>;

// ---------------------------------------------------------------------------
// Environment

/// Steps `steps` random slots (components drawn from [-1.5, 1.5] so clamping
/// is exercised) and checks every per-step invariant.
pub fn env_invariant_walk(config: &EnvConfig, seed: u64, steps: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.num_devices;
    let (mut env, _) = UavEnv::new(config.clone(), seed).map_err(|e| e.to_string())?;
    let cap = config.battery_capacity_j;
    let clip = config.aoi_clip;
    let max_move = config.uav_vmax_mps * config.slot_duration_s;
    let mut episodes = 0;
    for t in 0..steps {
        let raw: Vec<f64> = (0..n + 3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let action = SlotAction::from_slice(&raw, n).unwrap();
        let clamped = action.clamped();
        if clamped.clamped() != clamped {
            return Err(format!("step {t}: clamp is not idempotent"));
        }
        let before = env.state().clone();
        let mut twin = env.clone();
        let out = env.step(&action).map_err(|e| e.to_string())?;
        let twin_out = twin.step(&clamped).map_err(|e| e.to_string())?;
        if twin_out != out || twin.state() != env.state() {
            return Err(format!("step {t}: raw and clamped actions diverge"));
        }
        let after = env.state();

        for i in 0..n {
            let spent = if i == out.info.scheduled_device {
                out.info.energy_spent_j
            } else {
                0.0
            };
            let capped = (before.energy_j[i] + out.info.harvested_j[i]).min(cap);
            let expect = (capped - spent).max(0.0);
            if out.info.harvested_j[i] < 0.0 || spent > capped + 1e-18 {
                return Err(format!("step {t}: device {i} spent more than it held"));
            }
            if (after.energy_j[i] - expect).abs() > 1e-18 || !(0.0..=cap).contains(&after.energy_j[i]) {
                return Err(format!(
                    "step {t}: device {i} energy {} but conservation gives {expect}",
                    after.energy_j[i]
                ));
            }
            let reset = out.info.upload_success && i == out.info.scheduled_device;
            let want = if reset { 1 } else { before.aoi[i] + 1 };
            if after.aoi[i] != want {
                return Err(format!(
                    "step {t}: device {i} AoI {} -> {}",
                    before.aoi[i], after.aoi[i]
                ));
            }
        }
        let mean_clipped = after.aoi.iter().map(|&a| a.min(clip)).sum::<u64>() as f64 / n as f64;
        if out.reward != -mean_clipped / clip as f64 || !(-1.0..=-1.0 / clip as f64).contains(&out.reward) {
            return Err(format!("step {t}: reward {} out of bounds", out.reward));
        }
        for axis in 0..2 {
            let p = after.uav_xy[axis];
            if !(0.0..=config.area_side_m).contains(&p) || (p - before.uav_xy[axis]).abs() > max_move + 1e-9 {
                return Err(format!("step {t}: UAV left the area or moved too far"));
            }
        }
        if out.observation.len() != 2 + 4 * n || out.observation.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(format!("step {t}: observation outside [-1, 1]"));
        }
        if out.done {
            episodes += 1;
            env.reset(seed.wrapping_add(episodes)).map_err(|e| e.to_string())?;
        }
    }
    Ok(format!("{steps} steps over {episodes} episodes"))
}

/// Discretized 2-device instance for the exhaustive oracle: UAV hovers over
/// device 0, device 1 is 30 m off; both buffers start just short of what an
/// upload needs.
pub fn oracle_instance() -> (EnvConfig, EnvState) {
    let config = EnvConfig {
        num_devices: 2,
        episode_slots: 3,
        ..EnvConfig::default()
    };
    let state = EnvState {
        slot_index: 0,
        uav_xy: [50.0, 50.0],
        device_xy: vec![[50.0, 50.0], [80.0, 50.0]],
        energy_j: vec![3.5e-4, 1.98e-4],
        aoi: vec![1, 1],
    };
    (config, state)
}

/// Slot actions of the discretized instance: device in {0, 1}, tau in
/// {0, 0.5, 1}, UAV frozen.
pub fn oracle_actions() -> Vec<(usize, f64)> {
    let mut v = Vec::new();
    for dev in 0..2 {
        for tau in [0.0, 0.5, 1.0] {
            v.push((dev, tau));
        }
    }
    v
}

pub fn oracle_slot_action((dev, tau): (usize, f64)) -> SlotAction {
    let mut sched_scores = vec![-1.0; 2];
    sched_scores[dev] = 1.0;
    SlotAction {
        vel: [0.0, 0.0],
        sched_scores,
        tau_raw: 2.0 * tau - 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSlot {
    pub energy: Vec<f64>,
    pub aoi: Vec<u64>,
    pub success: bool,
    pub reward: f64,
}

/// Independent re-statement of the slot physics for a hovering UAV.
pub fn oracle_trajectory(config: &EnvConfig, start: &EnvState, seq: &[(usize, f64)]) -> Vec<OracleSlot> {
    let mut energy = start.energy_j.clone();
    let mut aoi = start.aoi.clone();
    let h2 = config.uav_altitude_m.powi(2);
    let gains: Vec<f64> = start
        .device_xy
        .iter()
        .map(|d| {
            let r2 = (d[0] - start.uav_xy[0]).powi(2) + (d[1] - start.uav_xy[1]).powi(2);
            config.channel_ref_gain / (h2 + r2)
        })
        .collect();
    let mut out = Vec::new();
    for &(dev, tau) in seq {
        for (e, g) in energy.iter_mut().zip(&gains) {
            let harvested = config.harvest_efficiency * config.wpt_tx_power_w * g * tau * config.slot_duration_s;
            *e = (*e + harvested).min(config.battery_capacity_j);
        }
        let uplink_s = (1.0 - tau) * config.slot_duration_s;
        let need = config.uplink_tx_power_w * uplink_s;
        let snr = config.uplink_tx_power_w * gains[dev] / config.noise_power_w;
        let capacity_bits = config.bandwidth_hz * uplink_s * (1.0 + snr).log2();
        let success = uplink_s > 0.0 && energy[dev] >= need && capacity_bits >= config.packet_bits;
        if success {
            energy[dev] = (energy[dev] - need).max(0.0);
        }
        for (i, a) in aoi.iter_mut().enumerate() {
            *a = if success && i == dev { 1 } else { *a + 1 };
        }
        let clip = config.aoi_clip;
        let reward = -(aoi.iter().map(|&a| a.min(clip)).sum::<u64>() as f64 / aoi.len() as f64) / clip as f64;
        out.push(OracleSlot {
            energy: energy.clone(),
            aoi: aoi.clone(),
            success,
            reward,
        });
    }
    out
}

/// Compares the environment against the oracle on all 6^3 sequences and
/// checks that the oracle's best sequence is optimal for the environment too.
pub fn brute_force_oracle() -> Check {
    let (config, start) = oracle_instance();
    let acts = oracle_actions();
    let mut best: Option<(u64, Vec<(usize, f64)>)> = None;
    let mut env_totals = Vec::new();
    let mut successes = 0;
    for a in &acts {
        for b in &acts {
            for c in &acts {
                let seq = vec![*a, *b, *c];
                let oracle = oracle_trajectory(&config, &start, &seq);
                let mut env = UavEnv::from_state(config.clone(), start.clone()).map_err(|e| e.to_string())?;
                let mut total = 0u64;
                for (t, (&act, want)) in seq.iter().zip(&oracle).enumerate() {
                    let out = env.step(&oracle_slot_action(act)).map_err(|e| e.to_string())?;
                    let got = OracleSlot {
                        energy: env.state().energy_j.clone(),
                        aoi: env.state().aoi.clone(),
                        success: out.info.upload_success,
                        reward: out.reward,
                    };
                    if &got != want {
                        return Err(format!("sequence {seq:?} slot {t}: env {got:?} oracle {want:?}"));
                    }
                    successes += got.success as u64;
                    total += got.aoi.iter().sum::<u64>();
                }
                let oracle_total: u64 = oracle.iter().map(|s| s.aoi.iter().sum::<u64>()).sum();
                if best.as_ref().is_none_or(|(b, _)| oracle_total < *b) {
                    best = Some((oracle_total, seq.clone()));
                }
                env_totals.push(total);
            }
        }
    }
    let (best_total, best_seq) = best.expect("non-empty");
    if env_totals.len() != 216 {
        return Err(format!("enumerated {} sequences", env_totals.len()));
    }
    if env_totals.iter().any(|&t| t < best_total) {
        return Err("a sequence beats the oracle optimum".into());
    }
    if successes == 0 {
        return Err("instance never uploads; the comparison is vacuous".into());
    }
    Ok(format!(
        "216 sequences match; optimum {best_seq:?} with total AoI {best_total}"
    ))
}

// ---------------------------------------------------------------------------
// Diffusion

pub fn small_actor(seed: u64, obs_dim: usize, act_dim: usize, hidden: usize) -> DiffusionActor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DiffusionActor::new(
        Denoiser::with_hidden(act_dim, obs_dim, &[hidden, hidden], &mut rng),
        make_schedule(5, 1e-4, 0.2).unwrap(),
    )
}

fn chain_loss(actor: &DiffusionActor, obs: &Mat, w: &[f64], noise_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let a = actor.sample_batch(obs, &mut rng);
    a.data.iter().zip(w).map(|(x, y)| x * y).sum()
}

/// Relative L2 error between the analytic gradient through the whole K = 5
/// chain and central finite differences, over every denoiser weight.
pub fn diffusion_fd_gradient(seed: u64) -> Result<f64, String> {
    let (obs_dim, act_dim, batch) = (6, 3, 4);
    let mut actor = small_actor(seed, obs_dim, act_dim, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let obs = Mat::from_vec(
        batch,
        obs_dim,
        (0..batch * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let w: Vec<f64> = (0..batch * act_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise_seed = seed.wrapping_mul(31).wrapping_add(7);

    let mut tape_rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let tape = actor.sample_batch_taped(&obs, &mut tape_rng);
    let grad_out = Mat::from_vec(batch, act_dim, w.clone());
    let mut analytic = vec![0.0; actor.denoiser.net().params().len()];
    actor.backward(&tape, &grad_out, &mut analytic);

    let h = 1e-6;
    let mut numeric = vec![0.0; analytic.len()];
    for (i, g) in numeric.iter_mut().enumerate() {
        let orig = actor.denoiser.net().params()[i];
        actor.denoiser.net_mut().params_mut()[i] = orig + h;
        let up = chain_loss(&actor, &obs, &w, noise_seed);
        actor.denoiser.net_mut().params_mut()[i] = orig - h;
        let down = chain_loss(&actor, &obs, &w, noise_seed);
        actor.denoiser.net_mut().params_mut()[i] = orig;
        *g = (up - down) / (2.0 * h);
    }
    let diff: f64 = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err("gradient vanished".into());
    }
    Ok(diff / norm)
}

/// Predicts the exact noise that separates `a_k` from a known clean action.
pub struct OraclePredictor<'a> {
    pub clean: &'a Mat,
    pub schedule: &'a DiffusionSchedule,
}

impl NoisePredictor for OraclePredictor<'_> {
    fn predict(&self, a_k: &Mat, k: usize, _obs: &Mat) -> Mat {
        let ab = self.schedule.alpha_bar(k);
        let data = a_k
            .data
            .iter()
            .zip(&self.clean.data)
            .map(|(x, c)| (x - ab.sqrt() * c) / (1.0 - ab).sqrt())
            .collect();
        Mat::from_vec(a_k.rows, a_k.cols, data)
    }
}

/// Noises a clean action to step K, runs the reverse chain with the oracle
/// predictor, and returns the L-infinity reconstruction error.
pub fn oracle_round_trip(seed: u64, schedule: &DiffusionSchedule) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 7;
    let clean = Mat::from_vec(1, d, (0..d).map(|_| rng.random_range(-2.0..2.0)).collect());
    let noise: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let k = schedule.steps();
    let mut a = Mat::from_vec(1, d, forward_noise(&clean.data, k, schedule, &noise));
    let obs = Mat::zeros(1, 1);
    let oracle = OraclePredictor {
        clean: &clean,
        schedule,
    };
    for step in (1..=k).rev() {
        a = denoise_step(&a, step, &obs, &oracle, schedule, &mut rng);
    }
    a.data
        .iter()
        .zip(&clean.data)
        .map(|(x, c)| (x - c).abs())
        .fold(0.0, f64::max)
}

pub const CONVERGENCE_PEAK: [f64; 3] = [0.3, -0.2, 0.1];

#[derive(Debug, Clone)]
pub struct Convergence {
    /// First checked update at which the mean sampled action was within
    /// tolerance of the peak.
    pub first_within: Option<usize>,
    /// L-infinity distance of the mean sampled action after the last update.
    pub final_distance: f64,
}

/// Trains a diffusion actor (hidden width 128, Adam at `lr`) on one fixed
/// state against the concave critic `Q(a) = -|a - peak|^2`. Every 10 updates
/// the mean of 4096 sampled actions is compared with the peak.
pub fn single_state_convergence(seed: u64, updates: usize, tol: f64, lr: f64, output: Activation) -> Convergence {
    let (obs_dim, act_dim, batch, probe) = (4, 3, 64, 4096);
    let peak = CONVERGENCE_PEAK;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut actor = DiffusionActor::new(
        Denoiser::with_output(act_dim, obs_dim, &[128, 128], output, &mut rng),
        make_schedule(5, 1e-4, 0.2).unwrap(),
    );
    let state = [0.2, -0.4, 0.9, 0.0];
    let repeat = |n: usize| Mat::from_vec(n, obs_dim, state.iter().cycle().take(n * obs_dim).copied().collect());
    let (obs, probe_obs) = (repeat(batch), repeat(probe));
    let mut opt = Adam::new(actor.denoiser.net().params().len(), lr);
    let distance = |actor: &DiffusionActor, rng: &mut ChaCha8Rng| {
        let a = actor.sample_batch(&probe_obs, rng);
        (0..act_dim)
            .map(|c| {
                let mean = (0..probe).map(|r| a.row(r)[c]).sum::<f64>() / probe as f64;
                (mean - peak[c]).abs()
            })
            .fold(0.0, f64::max)
    };
    let mut first_within = None;
    let mut last = f64::INFINITY;
    for update in 1..=updates {
        let tape = actor.sample_batch_taped(&obs, &mut rng);
        let action = tape.action();
        // loss = mean over the batch of |a - peak|^2
        let grad = Mat::from_vec(
            batch,
            act_dim,
            (0..batch * act_dim)
                .map(|i| 2.0 * (action.data[i] - peak[i % act_dim]) / batch as f64)
                .collect(),
        );
        let mut g = vec![0.0; actor.denoiser.net().params().len()];
        actor.backward(&tape, &grad, &mut g);
        opt.step(actor.denoiser.net_mut().params_mut(), &g);
        if update % 10 == 0 || update == updates {
            last = distance(&actor, &mut rng);
            if last <= tol && first_within.is_none() {
                first_within = Some(update);
            }
        }
    }
    Convergence {
        first_within,
        final_distance: last,
    }
}

// ---------------------------------------------------------------------------
// TD3

/// Replays `steps` random online-weight updates with Polyak averaging and
/// compares against the closed form
/// `target_T = (1-rho)^T target_0 + sum_t rho (1-rho)^(T-t) online_t`.
pub fn soft_update_recurrence(seed: u64, steps: usize, rho: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&[3, 4, 2], Activation::Mish, Activation::Tanh, &mut rng);
    let mut target = net.params().to_vec();
    let target0 = target.clone();
    let mut history = Vec::new();
    let mut online = net.params().to_vec();
    for _ in 0..steps {
        for p in online.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        polyak(&mut target, &online, rho);
        history.push(online.clone());
    }
    let t = steps as i32;
    let mut worst: f64 = 0.0;
    for j in 0..target.len() {
        let mut closed = (1.0 - rho).powi(t) * target0[j];
        for (s, h) in history.iter().enumerate() {
            closed += rho * (1.0 - rho).powi(t - 1 - s as i32) * h[j];
        }
        worst = worst.max((closed - target[j]).abs());
    }
    worst
}
