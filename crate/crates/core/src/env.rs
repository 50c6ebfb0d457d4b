//! Discrete-time model of a UAV that charges energy-buffered IoT devices by
//! RF broadcast and collects one device's update per slot.
//!
//! Each slot is split by the charging fraction `tau`: the first `tau * dt`
//! seconds the UAV broadcasts energy to every device, the remaining
//! `(1 - tau) * dt` seconds carry the uplink of the single scheduled device.
//! Age of information is counted in slots and resets to 1 on a delivery.
//!
//! # Observation layout
//!
//! For `N` devices the observation has `2 + 4N` entries, all in `[-1, 1]`:
//!
//! | range            | content                                          |
//! |------------------|--------------------------------------------------|
//! | `0..2`           | UAV `(x, y)`, `2 * pos / area_side - 1`          |
//! | `2..2+2N`        | device `(x, y)` pairs, same scaling              |
//! | `2+2N..2+3N`     | stored energy / battery capacity, in `[0, 1]`    |
//! | `2+3N..2+4N`     | `min(aoi, aoi_clip) / aoi_clip`, in `(0, 1]`     |
//!
//! # Action layout
//!
//! `N + 3` entries in `[-1, 1]`: UAV velocity `(vx, vy)` as a fraction of
//! `uav_vmax_mps`, one scheduling score per device (argmax uploads, ties go to
//! the lowest index), and `tau_raw` with `tau = (tau_raw + 1) / 2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A co-located device must recover one full-slot upload within this many
/// fully charging slots.
pub const FEASIBILITY_SLOTS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub num_devices: usize,
    pub area_side_m: f64,
    pub uav_altitude_m: f64,
    pub slot_duration_s: f64,
    pub episode_slots: usize,
    pub uav_vmax_mps: f64,
    /// Channel power gain at 1 m.
    pub channel_ref_gain: f64,
    pub noise_power_w: f64,
    pub bandwidth_hz: f64,
    pub wpt_tx_power_w: f64,
    pub harvest_efficiency: f64,
    pub uplink_tx_power_w: f64,
    pub packet_bits: f64,
    pub battery_capacity_j: f64,
    pub initial_energy_j: f64,
    pub aoi_clip: u64,
    pub seed: u64,
    /// When set, a failed upload still drains the uplink energy (up to what
    /// the device holds). Off by default: devices abstain when they cannot
    /// complete a transfer.
    #[serde(default)]
    pub charge_failed_uploads: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_devices: 5,
            area_side_m: 100.0,
            uav_altitude_m: 10.0,
            slot_duration_s: 1.0,
            episode_slots: 200,
            uav_vmax_mps: 20.0,
            channel_ref_gain: 1e-3,
            noise_power_w: 1e-12,
            bandwidth_hz: 1e6,
            wpt_tx_power_w: 10.0,
            harvest_efficiency: 0.8,
            uplink_tx_power_w: 4e-4,
            packet_bits: 2e6,
            battery_capacity_j: 2e-3,
            initial_energy_j: 4e-4,
            aoi_clip: 50,
            seed: 0,
            charge_failed_uploads: false,
        }
    }
}

impl EnvConfig {
    pub fn obs_dim(&self) -> usize {
        obs_dim(self.num_devices)
    }

    pub fn action_dim(&self) -> usize {
        action_dim(self.num_devices)
    }

    /// Checks every bound, including charge-to-upload feasibility.
    pub fn validate(&self) -> Result<()> {
        if self.num_devices == 0 {
            return Err(Error::config("num_devices", "must be at least 1"));
        }
        if self.episode_slots == 0 {
            return Err(Error::config("episode_slots", "must be at least 1"));
        }
        if self.aoi_clip == 0 {
            return Err(Error::config("aoi_clip", "must be at least 1"));
        }
        let positive = [
            ("area_side_m", self.area_side_m),
            ("uav_altitude_m", self.uav_altitude_m),
            ("slot_duration_s", self.slot_duration_s),
            ("uav_vmax_mps", self.uav_vmax_mps),
            ("channel_ref_gain", self.channel_ref_gain),
            ("noise_power_w", self.noise_power_w),
            ("bandwidth_hz", self.bandwidth_hz),
            ("wpt_tx_power_w", self.wpt_tx_power_w),
            ("harvest_efficiency", self.harvest_efficiency),
            ("uplink_tx_power_w", self.uplink_tx_power_w),
            ("packet_bits", self.packet_bits),
            ("battery_capacity_j", self.battery_capacity_j),
            ("initial_energy_j", self.initial_energy_j),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.harvest_efficiency > 1.0 {
            return Err(Error::config(
                "harvest_efficiency",
                format!("must be <= 1, got {}", self.harvest_efficiency),
            ));
        }
        if self.initial_energy_j > self.battery_capacity_j {
            return Err(Error::config(
                "initial_energy_j",
                format!(
                    "exceeds battery_capacity_j ({} > {})",
                    self.initial_energy_j, self.battery_capacity_j
                ),
            ));
        }
        let cost = self.full_slot_upload_cost_j();
        if self.battery_capacity_j < cost {
            return Err(Error::config(
                "battery_capacity_j",
                format!("cannot hold one full-slot upload ({cost} J)"),
            ));
        }
        let recharge = FEASIBILITY_SLOTS * self.colocated_harvest_per_slot_j();
        if recharge < cost {
            return Err(Error::config(
                "charge_to_upload_feasibility",
                format!(
                    "a co-located device harvests {recharge:.3e} J in {FEASIBILITY_SLOTS} full \
                     charging slots, less than one upload ({cost:.3e} J)"
                ),
            ));
        }
        let bits = self.bandwidth_hz * self.slot_duration_s * self.colocated_spectral_efficiency();
        if bits < self.packet_bits {
            return Err(Error::config(
                "packet_bits",
                format!("a co-located full-slot uplink carries only {bits:.3e} bits"),
            ));
        }
        Ok(())
    }

    /// Energy of an uplink that uses the whole slot (`tau = 0`).
    pub fn full_slot_upload_cost_j(&self) -> f64 {
        self.uplink_tx_power_w * self.slot_duration_s
    }

    /// Harvest of a device directly below the UAV over one `tau = 1` slot.
    pub fn colocated_harvest_per_slot_j(&self) -> f64 {
        let gain = channel_gain([0.0, 0.0], self.uav_altitude_m, [0.0, 0.0], self.channel_ref_gain);
        harvest_amount(
            gain,
            self.wpt_tx_power_w,
            1.0,
            self.slot_duration_s,
            self.harvest_efficiency,
        )
    }

    fn colocated_spectral_efficiency(&self) -> f64 {
        let gain = channel_gain([0.0, 0.0], self.uav_altitude_m, [0.0, 0.0], self.channel_ref_gain);
        (1.0 + self.uplink_tx_power_w * gain / self.noise_power_w).log2()
    }

    /// Smallest energy any successful upload can cost: the shortest window
    /// that carries a packet at the best (co-located) channel.
    pub fn min_upload_cost_j(&self) -> f64 {
        let window = self.packet_bits / (self.bandwidth_hz * self.colocated_spectral_efficiency());
        self.uplink_tx_power_w * window
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("EnvConfig serializes to TOML")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: EnvConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<env config>".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn obs_dim(num_devices: usize) -> usize {
    2 + 4 * num_devices
}

pub fn action_dim(num_devices: usize) -> usize {
    num_devices + 3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub slot_index: usize,
    pub uav_xy: [f64; 2],
    pub device_xy: Vec<[f64; 2]>,
    pub energy_j: Vec<f64>,
    pub aoi: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotAction {
    pub vel: [f64; 2],
    pub sched_scores: Vec<f64>,
    pub tau_raw: f64,
}

impl SlotAction {
    /// Splits a flat `N + 3` vector into its parts.
    pub fn from_slice(raw: &[f64], num_devices: usize) -> Result<Self> {
        if raw.len() != action_dim(num_devices) {
            return Err(Error::Usage(format!(
                "action has {} components, expected {}",
                raw.len(),
                action_dim(num_devices)
            )));
        }
        Ok(Self {
            vel: [raw[0], raw[1]],
            sched_scores: raw[2..2 + num_devices].to_vec(),
            tau_raw: raw[2 + num_devices],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.sched_scores.len() + 3);
        v.extend_from_slice(&self.vel);
        v.extend_from_slice(&self.sched_scores);
        v.push(self.tau_raw);
        v
    }

    pub fn clamped(&self) -> Self {
        let c = |x: f64| x.clamp(-1.0, 1.0);
        Self {
            vel: [c(self.vel[0]), c(self.vel[1])],
            sched_scores: self.sched_scores.iter().map(|&s| c(s)).collect(),
            tau_raw: c(self.tau_raw),
        }
    }

    fn is_finite(&self) -> bool {
        self.vel.iter().all(|v| v.is_finite())
            && self.sched_scores.iter().all(|v| v.is_finite())
            && self.tau_raw.is_finite()
    }

    /// Charging fraction of the (clamped) action.
    pub fn tau(&self) -> f64 {
        (self.tau_raw.clamp(-1.0, 1.0) + 1.0) / 2.0
    }

    /// Argmax of the clamped scores; ties go to the lowest index.
    pub fn scheduled_device(&self) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, &s) in self.sched_scores.iter().enumerate() {
            let s = s.clamp(-1.0, 1.0);
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub scheduled_device: usize,
    pub upload_success: bool,
    /// Energy harvested this slot before the capacity cap.
    pub harvested_j: Vec<f64>,
    pub energy_spent_j: f64,
    /// Mean of the raw (unclipped) AoI after the update.
    pub mean_aoi: f64,
    /// Mean of `min(aoi, aoi_clip)` after the update.
    pub mean_clipped_aoi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Free-space line-of-sight gain `ref_gain / (h^2 + d^2)`.
pub fn channel_gain(uav_xy: [f64; 2], altitude: f64, device_xy: [f64; 2], ref_gain: f64) -> f64 {
    let dx = uav_xy[0] - device_xy[0];
    let dy = uav_xy[1] - device_xy[1];
    ref_gain / (altitude * altitude + dx * dx + dy * dy)
}

/// Linear RF harvesting over the charging part of a slot.
pub fn harvest_amount(gain: f64, wpt_tx_power_w: f64, tau: f64, slot_duration_s: f64, efficiency: f64) -> f64 {
    efficiency * wpt_tx_power_w * gain * tau * slot_duration_s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UploadAttempt {
    pub success: bool,
    pub energy_spent_j: f64,
}

/// Whether `device` can deliver one packet in the uplink part of the slot,
/// given its current energy and the UAV's current position.
pub fn upload_attempt(state: &EnvState, device: usize, tau: f64, config: &EnvConfig) -> UploadAttempt {
    let window = (1.0 - tau) * config.slot_duration_s;
    if window <= 0.0 {
        return UploadAttempt {
            success: false,
            energy_spent_j: 0.0,
        };
    }
    let gain = channel_gain(
        state.uav_xy,
        config.uav_altitude_m,
        state.device_xy[device],
        config.channel_ref_gain,
    );
    let required = config.uplink_tx_power_w * window;
    let snr = config.uplink_tx_power_w * gain / config.noise_power_w;
    let bits = config.bandwidth_hz * window * (1.0 + snr).log2();
    let energy = state.energy_j[device];
    if energy >= required && bits >= config.packet_bits {
        UploadAttempt {
            success: true,
            energy_spent_j: required,
        }
    } else {
        let spent = if config.charge_failed_uploads {
            required.min(energy)
        } else {
            0.0
        };
        UploadAttempt {
            success: false,
            energy_spent_j: spent,
        }
    }
}

/// Starts an episode: devices uniform over the area, UAV at the centre,
/// buffers at `initial_energy_j`, every AoI at 1.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<(EnvState, Vec<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = config.area_side_m;
    let device_xy = (0..config.num_devices)
        .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)])
        .collect();
    let state = EnvState {
        slot_index: 0,
        uav_xy: [side / 2.0, side / 2.0],
        device_xy,
        energy_j: vec![config.initial_energy_j; config.num_devices],
        aoi: vec![1; config.num_devices],
    };
    let obs = observe(&state, config);
    Ok((state, obs))
}

/// Advances one slot. See the module docs for the slot structure.
pub fn step(state: &mut EnvState, action: &SlotAction, config: &EnvConfig) -> Result<StepOutcome> {
    let n = config.num_devices;
    if state.slot_index >= config.episode_slots {
        return Err(Error::Usage(format!(
            "episode finished after {} slots; call reset",
            config.episode_slots
        )));
    }
    if action.sched_scores.len() != n {
        return Err(Error::Usage(format!(
            "action schedules {} devices, environment has {n}",
            action.sched_scores.len()
        )));
    }
    if !action.is_finite() {
        return Err(Error::Usage("action contains non-finite components".into()));
    }
    let action = action.clamped();
    let dt = config.slot_duration_s;
    let side = config.area_side_m;

    for (axis, v) in action.vel.iter().enumerate() {
        state.uav_xy[axis] = (state.uav_xy[axis] + v * config.uav_vmax_mps * dt).clamp(0.0, side);
    }

    let tau = action.tau();
    let mut harvested_j = Vec::with_capacity(n);
    for i in 0..n {
        let gain = channel_gain(
            state.uav_xy,
            config.uav_altitude_m,
            state.device_xy[i],
            config.channel_ref_gain,
        );
        let h = harvest_amount(gain, config.wpt_tx_power_w, tau, dt, config.harvest_efficiency);
        harvested_j.push(h);
        state.energy_j[i] = (state.energy_j[i] + h).min(config.battery_capacity_j);
    }

    let scheduled = action.scheduled_device();
    let attempt = upload_attempt(state, scheduled, tau, config);
    state.energy_j[scheduled] = (state.energy_j[scheduled] - attempt.energy_spent_j).max(0.0);

    for (i, a) in state.aoi.iter_mut().enumerate() {
        if attempt.success && i == scheduled {
            *a = 1;
        } else {
            *a += 1;
        }
    }

    let clip = config.aoi_clip;
    let clipped_sum: u64 = state.aoi.iter().map(|&a| a.min(clip)).sum();
    let mean_clipped_aoi = clipped_sum as f64 / n as f64;
    let reward = -mean_clipped_aoi / clip as f64;
    let mean_aoi = state.aoi.iter().sum::<u64>() as f64 / n as f64;

    state.slot_index += 1;
    Ok(StepOutcome {
        observation: observe(state, config),
        reward,
        done: state.slot_index == config.episode_slots,
        info: StepInfo {
            scheduled_device: scheduled,
            upload_success: attempt.success,
            harvested_j,
            energy_spent_j: attempt.energy_spent_j,
            mean_aoi,
            mean_clipped_aoi,
        },
    })
}

/// Flat normalized observation; layout in the module docs.
pub fn observe(state: &EnvState, config: &EnvConfig) -> Vec<f64> {
    let side = config.area_side_m;
    let pos = |x: f64| 2.0 * x / side - 1.0;
    let mut obs = Vec::with_capacity(obs_dim(config.num_devices));
    obs.extend(state.uav_xy.iter().map(|&x| pos(x)));
    for xy in &state.device_xy {
        obs.extend(xy.iter().map(|&x| pos(x)));
    }
    obs.extend(
        state
            .energy_j
            .iter()
            .map(|&e| (e / config.battery_capacity_j).clamp(0.0, 1.0)),
    );
    let clip = config.aoi_clip;
    obs.extend(state.aoi.iter().map(|&a| a.min(clip) as f64 / clip as f64));
    obs
}

/// An owned environment instance: config plus current state.
#[derive(Debug, Clone)]
pub struct UavEnv {
    config: EnvConfig,
    state: EnvState,
}

impl UavEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<(Self, Vec<f64>)> {
        let (state, obs) = reset(&config, seed)?;
        Ok((Self { config, state }, obs))
    }

    /// Wraps an explicit state, e.g. a hand-placed device layout.
    pub fn from_state(config: EnvConfig, state: EnvState) -> Result<Self> {
        config.validate()?;
        let n = config.num_devices;
        if state.device_xy.len() != n || state.energy_j.len() != n || state.aoi.len() != n {
            return Err(Error::Usage(format!("state does not describe {n} devices")));
        }
        Ok(Self { config, state })
    }

    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let (state, obs) = reset(&self.config, seed)?;
        self.state = state;
        Ok(obs)
    }

    pub fn step_raw(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let a = SlotAction::from_slice(action, self.config.num_devices)?;
        step(&mut self.state, &a, &self.config)
    }

    pub fn step(&mut self, action: &SlotAction) -> Result<StepOutcome> {
        step(&mut self.state, action, &self.config)
    }

    pub fn observe(&self) -> Vec<f64> {
        observe(&self.state, &self.config)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }
}
