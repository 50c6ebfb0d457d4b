//! Policies compared against the learned agents, and the no-charge ablation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::env::{action_dim, SlotAction};
use crate::error::Error;
use crate::nn::Mat;
use crate::rl::actor::{Actor, ActorKind};

/// Anything that maps an observation to a flat action vector.
pub trait Policy {
    fn act(&self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (**self).act(obs, rng)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (**self).act(obs, rng)
    }
}

impl Policy for Actor {
    fn act(&self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let m = Mat::from_vec(1, obs.len(), obs.to_vec());
        Actor::act(self, &m, rng).data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Dtd3,
    Td3,
    NoChargeDtd3,
    NoChargeTd3,
    Random,
    GreedyMaxAoi,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Dtd3,
        PolicyKind::Td3,
        PolicyKind::NoChargeDtd3,
        PolicyKind::NoChargeTd3,
        PolicyKind::Random,
        PolicyKind::GreedyMaxAoi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Dtd3 => "dtd3",
            PolicyKind::Td3 => "td3",
            PolicyKind::NoChargeDtd3 => "no_charge_dtd3",
            PolicyKind::NoChargeTd3 => "no_charge_td3",
            PolicyKind::Random => "random",
            PolicyKind::GreedyMaxAoi => "greedy_max_aoi",
        }
    }

    /// Actor implementation for learned kinds.
    pub fn actor_kind(self) -> Option<ActorKind> {
        match self {
            PolicyKind::Dtd3 | PolicyKind::NoChargeDtd3 => Some(ActorKind::Diffusion),
            PolicyKind::Td3 | PolicyKind::NoChargeTd3 => Some(ActorKind::Mlp),
            PolicyKind::Random | PolicyKind::GreedyMaxAoi => None,
        }
    }

    pub fn is_learned(self) -> bool {
        self.actor_kind().is_some()
    }

    pub fn no_charge(self) -> bool {
        matches!(self, PolicyKind::NoChargeDtd3 | PolicyKind::NoChargeTd3)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("policy_kinds", format!("unknown policy kind `{s}`")))
    }
}

/// Sets the charging component to `-1` (`tau = 0`).
pub fn force_no_charge(action: &mut [f64]) {
    if let Some(last) = action.last_mut() {
        *last = -1.0;
    }
}

/// Policy wrapper that never lets the UAV charge.
#[derive(Debug, Clone)]
pub struct NoCharge<P>(pub P);

pub fn no_charge_wrap<P: Policy>(inner: P) -> NoCharge<P> {
    NoCharge(inner)
}

impl<P: Policy> Policy for NoCharge<P> {
    fn act(&self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let mut a = self.0.act(obs, rng);
        force_no_charge(&mut a);
        a
    }
}

fn devices_in_obs(obs: &[f64]) -> usize {
    assert!(
        obs.len() >= 6 && (obs.len() - 2).is_multiple_of(4),
        "not an environment observation"
    );
    (obs.len() - 2) / 4
}

/// Flies to and schedules the device with the largest observed AoI.
pub fn greedy_max_aoi(obs: &[f64]) -> SlotAction {
    let n = devices_in_obs(obs);
    let aoi = &obs[2 + 3 * n..2 + 4 * n];
    let mut target = 0;
    for (i, &a) in aoi.iter().enumerate() {
        if a > aoi[target] {
            target = i;
        }
    }
    let dx = obs[2 + 2 * target] - obs[0];
    let dy = obs[3 + 2 * target] - obs[1];
    let dist = (dx * dx + dy * dy).sqrt();
    let vel = if dist > 0.0 { [dx / dist, dy / dist] } else { [0.0, 0.0] };
    let mut sched_scores = vec![-1.0; n];
    sched_scores[target] = 1.0;
    SlotAction {
        vel,
        sched_scores,
        tau_raw: 0.0,
    }
}

/// Uniform action in `[-1, 1]^(N+3)`.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, num_devices: usize) -> SlotAction {
    let raw: Vec<f64> = (0..action_dim(num_devices))
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    SlotAction::from_slice(&raw, num_devices).expect("dimension is action_dim")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyMaxAoi;

impl Policy for GreedyMaxAoi {
    fn act(&self, obs: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        greedy_max_aoi(obs).to_vec()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        random_policy(rng, devices_in_obs(obs)).to_vec()
    }
}
