//! Checkpoints: a JSON manifest next to one raw little-endian `f64` file per
//! network. Weights round-trip bit-exactly. Optimizer moments are not saved,
//! so a checkpoint is for evaluation, not for resuming training.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::PolicyKind;
use crate::diffusion::{Denoiser, DiffusionActor, DiffusionSchedule};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};
use crate::rl::{Actor, ActorKind, MlpActor, Td3Agent, TrainerConfig};

pub const MANIFEST_FILE: &str = "checkpoint.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkEntry {
    name: String,
    file: String,
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    policy: PolicyKind,
    actor_kind: ActorKind,
    env: EnvConfig,
    trainer: TrainerConfig,
    /// Present for diffusion actors; checked against the rebuilt schedule.
    schedule: Option<DiffusionSchedule>,
    critic_updates: u64,
    actor_updates: u64,
    networks: Vec<NetworkEntry>,
}

/// Everything needed to roll out or inspect a trained agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: PolicyKind,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    pub actor: Actor,
    pub actor_target: Actor,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    pub critic_updates: u64,
    pub actor_updates: u64,
}

impl Checkpoint {
    pub fn from_agent(policy: PolicyKind, env: &EnvConfig, agent: &Td3Agent) -> Self {
        Self {
            policy,
            env: env.clone(),
            trainer: agent.config.clone(),
            actor: agent.actor.clone(),
            actor_target: agent.actor_target.clone(),
            critics: agent.critics.nets.clone(),
            critic_targets: agent.critic_targets.clone(),
            critic_updates: agent.critic_updates,
            actor_updates: agent.actor_updates,
        }
    }

    fn networks(&self) -> [(&'static str, &Mlp); 6] {
        [
            ("actor", self.actor.network()),
            ("actor_target", self.actor_target.network()),
            ("critic_1", &self.critics[0]),
            ("critic_2", &self.critics[1]),
            ("critic_target_1", &self.critic_targets[0]),
            ("critic_target_2", &self.critic_targets[1]),
        ]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut networks = Vec::new();
        for (name, net) in self.networks() {
            let file = format!("{name}.f64");
            let path = dir.join(&file);
            let bytes: Vec<u8> = net.params().iter().flat_map(|v| v.to_le_bytes()).collect();
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            networks.push(NetworkEntry {
                name: name.to_string(),
                file,
                sizes: net.sizes().to_vec(),
                hidden: net.hidden_activation(),
                output: net.output_activation(),
                params: net.params().len(),
            });
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            policy: self.policy,
            actor_kind: self.actor.kind(),
            env: self.env.clone(),
            trainer: self.trainer.clone(),
            schedule: match &self.actor {
                Actor::Diffusion(d) => Some(d.schedule.clone()),
                Actor::Mlp(_) => None,
            },
            critic_updates: self.critic_updates,
            actor_updates: self.actor_updates,
            networks,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads a checkpoint directory (or its `checkpoint.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let dir = if path.is_dir() {
            path.to_path_buf()
        } else {
            path.parent().unwrap_or(Path::new(".")).to_path_buf()
        };
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Load(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Load(format!(
                "unsupported checkpoint format version {}",
                manifest.format_version
            )));
        }
        if manifest.policy.actor_kind() != Some(manifest.actor_kind) {
            return Err(Error::Load(format!(
                "policy `{}` does not use a {:?} actor",
                manifest.policy, manifest.actor_kind
            )));
        }
        manifest.env.validate().map_err(|e| Error::Load(e.to_string()))?;
        manifest.trainer.validate().map_err(|e| Error::Load(e.to_string()))?;

        let net = |name: &str| -> Result<Mlp> {
            let entry = manifest
                .networks
                .iter()
                .find(|n| n.name == name)
                .ok_or_else(|| Error::Load(format!("checkpoint has no `{name}` network")))?;
            let path = dir.join(&entry.file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() != entry.params * 8 {
                return Err(Error::Load(format!(
                    "{}: expected {} bytes, found {}",
                    path.display(),
                    entry.params * 8,
                    bytes.len()
                )));
            }
            let params: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            Mlp::from_params(&entry.sizes, entry.hidden, entry.output, params)
                .ok_or_else(|| Error::Load(format!("`{name}` sizes do not match its parameter count")))
        };

        let (obs_dim, act_dim) = (manifest.env.obs_dim(), manifest.env.action_dim());
        let schedule = match manifest.actor_kind {
            ActorKind::Diffusion => {
                let stored = manifest
                    .schedule
                    .clone()
                    .ok_or_else(|| Error::Load("diffusion checkpoint without a schedule".into()))?;
                let rebuilt = manifest.trainer.schedule().map_err(|e| Error::Load(e.to_string()))?;
                if stored != rebuilt {
                    return Err(Error::Load(
                        "stored diffusion schedule disagrees with the trainer settings".into(),
                    ));
                }
                Some(stored)
            }
            ActorKind::Mlp => None,
        };
        let actor_from = |m: Mlp| -> Result<Actor> {
            match &schedule {
                Some(s) => Ok(Actor::Diffusion(DiffusionActor::new(
                    Denoiser::from_net(m, act_dim, obs_dim)?,
                    s.clone(),
                ))),
                None => {
                    if m.input_dim() != obs_dim || m.output_dim() != act_dim {
                        return Err(Error::Load(format!(
                            "actor network {:?} does not fit obs_dim {obs_dim}, action_dim {act_dim}",
                            m.sizes()
                        )));
                    }
                    Ok(Actor::Mlp(MlpActor { net: m }))
                }
            }
        };
        let critic = |name: &str| -> Result<Mlp> {
            let m = net(name)?;
            if m.input_dim() != obs_dim + act_dim || m.output_dim() != 1 {
                return Err(Error::Load(format!("`{name}` has the wrong shape {:?}", m.sizes())));
            }
            Ok(m)
        };
        Ok(Self {
            policy: manifest.policy,
            env: manifest.env.clone(),
            trainer: manifest.trainer.clone(),
            actor: actor_from(net("actor")?)?,
            actor_target: actor_from(net("actor_target")?)?,
            critics: [critic("critic_1")?, critic("critic_2")?],
            critic_targets: [critic("critic_target_1")?, critic("critic_target_2")?],
            critic_updates: manifest.critic_updates,
            actor_updates: manifest.actor_updates,
        })
    }
}
