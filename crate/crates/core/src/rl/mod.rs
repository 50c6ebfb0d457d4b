//! TD3 machinery parameterized by the actor implementation.

pub mod actor;
pub mod buffer;
pub mod td3;
pub mod trainer;

pub use actor::{Actor, ActorKind, MlpActor};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use td3::{actor_update, critic_target, critic_update, soft_update, Td3Agent, TrainerConfig, TwinCritics};
pub use trainer::{train, TrainOutput};
