//! Simulation and learning stack for a UAV that wirelessly charges
//! energy-buffered IoT devices and collects their updates, with TD3 and a
//! diffusion-policy TD3 variant (DTD3) trained to minimize age of information.

pub mod baselines;
pub mod diffusion;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rl;
pub mod seeding;

pub use error::{Error, Result};
