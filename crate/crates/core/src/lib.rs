//! Multi-agent reinforcement learning for traffic signal control.
//!
//! The crate bundles a deterministic point-queue simulator, cyclic signal
//! programs with exponential (or linear) green-duration adjustments,
//! episode-level turning-ratio randomization, local/neighbor/global
//! observations, and a parameter-shared PPO trainer with either a
//! centralized (MAPPO) or a decentralized (IPPO) critic. Fixed-time and
//! max-pressure controllers serve as baselines, and [`experiment`] drives
//! reproducible evaluation runs that emit CSV.

pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod marl;
pub mod network;
pub mod nn;
pub mod observation;
pub mod randomization;
pub mod scenario;
pub mod seeding;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
pub use network::{neighbors_of, validate_network, IntersectionId, LinkId, MovementId, Network, NetworkSpec};
pub use observation::{Observer, RewardWeights, Scope};
pub use scenario::{Env, Scenario};
pub use signal::{exponential_action_set, linear_action_set, ActionSet, Controller, Decision, SignalProgram};
pub use sim::{metrics_report, run_episode, DemandSpec, MetricsReport, SimState};
