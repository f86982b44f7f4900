//! Deployment-time navigation: global path, local planners, safety gate and
//! recovery.

pub mod dwa;
pub mod episode;
pub mod global;
pub mod mpc;
pub mod recovery;

pub use dwa::{dwa_command, DwaParams};
pub use episode::{
    lfh_runtime_scan, navigate_episode, navigate_episode_traced, EpisodeResult, NavConfig, PlannerKind, StepPhase,
    TraceStep,
};
pub use global::{local_goal, plan_global, plan_global_from, GlobalPath};
pub use mpc::{mpc_safe, MpcParams};
pub use recovery::{recovery_command, RecoveryParams, RecoveryPhase};
