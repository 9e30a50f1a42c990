//! Variable-frequency imitation learning on a simulated bilateral
//! teleoperation rig: demonstration recording, time normalization, a small
//! recurrent policy, a variable-rate inference scheduler and an evaluation
//! harness against a constant-rate baseline.

pub mod config;
pub mod control;
pub mod error;
pub mod eval;
pub mod infer;
pub mod io;
pub mod normalize;
pub mod pipeline;
pub mod plant;
pub mod policy;
pub mod seed;
pub mod teach;
pub mod types;

pub use config::RunConfig;
pub use control::{bilateral_refs, ControlledArm, ControllerGains, ObserverState};
pub use error::{Error, Result};
pub use infer::{rollout, RolloutConfig, SchedulerMode, SchedulerState, TrajectoryLog};
pub use normalize::{build_training_set, normalize_demonstration, TrainingSet};
pub use plant::{PlantParams, PlantState};
pub use policy::{PolicyArch, PolicyModel, PolicyParams, TimeScaling};
pub use types::*;
