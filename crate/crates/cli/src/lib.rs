//! Orchestration layer for the weakkam toolkit: configuration parsing,
//! experiment pipelines, the semigroup-rate study and deterministic
//! artifact emission. The `weakkam` binary is a thin shell over this crate.

pub mod artifacts;
pub mod config;
pub mod rate;
pub mod suite;

pub use config::ExperimentConfig;
pub use suite::{run, StageGoal, SuiteReport};
