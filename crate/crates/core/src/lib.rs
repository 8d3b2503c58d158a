//! Learned normal contact force control with a force-magnitude-only sensor.
//!
//! The crate bundles a planar two-joint contact simulator ([`sim`]), the
//! reinforcement-learning environment built on it ([`env`]), a small neural
//! network stack ([`nn`]), a DDPG trainer with hindsight relabeling and
//! per-region replay ([`trainer`]), command composition plus a
//! full-information reference controller ([`controller`]), and the
//! evaluation/experiment harness ([`experiments`]).

pub mod config;
pub mod controller;
pub mod env;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod sim;
pub mod trainer;

pub use controller::{ControllerState, ForceController, OracleController, Trajectory};
pub use env::{EnvConfig, EnvState, FeatureMask, ForceFeature, Observation, Region};
pub use config::{Checkpoint, Config};
pub use error::ConfigError;
pub use experiments::{ScoreReport, VariantSpec};
pub use nn::{Mlp, MlpSpec};
pub use sim::{ArmState, ContactState, SimConfig, SurfaceModel};
pub use trainer::{Agent, TrainConfig, Transition};

