//! Desk-scale stochastic HVAC control as a finite-horizon MDP.
//!
//! The crate ties together:
//!
//! - a gray-box room simulator with two air handling units ([`thermal`]),
//! - the predicted-mean-vote comfort model ([`comfort`]),
//! - per-stage Markov chains for weather and occupancy estimated from data
//!   ([`chains`], [`weather`]),
//! - discretized state/action spaces and stochastic policy tables
//!   ([`spaces`], [`policy`]),
//! - the gradient-based policy-iteration learner ([`gbpi`]) driven by Monte
//!   Carlo sample paths of the hybrid environment ([`hvac_env`]),
//! - exact validation oracles: finite-horizon dynamic programming and a
//!   perfect-information planner ([`oracle`]),
//! - reproducible experiment configuration ([`config`]).

pub mod chains;
pub mod comfort;
pub mod config;
pub mod env;
pub mod error;
pub mod gbpi;
pub mod grid;
pub mod hvac_env;
pub mod oracle;
pub mod policy;
pub mod psychro;
pub mod spaces;
pub mod thermal;
pub mod weather;

pub use chains::MarkovChainSet;
pub use comfort::{ComfortBand, ComfortModel, PmvInputs};
pub use config::{DataSource, ExperimentConfig};
pub use env::{McEnvironment, SamplePath};
pub use error::{CoreError, Result};
pub use gbpi::{GbpiConfig, GradientEstimate};
pub use grid::LevelGrid;
pub use hvac_env::{EvalSummary, HvacEnv};
pub use oracle::EnumeratedMdp;
pub use policy::StochasticPolicy;
pub use spaces::{ActionSpace, StateSpace};
pub use thermal::{ContinuousState, ControlInput, ExogenousSample, HvacParams, RoomParams};
