//! Experiment harness for the multi-winner contest referral mechanism: config
//! files, data formats, sweeps, the scaling benchmark and the property suite.

pub mod attack_eval;
pub mod bench;
pub mod config;
pub mod formats;
pub mod network;
pub mod noise;
pub mod run_dir;
pub mod simulate;
pub mod verify;

use mwc_core::attack::AttackError;
use mwc_core::cascade::CascadeError;
use mwc_core::engine::{EngineError, ParamError};
use mwc_core::population::PopulationError;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use formats::FormatError;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
}

/// Seed of one labelled component of an experiment, derived from the run seed.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    let mut key = Vec::with_capacity(parts.len() + 1);
    key.push(root);
    key.extend_from_slice(parts);
    mwc_core::rng::stream_key(&key)
}

/// Component labels for [`derive_seed`].
pub mod seed_tag {
    pub const NETWORK: u64 = 1;
    pub const PROFILES: u64 = 2;
    pub const CASCADE: u64 = 3;
    pub const ATTACK: u64 = 4;
    pub const BENCH: u64 = 5;
    pub const VERIFY: u64 = 6;
}
