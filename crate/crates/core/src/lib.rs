//! Multi-winner contest (MWC) referral rewards.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the referral
//! DAG, the incremental virtual-credit ledger, the per-subgraph contests that
//! turn credits into diffusion rewards, false-name attack construction, the
//! heterogeneous player population and the threshold cascade that grows
//! referral DAGs out of a social network.
//!
//! File formats, configuration, parallel sweeps and the command line live in
//! the `mwc-lab` crate.

#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod attack;
pub mod cascade;
pub mod engine;
pub mod graph;
mod math;
pub mod oracle;
pub mod population;
pub mod rng;

pub use attack::{AttackOutcome, AttackShape, AttackSpec, SuccessorPolicy};
pub use engine::{CreditLedger, MechanismParams, NodeReward, RewardReport};
pub use graph::{NodeId, ReferralDag};

/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
