//! One campaign: population, cascade, settlement.

use std::path::Path;

use mwc_core::cascade::{simulate_cascade, Campaign, CascadeConfig};
use mwc_core::engine::compute_rewards;
use mwc_core::population::{sample_profiles, GroupMix, PlayerProfile};
use mwc_core::{CreditLedger, MechanismParams, ReferralDag, RewardReport};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::formats::{write_dag, write_json, write_profiles, write_rewards, NetworkSummary};
use crate::network::Network;
use crate::{derive_seed, seed_tag, LabError};

/// A settled campaign.
#[derive(Clone, Debug)]
pub struct CampaignRun {
    pub params: MechanismParams,
    pub dag: ReferralDag,
    /// Profiles in node order.
    pub profiles: Vec<PlayerProfile>,
    pub report: RewardReport,
    pub rounds: usize,
    /// Rounds and convergence of best-response refinement, when used.
    pub best_response: Option<(usize, bool)>,
}

/// Runs repetition `rep` of a campaign with noise factor `sigma`.
///
/// `population` labels the mix in the seed so different populations draw
/// independent abilities, while the cascade thresholds and seeds depend only
/// on `rep` and are shared across noise factors and populations.
pub fn run_campaign(
    config: &ExperimentConfig,
    network: &Network,
    mix: &GroupMix,
    population: u64,
    sigma: f64,
    rep: usize,
) -> Result<CampaignRun, LabError> {
    let params = config.params(sigma)?;
    let n = network.graph.node_count();
    let profiles = sample_profiles(
        mix,
        n,
        derive_seed(config.rng_seed, &[seed_tag::PROFILES, population, rep as u64]),
    );
    let campaign = Campaign {
        profiles: &profiles,
        effort_model: config.effort.effort_model(),
        participation: config.effort.participation(),
        params,
    };
    let cascade = CascadeConfig {
        seed_rule: config.cascade.seed_rule(),
        rng_seed: derive_seed(config.rng_seed, &[seed_tag::CASCADE, rep as u64]),
        max_rounds: config.cascade.max_rounds,
    };
    let outcome = simulate_cascade(&network.graph, &network.probs, &cascade, &campaign)?;
    let ledger = CreditLedger::replay(&outcome.dag, &params);
    let report = compute_rewards(&outcome.dag, &ledger, &params)?;
    Ok(CampaignRun {
        params,
        profiles: outcome.node_profiles(&profiles),
        rounds: outcome.rounds,
        best_response: outcome.best_response.as_ref().map(|b| (b.rounds, b.converged)),
        dag: outcome.dag,
        report,
    })
}

/// `summary.json` of a `simulate` run.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub network: NetworkSummary,
    pub sigma: f64,
    pub dag_nodes: usize,
    pub dag_edges: usize,
    pub participants: usize,
    pub total_effort: f64,
    pub total_payout: f64,
    pub payout_ratio: f64,
    pub cascade_rounds: usize,
    pub best_response_rounds: Option<usize>,
    pub best_response_converged: Option<bool>,
}

impl CampaignRun {
    pub fn summary(&self, network: &NetworkSummary) -> SimulationSummary {
        SimulationSummary {
            network: *network,
            sigma: self.params.sigma,
            dag_nodes: self.dag.len(),
            dag_edges: self.dag.edge_count(),
            participants: self.report.participants,
            total_effort: self.report.total_effort,
            total_payout: self.report.total_reward,
            payout_ratio: self.report.payout_ratio(&self.params),
            cascade_rounds: self.rounds,
            best_response_rounds: self.best_response.map(|b| b.0),
            best_response_converged: self.best_response.map(|b| b.1),
        }
    }

    /// Writes the DAG, profiles, rewards and a summary into `dir`.
    pub fn write(&self, dir: &Path, network: &NetworkSummary) -> Result<(), LabError> {
        write_dag(&dir.join("referral_dag.txt"), &self.dag)?;
        write_profiles(&dir.join("profiles.csv"), &self.profiles)?;
        write_rewards(
            &dir.join("rewards.csv"),
            &dir.join("rewards.json"),
            &self.report,
            &self.params,
        )?;
        write_json(&dir.join("summary.json"), &self.summary(network))?;
        Ok(())
    }
}
