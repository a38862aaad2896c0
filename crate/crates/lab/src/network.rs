//! Social networks for experiments: synthetic or read from files.

use mwc_core::cascade::{estimate_probabilities, generate_synthetic, InfluenceProbabilities, SocialGraph};

use crate::config::ExperimentConfig;
use crate::formats::{read_actions, read_edge_list, read_probabilities, NetworkSummary};
use crate::{derive_seed, seed_tag, LabError};

/// A network ready for cascades.
#[derive(Clone, Debug)]
pub struct Network {
    pub graph: SocialGraph,
    pub probs: InfluenceProbabilities,
    pub summary: NetworkSummary,
}

/// Where repetitions get their networks from.
#[derive(Clone, Debug)]
pub enum NetworkSource {
    /// Loaded once and shared by every repetition.
    Fixed(Network),
    /// A fresh synthetic network per repetition.
    Synthetic,
}

impl NetworkSource {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self, LabError> {
        if config.network.edges.is_some() {
            Ok(NetworkSource::Fixed(load_files(config)?))
        } else {
            Ok(NetworkSource::Synthetic)
        }
    }

    /// Network of repetition `rep`.
    pub fn network(&self, config: &ExperimentConfig, rep: usize) -> Result<Network, LabError> {
        match self {
            NetworkSource::Fixed(net) => Ok(net.clone()),
            NetworkSource::Synthetic => synthetic(config, rep),
        }
    }
}

pub fn synthetic(config: &ExperimentConfig, rep: usize) -> Result<Network, LabError> {
    let net = &config.network;
    let seed = derive_seed(config.rng_seed, &[seed_tag::NETWORK, rep as u64]);
    let (graph, probs) = generate_synthetic(net.model(), net.nodes, net.density, net.p_max, seed)?;
    let summary = NetworkSummary {
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        ..Default::default()
    };
    Ok(Network { graph, probs, summary })
}

/// Reads `network.edges` plus either `network.probabilities` or an action
/// log to estimate them from.
pub fn load_files(config: &ExperimentConfig) -> Result<Network, LabError> {
    let net = &config.network;
    let edges = net
        .edges
        .as_deref()
        .ok_or_else(|| LabError::Input("network.edges is not set".into()))?;
    let (graph, mut summary) = read_edge_list(edges)?;
    let probs = if let Some(path) = &net.probabilities {
        read_probabilities(path, &graph)?
    } else if let Some(path) = &net.actions {
        let log = read_actions(path, graph.node_count())?;
        summary.actions = log.action_count();
        summary.action_records = log.len();
        summary.active_users = log.user_count();
        estimate_probabilities(&graph, &log)?
    } else {
        return Err(LabError::Input(
            "network.edges needs network.probabilities or network.actions".into(),
        ));
    };
    Ok(Network { graph, probs, summary })
}
