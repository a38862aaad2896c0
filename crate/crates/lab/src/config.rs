//! Experiment configuration.
//!
//! A TOML file whose keys all have defaults, so an empty file (or no file at
//! all) describes the standard desk-scale setup. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mwc_core::attack::{SplitStrategy, SuccessorPolicy, SweepShape};
use mwc_core::cascade::{NetworkModel, SeedRule};
use mwc_core::engine::ParamError;
use mwc_core::population::{AbilityGroup, EffortModel, GroupMix, ParticipationRule, PopulationError};
use mwc_core::MechanismParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid mechanism parameters: {0}")]
    Params(#[from] ParamError),
    #[error("invalid population: {0}")]
    Population(#[from] PopulationError),
    #[error("sigma_grid value {0} is outside [0, 1]")]
    SigmaGrid(f64),
    #[error("sigma_grid is empty")]
    EmptySigmaGrid,
    #[error("{key} must be at least {min}, got {value}")]
    TooSmall {
        key: &'static str,
        value: usize,
        min: usize,
    },
    #[error("{key} must lie in [0, 1], got {value}")]
    Fraction { key: &'static str, value: f64 },
    #[error("unknown attack shape {0:?}; expected chain, parallel-shared, parallel-partitioned, hybrid-shared or hybrid-partitioned")]
    Shape(String),
    #[error("unknown split strategy {0:?}; expected equal or dirichlet")]
    Split(String),
    #[error("unknown population {0:?}; expected HO, HL, HH, DI or mixed")]
    UnknownPopulation(String),
    #[error("network.{0} requires network.edges")]
    MissingEdges(&'static str),
    #[error("network.edges needs either network.probabilities or network.actions")]
    MissingProbabilities,
}

/// The whole configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rng_seed: u64,
    pub repetitions: usize,
    pub output_dir: PathBuf,
    pub sigma_grid: Vec<f64>,
    pub mechanism: MechanismSection,
    pub population: PopulationSection,
    pub network: NetworkSection,
    pub cascade: CascadeSection,
    pub effort: EffortSection,
    pub attack: AttackSection,
    pub bench: BenchSection,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rng_seed: 42,
            repetitions: 20,
            output_dir: PathBuf::from("runs"),
            sigma_grid: default_sigma_grid(),
            mechanism: MechanismSection::default(),
            population: PopulationSection::default(),
            network: NetworkSection::default(),
            cascade: CascadeSection::default(),
            effort: EffortSection::default(),
            attack: AttackSection::default(),
            bench: BenchSection::default(),
            verify: VerifySection::default(),
        }
    }
}

/// 0, 0.05, ..., 1 computed from integers so every value is the nearest double.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismSection {
    pub lambda: f64,
    pub eta: f64,
    pub mu: f64,
    pub phi: f64,
    /// Noise factor for single runs (`simulate`).
    pub sigma: f64,
}

impl Default for MechanismSection {
    fn default() -> Self {
        MechanismSection {
            lambda: 0.5,
            eta: 0.25,
            mu: 0.9,
            phi: 0.1,
            sigma: 0.5,
        }
    }
}

impl MechanismSection {
    pub fn params(&self, sigma: f64) -> Result<MechanismParams, ParamError> {
        MechanismParams::new(self.lambda, self.eta, self.mu, self.phi, sigma)
    }
}

/// A population the noise sweep runs on: one ability group or the mixed one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PopulationKind {
    Group(AbilityGroup),
    Mixed,
}

impl PopulationKind {
    pub fn label(&self) -> &'static str {
        match self {
            PopulationKind::Group(g) => g.tag(),
            PopulationKind::Mixed => "mixed",
        }
    }

    pub fn mix(&self, mixed: &GroupMix) -> GroupMix {
        match *self {
            PopulationKind::Group(g) => GroupMix::pure(g),
            PopulationKind::Mixed => mixed.clone(),
        }
    }
}

impl fmt::Display for PopulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PopulationKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("mixed") {
            return Ok(PopulationKind::Mixed);
        }
        s.parse::<AbilityGroup>()
            .map(PopulationKind::Group)
            .map_err(|_| ConfigError::UnknownPopulation(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    /// Group fractions of the mixed population.
    pub mix: MixSection,
    /// Populations of the noise sweep, by group tag or `mixed`.
    pub groups: Vec<String>,
}

impl Default for PopulationSection {
    fn default() -> Self {
        PopulationSection {
            mix: MixSection::default(),
            groups: AbilityGroup::ALL.iter().map(|g| g.tag().to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSection {
    #[serde(rename = "HO")]
    pub ho: f64,
    #[serde(rename = "HL")]
    pub hl: f64,
    #[serde(rename = "HH")]
    pub hh: f64,
    #[serde(rename = "DI")]
    pub di: f64,
}

impl Default for MixSection {
    fn default() -> Self {
        MixSection {
            ho: 0.25,
            hl: 0.25,
            hh: 0.25,
            di: 0.25,
        }
    }
}

impl MixSection {
    pub fn group_mix(&self) -> Result<GroupMix, PopulationError> {
        let entries = [
            (AbilityGroup::Ho, self.ho),
            (AbilityGroup::Hl, self.hl),
            (AbilityGroup::Hh, self.hh),
            (AbilityGroup::Di, self.di),
        ]
        .into_iter()
        .filter(|&(_, f)| f != 0.0)
        .collect();
        GroupMix::new(entries)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    ErdosRenyiDag,
    PreferentialAttachment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub model: NetworkKind,
    pub nodes: usize,
    pub density: f64,
    pub p_max: f64,
    pub reciprocity: f64,
    /// Social edge list; replaces the synthetic model when set.
    pub edges: Option<PathBuf>,
    /// Influence probabilities for `edges`.
    pub probabilities: Option<PathBuf>,
    /// Action log to estimate probabilities from when `probabilities` is unset.
    pub actions: Option<PathBuf>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            model: NetworkKind::PreferentialAttachment,
            nodes: 2000,
            density: 0.01,
            p_max: 0.2,
            reciprocity: 0.5,
            edges: None,
            probabilities: None,
            actions: None,
        }
    }
}

impl NetworkSection {
    pub fn model(&self) -> NetworkModel {
        match self.model {
            NetworkKind::ErdosRenyiDag => NetworkModel::ErdosRenyiDag,
            NetworkKind::PreferentialAttachment => NetworkModel::PreferentialAttachment {
                reciprocity: self.reciprocity,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    UniformRandom,
    TopOutDegree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeSection {
    pub seed_rule: SeedKind,
    pub seeds: usize,
    pub max_rounds: usize,
}

impl Default for CascadeSection {
    fn default() -> Self {
        CascadeSection {
            seed_rule: SeedKind::UniformRandom,
            seeds: 12,
            max_rounds: 1000,
        }
    }
}

impl CascadeSection {
    pub fn seed_rule(&self) -> SeedRule {
        match self.seed_rule {
            SeedKind::UniformRandom => SeedRule::UniformRandom(self.seeds),
            SeedKind::TopOutDegree => SeedRule::TopOutDegree(self.seeds),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffortKind {
    AbilityProportional,
    BestResponse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipationKind {
    AllActive,
    IncentiveGated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffortSection {
    pub model: EffortKind,
    pub grid_step: f64,
    pub max_rounds: usize,
    pub participation: ParticipationKind,
    /// Smallest anticipated diffusion reward that makes a player refer others.
    pub referral_cost: f64,
}

impl Default for EffortSection {
    fn default() -> Self {
        EffortSection {
            model: EffortKind::BestResponse,
            grid_step: 0.1,
            max_rounds: 20,
            participation: ParticipationKind::IncentiveGated,
            referral_cost: 0.05,
        }
    }
}

impl EffortSection {
    pub fn effort_model(&self) -> EffortModel {
        match self.model {
            EffortKind::AbilityProportional => EffortModel::AbilityProportional,
            EffortKind::BestResponse => EffortModel::BestResponse {
                grid_step: self.grid_step,
                max_rounds: self.max_rounds,
            },
        }
    }

    pub fn participation(&self) -> ParticipationRule {
        match self.participation {
            ParticipationKind::AllActive => ParticipationRule::AllActive,
            ParticipationKind::IncentiveGated => ParticipationRule::IncentiveGated {
                referral_cost: self.referral_cost,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub sigmas: Vec<f64>,
    pub max_false_identities: usize,
    pub shape: String,
    /// Replicas per block of hybrid shapes.
    pub block_size: usize,
    pub split: String,
    pub repetitions: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            sigmas: vec![0.4, 0.5, 0.6, 0.7],
            max_false_identities: 10,
            shape: "parallel-shared".to_string(),
            block_size: 2,
            split: "equal".to_string(),
            repetitions: 20,
        }
    }
}

impl AttackSection {
    pub fn sweep_shape(&self) -> Result<SweepShape, ConfigError> {
        parse_shape(&self.shape, self.block_size)
    }

    pub fn split_strategy(&self) -> Result<SplitStrategy, ConfigError> {
        match self.split.as_str() {
            "equal" => Ok(SplitStrategy::Equal),
            "dirichlet" => Ok(SplitStrategy::Dirichlet),
            other => Err(ConfigError::Split(other.to_string())),
        }
    }
}

pub fn parse_shape(label: &str, block_size: usize) -> Result<SweepShape, ConfigError> {
    Ok(match label {
        "chain" => SweepShape::Chain,
        "parallel-shared" => SweepShape::Parallel(SuccessorPolicy::Shared),
        "parallel-partitioned" => SweepShape::Parallel(SuccessorPolicy::Partitioned),
        "hybrid-shared" => SweepShape::Hybrid {
            block_size,
            policy: SuccessorPolicy::Shared,
        },
        "hybrid-partitioned" => SweepShape::Hybrid {
            block_size,
            policy: SuccessorPolicy::Partitioned,
        },
        other => return Err(ConfigError::Shape(other.to_string())),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
    /// Size of the single large run.
    pub large: usize,
    /// Average number of direct predecessors per node.
    pub avg_degree: usize,
    /// Timings per size; the fastest is kept.
    pub repetitions: usize,
    pub sigma: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            sizes: vec![1000, 2000, 4000, 8000],
            large: 10_000,
            avg_degree: 10,
            repetitions: 3,
            sigma: 0.5,
        }
    }
}

/// Trial counts of the property suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub oracle_trials: usize,
    pub attack_trials: usize,
    pub rationality_trials: usize,
    pub budget_trials: usize,
    pub monotonicity_trials: usize,
    pub subgraph_trials: usize,
    pub csf_trials: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            oracle_trials: 500,
            attack_trials: 1000,
            rationality_trials: 500,
            budget_trials: 500,
            monotonicity_trials: 500,
            subgraph_trials: 500,
            csf_trials: 200,
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mechanism.params(self.mechanism.sigma)?;
        if self.sigma_grid.is_empty() {
            return Err(ConfigError::EmptySigmaGrid);
        }
        for &s in self
            .sigma_grid
            .iter()
            .chain(&self.attack.sigmas)
            .chain([&self.bench.sigma])
        {
            if !(0.0..=1.0).contains(&s) {
                return Err(ConfigError::SigmaGrid(s));
            }
        }
        self.population.mix.group_mix()?;
        self.populations()?;
        self.effort.effort_model().validate()?;
        check_min("repetitions", self.repetitions, 1)?;
        check_min("network.nodes", self.network.nodes, 1)?;
        check_min("attack.repetitions", self.attack.repetitions, 1)?;
        check_min("attack.block_size", self.attack.block_size, 1)?;
        check_min("bench.avg_degree", self.bench.avg_degree, 1)?;
        check_min("bench.repetitions", self.bench.repetitions, 1)?;
        for (key, value) in [
            ("network.density", self.network.density),
            ("network.p_max", self.network.p_max),
            ("network.reciprocity", self.network.reciprocity),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Fraction { key, value });
            }
        }
        if self.effort.referral_cost.is_nan() || self.effort.referral_cost < 0.0 {
            return Err(ConfigError::Fraction {
                key: "effort.referral_cost",
                value: self.effort.referral_cost,
            });
        }
        self.attack.sweep_shape()?;
        self.attack.split_strategy()?;
        if self.network.edges.is_none() {
            if self.network.probabilities.is_some() {
                return Err(ConfigError::MissingEdges("probabilities"));
            }
            if self.network.actions.is_some() {
                return Err(ConfigError::MissingEdges("actions"));
            }
        } else if self.network.probabilities.is_none() && self.network.actions.is_none() {
            return Err(ConfigError::MissingProbabilities);
        }
        Ok(())
    }

    /// The params used with a given noise factor.
    pub fn params(&self, sigma: f64) -> Result<MechanismParams, ParamError> {
        self.mechanism.params(sigma)
    }

    pub fn populations(&self) -> Result<Vec<PopulationKind>, ConfigError> {
        self.population.groups.iter().map(|s| s.parse()).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_min(key: &'static str, value: usize, min: usize) -> Result<(), ConfigError> {
    if value < min {
        Err(ConfigError::TooSmall { key, value, min })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.sigma_grid.len(), 21);
        assert_eq!(c.sigma_grid[9], 0.45);
        c.validate().unwrap();
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("rng_sed = 1").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[mechanism]\nlamda = 0.5").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = ExperimentConfig::default();
        c.mechanism.eta = 0.1;
        assert!(matches!(c.validate(), Err(ConfigError::Params(_))));

        let mut c = ExperimentConfig::default();
        c.sigma_grid.push(1.5);
        assert!(matches!(c.validate(), Err(ConfigError::SigmaGrid(_))));

        let mut c = ExperimentConfig::default();
        c.attack.shape = "star".into();
        assert!(matches!(c.validate(), Err(ConfigError::Shape(_))));

        let mut c = ExperimentConfig::default();
        c.population.groups = vec!["XX".into()];
        assert!(c.validate().is_err());

        let mut c = ExperimentConfig::default();
        c.population.mix.ho = 0.5;
        assert!(matches!(c.validate(), Err(ConfigError::Population(_))));

        let mut c = ExperimentConfig::default();
        c.network.actions = Some("a.csv".into());
        assert!(matches!(c.validate(), Err(ConfigError::MissingEdges(_))));
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.rng_seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c: ExperimentConfig =
            toml::from_str("[network]\nnodes = 300\n[population]\ngroups = [\"mixed\", \"ho\"]").unwrap();
        assert_eq!(c.network.nodes, 300);
        assert_eq!(c.network.p_max, 0.2);
        assert_eq!(
            c.populations().unwrap(),
            vec![PopulationKind::Mixed, PopulationKind::Group(AbilityGroup::Ho)]
        );
    }
}
