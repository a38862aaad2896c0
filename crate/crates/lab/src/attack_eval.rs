//! Normalized attacker reward against the number of false identities.

use std::path::Path;

use mwc_core::attack::{summarize, sweep_trial, SweepCell, SweepPlan, SweepRecord, TargetSampler};
use mwc_core::population::AbilityGroup;
use mwc_core::ReferralDag;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::formats::{write_csv_with_header, write_json, NetworkSummary};
use crate::network::NetworkSource;
use crate::simulate::run_campaign;
use crate::{derive_seed, seed_tag, LabError};

pub const ATTACK_HEADER: [&str; 8] = [
    "shape",
    "m",
    "sigma",
    "split",
    "trial",
    "baseline",
    "replica_total",
    "normalized",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackRow {
    pub shape: &'static str,
    pub m: usize,
    pub sigma: f64,
    pub split: &'static str,
    pub trial: usize,
    pub baseline: f64,
    pub replica_total: f64,
    pub normalized: f64,
}

impl From<&SweepRecord> for AttackRow {
    fn from(r: &SweepRecord) -> Self {
        AttackRow {
            shape: r.shape.label(),
            m: r.m,
            sigma: r.sigma,
            split: r.split.label(),
            trial: r.trial,
            baseline: r.baseline,
            replica_total: r.replica_total,
            normalized: r.normalized,
        }
    }
}

/// Size of the referral DAG attacked at one noise factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackedGraph {
    pub sigma: f64,
    pub nodes: usize,
    pub edges: usize,
    pub participants: usize,
}

/// Checks on one normalized-reward curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveCheck {
    pub sigma: f64,
    /// Every cell with at least one false identity has mean below 1.
    pub below_one: bool,
    /// Steps where the mean went up.
    pub inversions: usize,
    /// Largest rise, in standard errors of the later cell.
    pub worst_inversion_se: f64,
    /// Last step smaller than the first.
    pub flattening: bool,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct AttackEval {
    pub network: NetworkSummary,
    pub graphs: Vec<AttackedGraph>,
    pub records: Vec<SweepRecord>,
    pub cells: Vec<SweepCell>,
}

/// Grows one referral DAG per noise factor on the first network, with the
/// mixed population, then attacks sampled targets with `0..=K` false
/// identities. Trials run in parallel; records come back in
/// `(sigma, trial, m)` order.
pub fn run_attack_eval(config: &ExperimentConfig) -> Result<AttackEval, LabError> {
    let shape = config.attack.sweep_shape()?;
    let split = config.attack.split_strategy()?;
    let mixed = config.population.mix.group_mix()?;
    let network = NetworkSource::from_config(config)?.network(config, 0)?;
    let mixed_code = AbilityGroup::ALL.len() as u64;

    let dags: Vec<(ReferralDag, SweepPlan, u64)> = config
        .attack
        .sigmas
        .par_iter()
        .map(|&sigma| {
            let run = run_campaign(config, &network, &mixed, mixed_code, sigma, 0)?;
            let plan = SweepPlan {
                shape,
                false_identities: (0..=config.attack.max_false_identities).collect(),
                split,
                params: vec![run.params],
                repetitions: config.attack.repetitions,
                target: TargetSampler::UniformEligible,
            };
            let seed = derive_seed(config.rng_seed, &[seed_tag::ATTACK, sigma.to_bits()]);
            Ok((run.dag, plan, seed))
        })
        .collect::<Result<_, LabError>>()?;

    let trials: Vec<(usize, usize)> = (0..dags.len())
        .flat_map(|s| (0..config.attack.repetitions).map(move |t| (s, t)))
        .collect();
    let chunks: Vec<Vec<SweepRecord>> = trials
        .par_iter()
        .map(|&(s, trial)| {
            let (dag, plan, seed) = &dags[s];
            sweep_trial(dag, plan, *seed, trial)
        })
        .collect::<Result<_, _>>()?;
    let records: Vec<SweepRecord> = chunks.into_iter().flatten().collect();

    let graphs = config
        .attack
        .sigmas
        .iter()
        .zip(&dags)
        .map(|(&sigma, (dag, _, _))| AttackedGraph {
            sigma,
            nodes: dag.len(),
            edges: dag.edge_count(),
            participants: dag.efforts().iter().filter(|&&t| t > 0.0).count(),
        })
        .collect();
    Ok(AttackEval {
        network: network.summary,
        graphs,
        cells: summarize(&records),
        records,
    })
}

/// Applies the curve checks to every sigma of `cells`: below 1 for every
/// `m >= 1`, at most one rise and only by less than one standard error, and
/// a last step smaller than the first.
pub fn check_curves(cells: &[SweepCell]) -> Vec<CurveCheck> {
    let mut sigmas: Vec<f64> = Vec::new();
    for c in cells {
        if !sigmas.contains(&c.sigma) {
            sigmas.push(c.sigma);
        }
    }
    sigmas
        .into_iter()
        .map(|sigma| {
            let curve: Vec<&SweepCell> = cells.iter().filter(|c| c.sigma == sigma).collect();
            let below_one = curve.iter().filter(|c| c.m >= 1).all(|c| c.mean < 1.0);
            let mut inversions = 0;
            let mut worst = 0.0f64;
            for w in curve.windows(2) {
                let rise = w[1].mean - w[0].mean;
                if rise > 0.0 {
                    inversions += 1;
                    let se = w[1].standard_error();
                    worst = worst.max(if se > 0.0 { rise / se } else { f64::INFINITY });
                }
            }
            let k = curve.len();
            let flattening =
                k >= 3 && (curve[k - 1].mean - curve[k - 2].mean).abs() < (curve[1].mean - curve[0].mean).abs();
            let monotone = inversions == 0 || (inversions == 1 && worst < 1.0);
            CurveCheck {
                sigma,
                below_one,
                inversions,
                worst_inversion_se: worst,
                flattening,
                pass: below_one && monotone && flattening,
            }
        })
        .collect()
}

/// `attack_summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct AttackSummary<'a> {
    pub shape: &'static str,
    pub split: &'static str,
    pub network: NetworkSummary,
    pub graphs: &'a [AttackedGraph],
    pub cells: &'a [SweepCell],
    pub checks: Vec<CurveCheck>,
}

impl AttackEval {
    pub fn write(&self, dir: &Path, config: &ExperimentConfig) -> Result<(), LabError> {
        let rows: Vec<AttackRow> = self.records.iter().map(AttackRow::from).collect();
        write_csv_with_header(&dir.join("attack_results.csv"), &ATTACK_HEADER, &rows)?;
        let summary = AttackSummary {
            shape: config.attack.sweep_shape()?.label(),
            split: config.attack.split_strategy()?.label(),
            network: self.network,
            graphs: &self.graphs,
            cells: &self.cells,
            checks: check_curves(&self.cells),
        };
        write_json(&dir.join("attack_summary.json"), &summary)?;
        Ok(())
    }
}
