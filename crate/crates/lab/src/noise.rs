//! Total effort as a function of the noise factor, per population.

use std::path::Path;
use std::time::Instant;

use mwc_core::population::AbilityGroup;
use mwc_core::ReferralDag;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, PopulationKind};
use crate::formats::{write_csv_with_header, write_dag, write_json};
use crate::network::{Network, NetworkSource};
use crate::simulate::run_campaign;
use crate::LabError;

pub const RESULT_HEADER: [&str; 9] = [
    "experiment_id",
    "sigma",
    "repetition",
    "total_effort",
    "participant_count",
    "avg_effort_per_player",
    "total_payout",
    "payout_ratio",
    "wall_time_ms",
];

/// One campaign of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub sigma: f64,
    pub repetition: usize,
    pub total_effort: f64,
    pub participant_count: usize,
    pub avg_effort_per_player: f64,
    pub total_payout: f64,
    /// `total_payout / ((mu + phi) * total_effort)`.
    pub payout_ratio: f64,
    pub wall_time_ms: f64,
}

/// A row whose payout exceeded the budget, with the DAG that produced it.
#[derive(Clone, Debug)]
pub struct BudgetViolation {
    pub row: ResultRow,
    pub dag: ReferralDag,
}

#[derive(Clone, Debug)]
pub struct NoiseSweep {
    pub rows: Vec<ResultRow>,
    pub violations: Vec<BudgetViolation>,
}

fn population_code(p: PopulationKind) -> u64 {
    match p {
        PopulationKind::Group(g) => AbilityGroup::ALL.iter().position(|&x| x == g).expect("listed") as u64,
        PopulationKind::Mixed => AbilityGroup::ALL.len() as u64,
    }
}

pub fn experiment_id(p: PopulationKind) -> String {
    format!("noise-{}", p.label())
}

/// Runs every `(population, sigma, repetition)` cell. Cells run in parallel
/// on the current rayon pool; rows come back in cell order.
pub fn run_noise_sweep(config: &ExperimentConfig) -> Result<NoiseSweep, LabError> {
    let populations = config.populations()?;
    let mixed = config.population.mix.group_mix()?;
    let source = NetworkSource::from_config(config)?;
    let networks: Vec<Network> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| source.network(config, rep))
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    for &p in &populations {
        for &sigma in &config.sigma_grid {
            for rep in 0..config.repetitions {
                cells.push((p, sigma, rep));
            }
        }
    }
    let results: Vec<(ResultRow, Option<ReferralDag>)> = cells
        .par_iter()
        .map(|&(p, sigma, rep)| {
            let start = Instant::now();
            let run = run_campaign(config, &networks[rep], &p.mix(&mixed), population_code(p), sigma, rep)?;
            let report = &run.report;
            let ratio = report.payout_ratio(&run.params);
            let row = ResultRow {
                experiment_id: experiment_id(p),
                sigma,
                repetition: rep,
                total_effort: report.total_effort,
                participant_count: report.participants,
                avg_effort_per_player: if report.participants > 0 {
                    report.total_effort / report.participants as f64
                } else {
                    0.0
                },
                total_payout: report.total_reward,
                payout_ratio: ratio,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            let offending = (ratio > 1.0).then_some(run.dag);
            Ok((row, offending))
        })
        .collect::<Result<_, LabError>>()?;

    let mut rows = Vec::with_capacity(results.len());
    let mut violations = Vec::new();
    for (row, dag) in results {
        if let Some(dag) = dag {
            violations.push(BudgetViolation { row: row.clone(), dag });
        }
        rows.push(row);
    }
    Ok(NoiseSweep { rows, violations })
}

/// Mean statistics of one `(experiment, sigma)` point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub sigma: f64,
    pub runs: usize,
    pub mean_total_effort: f64,
    pub stderr_total_effort: f64,
    pub mean_participants: f64,
    pub mean_avg_effort: f64,
    pub mean_payout_ratio: f64,
    pub max_payout_ratio: f64,
}

/// Groups rows by experiment and sigma, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(e, s)| e == r.experiment_id && s == r.sigma) {
            keys.push((&r.experiment_id, r.sigma));
        }
    }
    keys.into_iter()
        .map(|(e, s)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.experiment_id == e && r.sigma == s).collect();
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&ResultRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            let m = mean(&|r| r.total_effort);
            let var = if group.len() > 1 {
                group.iter().map(|r| (r.total_effort - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                experiment_id: e.to_string(),
                sigma: s,
                runs: group.len(),
                mean_total_effort: m,
                stderr_total_effort: (var / n).sqrt(),
                mean_participants: mean(&|r| r.participant_count as f64),
                mean_avg_effort: mean(&|r| r.avg_effort_per_player),
                mean_payout_ratio: mean(&|r| r.payout_ratio),
                max_payout_ratio: group.iter().map(|r| r.payout_ratio).fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Shape of one effort-versus-sigma curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveShape {
    pub experiment_id: String,
    pub peak_sigma: f64,
    pub peak_effort: f64,
    pub lowest_sigma: f64,
    pub lowest_sigma_effort: f64,
    /// `1 - effort(lowest sigma) / effort(peak)`.
    pub drop_at_lowest: f64,
    /// Peak strictly between the smallest and largest sigma of the grid.
    pub interior_peak: bool,
}

/// Peak location and the drop at the smallest sigma for every experiment.
pub fn curve_shapes(summary: &[SummaryRow]) -> Vec<CurveShape> {
    let mut ids: Vec<&str> = Vec::new();
    for r in summary {
        if !ids.contains(&r.experiment_id.as_str()) {
            ids.push(&r.experiment_id);
        }
    }
    ids.into_iter()
        .map(|id| {
            let curve: Vec<&SummaryRow> = summary.iter().filter(|r| r.experiment_id == id).collect();
            // first maximum wins ties
            let peak = curve.iter().fold(curve[0], |best, r| {
                if r.mean_total_effort > best.mean_total_effort {
                    r
                } else {
                    best
                }
            });
            let lowest = curve
                .iter()
                .fold(curve[0], |a, r| if r.sigma < a.sigma { r } else { a });
            let highest = curve.iter().map(|r| r.sigma).fold(f64::NEG_INFINITY, f64::max);
            CurveShape {
                experiment_id: id.to_string(),
                peak_sigma: peak.sigma,
                peak_effort: peak.mean_total_effort,
                lowest_sigma: lowest.sigma,
                lowest_sigma_effort: lowest.mean_total_effort,
                drop_at_lowest: if peak.mean_total_effort > 0.0 {
                    1.0 - lowest.mean_total_effort / peak.mean_total_effort
                } else {
                    0.0
                },
                interior_peak: peak.sigma > lowest.sigma && peak.sigma < highest,
            }
        })
        .collect()
}

/// `budget_audit.json`.
#[derive(Clone, Debug, Serialize)]
pub struct BudgetAudit {
    pub rows: usize,
    pub max_payout_ratio: f64,
    pub violations: Vec<ResultRow>,
}

impl NoiseSweep {
    pub fn audit(&self) -> BudgetAudit {
        BudgetAudit {
            rows: self.rows.len(),
            max_payout_ratio: self.rows.iter().map(|r| r.payout_ratio).fold(0.0, f64::max),
            violations: self.violations.iter().map(|v| v.row.clone()).collect(),
        }
    }

    /// Writes results, summary, curve shapes and the budget audit. Offending
    /// DAGs go to `budget_violations/`.
    pub fn write(&self, dir: &Path) -> Result<(), LabError> {
        write_csv_with_header(&dir.join("noise_results.csv"), &RESULT_HEADER, &self.rows)?;
        let summary = summarize(&self.rows);
        write_csv_with_header(
            &dir.join("noise_summary.csv"),
            &[
                "experiment_id",
                "sigma",
                "runs",
                "mean_total_effort",
                "stderr_total_effort",
                "mean_participants",
                "mean_avg_effort",
                "mean_payout_ratio",
                "max_payout_ratio",
            ],
            &summary,
        )?;
        write_json(&dir.join("noise_curves.json"), &curve_shapes(&summary))?;
        write_json(&dir.join("budget_audit.json"), &self.audit())?;
        if !self.violations.is_empty() {
            let vdir = dir.join("budget_violations");
            std::fs::create_dir_all(&vdir).map_err(|source| LabError::Io {
                context: format!("cannot create {}", vdir.display()),
                source,
            })?;
            for v in &self.violations {
                let name = format!(
                    "{}-sigma{}-rep{}.txt",
                    v.row.experiment_id, v.row.sigma, v.row.repetition
                );
                write_dag(&vdir.join(name), &v.dag)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, sigma: f64, effort: f64) -> ResultRow {
        ResultRow {
            experiment_id: id.into(),
            sigma,
            repetition: 0,
            total_effort: effort,
            participant_count: 1,
            avg_effort_per_player: effort,
            total_payout: 0.0,
            payout_ratio: 0.5,
            wall_time_ms: 0.0,
        }
    }

    #[test]
    fn summary_and_shape() {
        let rows = vec![
            row("a", 0.0, 1.0),
            row("a", 0.0, 3.0),
            row("a", 0.5, 10.0),
            row("a", 0.5, 10.0),
            row("a", 1.0, 4.0),
            row("a", 1.0, 4.0),
            row("b", 0.0, 5.0),
            row("b", 1.0, 6.0),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].mean_total_effort, 2.0);
        assert!((s[0].stderr_total_effort - 1.0).abs() < 1e-12);
        let shapes = curve_shapes(&s);
        assert_eq!(shapes[0].peak_sigma, 0.5);
        assert!(shapes[0].interior_peak);
        assert!((shapes[0].drop_at_lowest - 0.8).abs() < 1e-12);
        assert_eq!(shapes[1].peak_sigma, 1.0);
        assert!(!shapes[1].interior_peak);
    }
}
