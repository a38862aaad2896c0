//! Wall time of the full credit and reward pass against graph size.

use std::path::Path;
use std::time::Instant;

use mwc_core::engine::compute_rewards;
use mwc_core::rng::substream;
use mwc_core::{CreditLedger, MechanismParams, NodeId, ReferralDag};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::formats::{write_csv_with_header, write_json};
use crate::{derive_seed, seed_tag, LabError};

/// A random sparse DAG: node `j` gets `min(j, in_degree)` distinct earlier
/// nodes as direct predecessors and an effort drawn from `(0, 1]`.
pub fn sparse_dag(n: usize, in_degree: usize, seed: u64) -> ReferralDag {
    let mut rng = substream(seed, 0);
    let mut dag = ReferralDag::with_capacity(n);
    let mut preds = Vec::with_capacity(in_degree);
    for j in 0..n {
        preds.clear();
        let k = in_degree.min(j);
        preds.extend(sample(&mut rng, j, k).into_iter().map(|i| NodeId::new(i as u32)));
        let t = 1.0 - rng.random::<f64>();
        dag.add_node(t, &preds).expect("earlier nodes, distinct");
    }
    dag
}

/// Credit replay and settlement on `dag`; returns milliseconds for each.
pub fn time_full_pass(dag: &ReferralDag, params: &MechanismParams) -> Result<(f64, f64), LabError> {
    let start = Instant::now();
    let ledger = CreditLedger::replay(dag, params);
    let credit_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let report = compute_rewards(dag, &ledger, params)?;
    let reward_ms = start.elapsed().as_secs_f64() * 1e3;
    std::hint::black_box(report.total_reward);
    Ok((credit_ms, reward_ms))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub edges: usize,
    pub credit_ms: f64,
    pub reward_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of `ln(total_ms)` on `ln(nodes)` over `rows`.
    pub exponent: f64,
    pub large: BenchRow,
}

/// Times every size single-threaded, keeping the fastest of the configured
/// repetitions, then one run at the large size.
pub fn run_bench(config: &ExperimentConfig) -> Result<BenchResult, LabError> {
    let b = &config.bench;
    let params = config.params(b.sigma)?;
    let measure = |n: usize| -> Result<BenchRow, LabError> {
        let dag = sparse_dag(
            n,
            b.avg_degree,
            derive_seed(config.rng_seed, &[seed_tag::BENCH, n as u64]),
        );
        let mut best: Option<BenchRow> = None;
        for _ in 0..b.repetitions {
            let (credit_ms, reward_ms) = time_full_pass(&dag, &params)?;
            let row = BenchRow {
                nodes: n,
                edges: dag.edge_count(),
                credit_ms,
                reward_ms,
                total_ms: credit_ms + reward_ms,
            };
            if best.is_none_or(|r| row.total_ms < r.total_ms) {
                best = Some(row);
            }
        }
        Ok(best.expect("at least one repetition"))
    };
    let rows = b.sizes.iter().map(|&n| measure(n)).collect::<Result<Vec<_>, _>>()?;
    let exponent = growth_exponent(&rows.iter().map(|r| (r.nodes as f64, r.total_ms)).collect::<Vec<_>>());
    let large = measure(b.large)?;
    Ok(BenchResult { rows, exponent, large })
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn growth_exponent(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

impl BenchResult {
    pub fn write(&self, dir: &Path) -> Result<(), LabError> {
        let header = ["nodes", "edges", "credit_ms", "reward_ms", "total_ms"];
        let all: Vec<BenchRow> = self.rows.iter().copied().chain([self.large]).collect();
        write_csv_with_header(&dir.join("bench.csv"), &header, &all)?;
        write_json(&dir.join("bench_summary.json"), self)?;
        Ok(())
    }
}
