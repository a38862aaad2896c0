//! Randomized property suite for the mechanism.
//!
//! Each property draws its instances from its own random stream per trial,
//! so reports are identical for any number of worker threads.

use mwc_core::attack::{evaluate_attack, AttackSpec, SplitStrategy, SuccessorPolicy, SweepShape};
use mwc_core::engine::{compute_rewards, contestants, utility, ContestScratch};
use mwc_core::oracle::compute_credits_bruteforce;
use mwc_core::rng::{stream_key, substream, StreamRng};
use mwc_core::{CreditLedger, MechanismParams, NodeId, ReferralDag};
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::VerifySection;

/// Outcome of one property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub trials: usize,
    /// Individual assertions made across all trials.
    pub checks: usize,
    pub violations: usize,
    /// Property-specific extreme value (largest error, ratio or gain seen).
    pub worst: f64,
    pub first_violation: Option<String>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checks > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub properties: Vec<PropertyReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyReport::passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyReport> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// What a single trial found.
#[derive(Clone, Debug, Default)]
struct Trial {
    checks: usize,
    violations: usize,
    worst: f64,
    first: Option<String>,
}

impl Trial {
    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.first.is_none() {
                self.first = Some(describe());
            }
        }
    }

    fn observe(&mut self, value: f64) {
        if value > self.worst || self.worst.is_nan() {
            self.worst = value;
        }
    }
}

fn run_property<F>(name: &str, id: u64, trials: usize, seed: u64, trial: F) -> PropertyReport
where
    F: Fn(&mut StreamRng, usize) -> Trial + Sync,
{
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|i| trial(&mut substream(seed, stream_key(&[id, i as u64])), i))
        .collect();
    let mut report = PropertyReport {
        name: name.to_string(),
        trials,
        checks: 0,
        violations: 0,
        worst: 0.0,
        first_violation: None,
    };
    for (i, t) in results.into_iter().enumerate() {
        report.checks += t.checks;
        report.violations += t.violations;
        report.worst = report.worst.max(t.worst);
        if report.first_violation.is_none() {
            report.first_violation = t.first.map(|m| format!("trial {i}: {m}"));
        }
    }
    report
}

/// Valid parameters with `eta >= lambda / 2`.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> MechanismParams {
    let lambda = rng.random_range(0.05..0.95);
    MechanismParams::new(
        lambda,
        lambda / 2.0 + rng.random_range(0.0..1.0),
        rng.random_range(0.05..1.0),
        rng.random_range(0.01..0.5),
        sigma,
    )
    .expect("drawn inside the valid region")
}

fn random_sigma<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    *[0.0, 0.25, 0.5, 0.75, 1.0].choose(rng).expect("non-empty")
}

fn any_params<R: Rng + ?Sized>(rng: &mut R) -> MechanismParams {
    let sigma = random_sigma(rng);
    random_params(rng, sigma)
}

fn random_dag<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    edge_prob: std::ops::Range<f64>,
    zero_effort_prob: f64,
) -> ReferralDag {
    let p = rng.random_range(edge_prob);
    ReferralDag::random(rng, n, p, zero_effort_prob)
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Whether some node of `G_v` other than `v` has positive effort.
fn has_active_successor(dag: &ReferralDag, v: NodeId) -> bool {
    dag.successors(v)
        .map(|s| s.iter().any(|&u| dag.task_effort(u) > 0.0))
        .unwrap_or(false)
}

pub fn oracle_equivalence(trials: usize, seed: u64) -> PropertyReport {
    run_property("oracle_equivalence", 1, trials, seed, |rng, _| {
        let n = rng.random_range(1..=15);
        let g = random_dag(rng, n, 0.1..0.5, 0.0);
        let params = random_params(rng, 0.5);
        let fast = CreditLedger::replay(&g, &params);
        let slow = compute_credits_bruteforce(&g, &params).expect("within the size limit");
        let mut t = Trial::default();
        for v in g.node_ids() {
            let err = relative_error(fast.credit(v), slow.credit(v));
            t.observe(err);
            t.check(err <= 1e-9, || {
                format!(
                    "node {v}: ledger {} vs formula {} on {n} nodes",
                    fast.credit(v),
                    slow.credit(v)
                )
            });
        }
        t
    })
}

/// Attack shapes cycle through chain, parallel shared, parallel partitioned
/// and hybrid; targets, splits and parameters are random.
pub fn false_name_proofness(trials: usize, seed: u64) -> PropertyReport {
    run_property("false_name_proofness", 2, trials, seed, |rng, i| {
        let mut t = Trial::default();
        let shape = match i % 4 {
            0 => SweepShape::Chain,
            1 => SweepShape::Parallel(SuccessorPolicy::Shared),
            2 => SweepShape::Parallel(SuccessorPolicy::Partitioned),
            _ => SweepShape::Hybrid {
                block_size: rng.random_range(2..=3),
                policy: if rng.random_bool(0.5) {
                    SuccessorPolicy::Shared
                } else {
                    SuccessorPolicy::Partitioned
                },
            },
        };
        let m = rng.random_range(2..=8);
        let sigma = *[0.25, 0.5, 0.75, 1.0].choose(rng).expect("non-empty");
        let params = random_params(rng, sigma);
        let need = shape.successors_needed(m);
        for _ in 0..200 {
            let n = rng.random_range(3..=14);
            let g = random_dag(rng, n, 0.15..0.5, 0.1);
            let eligible: Vec<NodeId> = g
                .node_ids()
                .filter(|&v| g.task_effort(v) > 0.0 && g.out_degree(v) >= need)
                .collect();
            let Some(&target) = eligible.choose(rng) else { continue };
            let split = SplitStrategy::Dirichlet.split(g.task_effort(target), m, rng);
            let spec = AttackSpec {
                target,
                shape: shape.attack_shape(m),
                effort_split: split,
            };
            let o = evaluate_attack(&g, &params, &spec).expect("valid attack");
            let gain = o.profit / o.baseline_reward;
            t.observe(gain);
            let strict = has_active_successor(&g, target);
            let ok = if strict { o.profit < 0.0 } else { gain <= 1e-12 };
            t.check(ok, || {
                format!(
                    "{} attack with {m} replicas on node {target} (sigma {sigma}) earns {} against {} ({:+.3e}); graph:\n{}",
                    shape.label(),
                    o.replica_total,
                    o.baseline_reward,
                    gain,
                    crate::formats::dag_to_string(&g)
                )
            });
            return t;
        }
        t
    })
}

/// Every contestant with an active successor gets a positive diffusion
/// reward, and a positive utility when its cost is below `mu`.
pub fn individual_rationality(trials: usize, seed: u64) -> PropertyReport {
    run_property("individual_rationality", 3, trials, seed, |rng, _| {
        let n = rng.random_range(2..=30);
        let g = random_dag(rng, n, 0.05..0.4, 0.2);
        let params = any_params(rng);
        let report = compute_rewards(&g, &CreditLedger::replay(&g, &params), &params).expect("consistent ledger");
        let mut t = Trial::default();
        for v in g.node_ids() {
            let delta = rng.random_range(0.01..0.99);
            if g.task_effort(v) <= 0.0 || !has_active_successor(&g, v) {
                continue;
            }
            let row = report.rows[v.index()];
            t.check(row.diffusion_reward > 0.0, || {
                format!("node {v}: diffusion reward {}", row.diffusion_reward)
            });
            if delta < params.mu {
                let u = utility(&report, v, delta).expect("valid cost");
                t.check(u > 0.0, || {
                    format!("node {v}: utility {u} with delta {delta} < mu {}", params.mu)
                });
            }
        }
        t
    })
}

pub fn budget(trials: usize, seed: u64) -> PropertyReport {
    run_property("budget", 4, trials, seed, |rng, _| {
        let n = rng.random_range(1..=60);
        let g = random_dag(rng, n, 0.02..0.4, 0.2);
        let params = any_params(rng);
        let report = compute_rewards(&g, &CreditLedger::replay(&g, &params), &params).expect("consistent ledger");
        let ratio = report.payout_ratio(&params);
        let mut t = Trial::default();
        t.observe(ratio);
        t.check(ratio <= 1.0, || {
            format!(
                "payout ratio {ratio} with {params:?}; graph:\n{}",
                crate::formats::dag_to_string(&g)
            )
        });
        t
    })
}

/// A newcomer attached directly to `v2` raises the diffusion reward of an
/// ancestor `v1` at least as much as the same newcomer attached to any
/// successor of `v2`.
pub fn monotonicity(trials: usize, seed: u64) -> PropertyReport {
    run_property("monotonicity", 5, trials, seed, |rng, _| {
        let mut t = Trial::default();
        for _ in 0..200 {
            let n = rng.random_range(3..=20);
            let g = random_dag(rng, n, 0.1..0.5, 0.1);
            // (v1, v2) with v1 active, v2 a successor of v1 that has successors
            let pairs: Vec<(NodeId, NodeId)> = g
                .node_ids()
                .filter(|&v| g.task_effort(v) > 0.0)
                .flat_map(|v1| {
                    g.successors(v1)
                        .expect("known node")
                        .into_iter()
                        .filter(|&v2| g.out_degree(v2) > 0)
                        .map(move |v2| (v1, v2))
                })
                .collect();
            let Some(&(v1, v2)) = pairs.choose(rng) else { continue };
            let effort = 1.0 - rng.random::<f64>();
            let params = any_params(rng);
            let pi_d = |attach: NodeId| {
                let mut h = g.clone();
                h.add_node(effort, &[attach]).expect("existing node");
                let report =
                    compute_rewards(&h, &CreditLedger::replay(&h, &params), &params).expect("consistent ledger");
                report.rows[v1.index()].diffusion_reward
            };
            let near = pi_d(v2);
            for w in g.successors(v2).expect("known node") {
                let far = pi_d(w);
                t.observe(far - near);
                t.check(near >= far - 1e-12, || {
                    format!(
                        "v1 {v1}: newcomer under {v2} gives {near}, under {w} gives {far} (sigma {}); graph:\n{}",
                        params.sigma,
                        crate::formats::dag_to_string(&g)
                    )
                });
            }
            return t;
        }
        t
    })
}

/// Changes outside `G_v` leave every field of `v`'s reward bit-identical.
pub fn subgraph_constraint(trials: usize, seed: u64) -> PropertyReport {
    run_property("subgraph_constraint", 6, trials, seed, |rng, _| {
        let n = rng.random_range(2..=25);
        let mut g = random_dag(rng, n, 0.05..0.4, 0.15);
        let params = any_params(rng);
        let v = NodeId::new(rng.random_range(0..n as u32));
        let before = compute_rewards(&g, &CreditLedger::replay(&g, &params), &params)
            .expect("consistent ledger")
            .rows[v.index()];
        let inside = g.rooted_subgraph(v).expect("known node").nodes().to_vec();
        let outside: Vec<NodeId> = g.node_ids().filter(|u| !inside.contains(u)).collect();
        let effort = if rng.random_bool(0.2) {
            0.0
        } else {
            1.0 - rng.random::<f64>()
        };
        let mutation = match rng.random_range(0..3) {
            0 if !outside.is_empty() => {
                let u = *outside.choose(rng).expect("non-empty");
                g.set_task_effort(u, effort).expect("known node");
                format!("effort of {u} set to {effort}")
            }
            1 => {
                let preds = g.direct_predecessors(v).to_vec();
                g.add_node(effort, &preds).expect("existing nodes");
                "sibling added".to_string()
            }
            _ => {
                let k = rng.random_range(0..=outside.len().min(3));
                let preds: Vec<NodeId> = outside.choose_multiple(rng, k).copied().collect();
                g.add_node(effort, &preds).expect("existing nodes");
                format!("node added under {preds:?}")
            }
        };
        let after = compute_rewards(&g, &CreditLedger::replay(&g, &params), &params)
            .expect("consistent ledger")
            .rows[v.index()];
        let mut t = Trial::default();
        t.check(before == after, || {
            format!("node {v}: {mutation} changed {before:?} into {after:?}")
        });
        t
    })
}

/// Equal credits give equal odds, and sigma = 0 gives equal odds whatever
/// the credits.
pub fn csf_uniformity(trials: usize, seed: u64) -> PropertyReport {
    run_property("csf_uniformity", 7, trials, seed, |rng, _| {
        let mut t = Trial::default();
        // a star: the root's contest holds every node
        let n = rng.random_range(1..=50);
        let mut star = ReferralDag::new();
        let root = star.add_node(1.0, &[]).expect("seed");
        for _ in 1..n {
            star.add_node(1.0, &[root]).expect("existing node");
        }
        let credit = rng.random_range(0.01..10.0);
        for sigma in [0.0, 0.5, 1.0] {
            let params = MechanismParams::standard(sigma).expect("valid sigma");
            let weights = vec![params.csf_weight(credit); n];
            let contest = ContestScratch::new().evaluate(&star, &weights, root);
            for w in &weights {
                let p = w / contest.weight_sum;
                t.observe((p - 1.0 / n as f64).abs());
                t.check((p - 1.0 / n as f64).abs() <= 1e-12, || {
                    format!("{n} equal contestants at sigma {sigma}: probability {p}")
                });
            }
        }
        let m = rng.random_range(1..=20);
        let g = random_dag(rng, m, 0.1..0.5, 0.2);
        let params = random_params(rng, 0.0);
        let report = compute_rewards(&g, &CreditLedger::replay(&g, &params), &params).expect("consistent ledger");
        for v in g.node_ids().filter(|&v| g.task_effort(v) > 0.0) {
            let k = contestants(&g, v).expect("known node").len();
            let p = report.rows[v.index()].win_probability;
            t.observe((p - 1.0 / k as f64).abs());
            t.check((p - 1.0 / k as f64).abs() <= 1e-12, || {
                format!("sigma 0, node {v} among {k} contestants: probability {p}")
            });
        }
        t
    })
}

/// Scaling every effort by `c` scales every task reward by `c`.
pub fn task_reward_scaling(trials: usize, seed: u64) -> PropertyReport {
    run_property("task_reward_scaling", 8, trials, seed, |rng, _| {
        let n = rng.random_range(1..=20);
        let g = random_dag(rng, n, 0.1..0.5, 0.2);
        let params = any_params(rng);
        let c = rng.random_range(0.1..10.0);
        let mut h = g.clone();
        for v in g.node_ids() {
            h.set_task_effort(v, c * g.task_effort(v)).expect("known node");
        }
        let a = compute_rewards(&g, &CreditLedger::replay(&g, &params), &params).expect("consistent ledger");
        let b = compute_rewards(&h, &CreditLedger::replay(&h, &params), &params).expect("consistent ledger");
        let mut t = Trial::default();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            let err = relative_error(c * x.task_reward, y.task_reward);
            t.observe(err);
            t.check(err <= 1e-12, || {
                format!("node {}: {} scaled by {c} vs {}", x.node, x.task_reward, y.task_reward)
            });
        }
        t
    })
}

/// Runs every property with the configured trial counts.
pub fn run_suite(counts: &VerifySection, seed: u64) -> SuiteReport {
    SuiteReport {
        seed,
        properties: vec![
            oracle_equivalence(counts.oracle_trials, seed),
            false_name_proofness(counts.attack_trials, seed),
            individual_rationality(counts.rationality_trials, seed),
            budget(counts.budget_trials, seed),
            monotonicity(counts.monotonicity_trials, seed),
            subgraph_constraint(counts.subgraph_trials, seed),
            csf_uniformity(counts.csf_trials, seed),
            task_reward_scaling(counts.csf_trials, seed),
        ],
    }
}
