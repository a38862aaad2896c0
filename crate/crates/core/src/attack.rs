//! False-name attacks.
//!
//! An attack replaces one participant `v` by `m >= 2` replicas whose efforts
//! sum to `t_v`. Replicas are arranged as a chain of blocks: the first block
//! inherits `v`'s direct predecessors, every replica of a block refers every
//! replica of the next block, and the last block inherits `v`'s direct
//! successors. A chain attack is the layout `[1, 1, ..., 1]`, a parallel
//! attack is `[m]`, anything else is a hybrid.
//!
//! The last block either shares all of `v`'s successors (each successor's
//! in-degree grows by `|block| - 1`) or partitions them round-robin, which
//! leaves every in-degree unchanged.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

use crate::engine::{ContestScratch, CreditLedger, EngineError, MechanismParams, RewardEvaluator};
use crate::graph::{GraphError, NodeId, ReferralDag};
use crate::rng::{stream_key, substream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("an attack needs at least two replicas, got {0}")]
    TooFewReplicas(usize),
    #[error("replica layout {layout_total} does not match {replicas} effort shares")]
    Layout { layout_total: usize, replicas: usize },
    #[error("replica layout contains an empty block")]
    EmptyBlock,
    #[error("effort share {index} must be positive, got {value}")]
    NonPositiveShare { index: usize, value: f64 },
    #[error("effort shares sum to {sum}, target effort is {effort}")]
    SplitSum { sum: f64, effort: f64 },
    #[error("target {0} exerted no effort")]
    ZeroEffortTarget(NodeId),
    #[error("target {node} has {available} direct successors, the replicas need {needed}")]
    TooFewSuccessors {
        node: NodeId,
        needed: usize,
        available: usize,
    },
    #[error("no node is eligible as an attack target")]
    NoEligibleTarget,
}

/// How the last replica block inherits the target's direct successors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum SuccessorPolicy {
    /// Every replica of the block refers every successor.
    Shared,
    /// Successors are dealt round-robin to the replicas of the block.
    Partitioned,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttackShape {
    /// `r_1 -> r_2 -> ... -> r_m`.
    Chain,
    /// All replicas side by side.
    Parallel(SuccessorPolicy),
    /// Chain of parallel blocks with the given sizes.
    Hybrid {
        blocks: Vec<usize>,
        policy: SuccessorPolicy,
    },
}

impl AttackShape {
    /// Block sizes for `m` replicas.
    pub fn layout(&self, m: usize) -> Vec<usize> {
        match self {
            AttackShape::Chain => vec![1; m],
            AttackShape::Parallel(_) => vec![m],
            AttackShape::Hybrid { blocks, .. } => blocks.clone(),
        }
    }

    pub fn policy(&self) -> SuccessorPolicy {
        match self {
            AttackShape::Chain => SuccessorPolicy::Shared,
            AttackShape::Parallel(p) => *p,
            AttackShape::Hybrid { policy, .. } => *policy,
        }
    }
}

/// A fully specified attack on one node.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub target: NodeId,
    pub shape: AttackShape,
    /// Effort of each replica, in layout order.
    pub effort_split: Vec<f64>,
}

impl AttackSpec {
    pub fn replicas(&self) -> usize {
        self.effort_split.len()
    }

    /// Checks the spec against `dag`.
    pub fn validate(&self, dag: &ReferralDag) -> Result<(), AttackError> {
        let m = self.effort_split.len();
        if m < 2 {
            return Err(AttackError::TooFewReplicas(m));
        }
        if !dag.contains(self.target) {
            return Err(GraphError::UnknownNode(self.target).into());
        }
        let layout = self.shape.layout(m);
        if layout.contains(&0) {
            return Err(AttackError::EmptyBlock);
        }
        let total: usize = layout.iter().sum();
        if total != m {
            return Err(AttackError::Layout {
                layout_total: total,
                replicas: m,
            });
        }
        let effort = dag.task_effort(self.target);
        if effort <= 0.0 {
            return Err(AttackError::ZeroEffortTarget(self.target));
        }
        for (index, &value) in self.effort_split.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(AttackError::NonPositiveShare { index, value });
            }
        }
        let sum = self.effort_split.iter().fold(0.0, |a, &b| a + b);
        if sum != effort {
            return Err(AttackError::SplitSum { sum, effort });
        }
        let needed = match self.shape.policy() {
            SuccessorPolicy::Shared => 1,
            SuccessorPolicy::Partitioned => *layout.last().unwrap_or(&1),
        };
        let available = dag.out_degree(self.target);
        if available < needed {
            return Err(AttackError::TooFewSuccessors {
                node: self.target,
                needed,
                available,
            });
        }
        Ok(())
    }
}

/// The graph after an attack.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackedDag {
    pub dag: ReferralDag,
    /// Replica ids in layout order.
    pub replicas: Vec<NodeId>,
    /// Id of every original node in the new graph; `None` for the target.
    pub node_map: Vec<Option<NodeId>>,
}

/// Builds the attacked graph.
pub fn apply_attack(dag: &ReferralDag, spec: &AttackSpec) -> Result<AttackedDag, AttackError> {
    spec.validate(dag)?;
    let v = spec.target;
    let m = spec.replicas();
    let layout = spec.shape.layout(m);
    let policy = spec.shape.policy();
    let successors = dag.direct_successors(v);

    let mut out = ReferralDag::with_capacity(dag.len() + m - 1);
    let mut node_map: Vec<Option<NodeId>> = vec![None; dag.len()];
    let mut replicas = Vec::with_capacity(m);
    let mut last_block: Vec<NodeId> = Vec::new();
    let mut preds = Vec::new();

    for x in dag.node_ids() {
        if x == v {
            let mut prev: Vec<NodeId> = dag
                .direct_predecessors(v)
                .iter()
                .map(|p| node_map[p.index()].expect("predecessors join first"))
                .collect();
            let mut share = 0;
            for &size in &layout {
                let mut block = Vec::with_capacity(size);
                for _ in 0..size {
                    let id = out.add_node(spec.effort_split[share], &prev)?;
                    share += 1;
                    block.push(id);
                }
                replicas.extend_from_slice(&block);
                prev = block;
            }
            last_block = prev;
            continue;
        }
        preds.clear();
        for &p in dag.direct_predecessors(x) {
            if p == v {
                match policy {
                    SuccessorPolicy::Shared => preds.extend_from_slice(&last_block),
                    SuccessorPolicy::Partitioned => {
                        let slot = successors.iter().position(|&s| s == x).expect("x succeeds v");
                        preds.push(last_block[slot % last_block.len()]);
                    }
                }
            } else {
                preds.push(node_map[p.index()].expect("predecessors join first"));
            }
        }
        node_map[x.index()] = Some(out.add_node(dag.task_effort(x), &preds)?);
    }
    Ok(AttackedDag {
        dag: out,
        replicas,
        node_map,
    })
}

/// Merges `replicas` (contiguous in join order) back into one node carrying
/// their summed effort. Applied to an attacked graph this recovers the
/// original graph exactly.
pub fn collapse_replicas(dag: &ReferralDag, replicas: &[NodeId]) -> Result<ReferralDag, GraphError> {
    let Some(&first) = replicas.iter().min() else {
        return Ok(dag.clone());
    };
    let is_replica = |x: NodeId| replicas.contains(&x);
    let mut out = ReferralDag::with_capacity(dag.len());
    let mut map: Vec<Option<NodeId>> = vec![None; dag.len()];
    let mut merged: Option<NodeId> = None;
    let mut preds = Vec::new();
    for x in dag.node_ids() {
        if is_replica(x) {
            if x == first {
                preds.clear();
                for &r in replicas {
                    for &p in dag.direct_predecessors(r) {
                        if !is_replica(p) {
                            let id = map[p.index()].ok_or(GraphError::UnknownNode(p))?;
                            if !preds.contains(&id) {
                                preds.push(id);
                            }
                        }
                    }
                }
                let effort = replicas.iter().fold(0.0, |a, &r| a + dag.task_effort(r));
                merged = Some(out.add_node(effort, &preds)?);
            }
            map[x.index()] = merged;
            continue;
        }
        preds.clear();
        for &p in dag.direct_predecessors(x) {
            let id = map[p.index()].ok_or(GraphError::UnknownNode(p))?;
            if !preds.contains(&id) {
                preds.push(id);
            }
        }
        map[x.index()] = Some(out.add_node(dag.task_effort(x), &preds)?);
    }
    Ok(out)
}

/// Rewards before and after an attack.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackOutcome {
    pub target: NodeId,
    /// `pi(v)` in the original graph.
    pub baseline_reward: f64,
    /// `pi(r)` for every replica in the attacked graph, layout order.
    pub replica_rewards: Vec<f64>,
    pub replica_total: f64,
    /// `replica_total - baseline_reward`; positive means the attack pays.
    pub profit: f64,
}

impl AttackOutcome {
    pub fn is_profitable(&self) -> bool {
        self.profit > 0.0
    }
}

/// Runs the mechanism on the original and the attacked graph.
pub fn evaluate_attack(
    dag: &ReferralDag,
    params: &MechanismParams,
    spec: &AttackSpec,
) -> Result<AttackOutcome, AttackError> {
    spec.validate(dag)?;
    let ledger = CreditLedger::replay(dag, params);
    let eval = RewardEvaluator::new(dag, &ledger, params)?;
    let baseline = eval.node_reward(spec.target, &mut ContestScratch::new()).total_reward;
    evaluate_against(dag, params, spec, baseline)
}

fn evaluate_against(
    dag: &ReferralDag,
    params: &MechanismParams,
    spec: &AttackSpec,
    baseline: f64,
) -> Result<AttackOutcome, AttackError> {
    let attacked = apply_attack(dag, spec)?;
    let ledger = CreditLedger::replay(&attacked.dag, params);
    let eval = RewardEvaluator::new(&attacked.dag, &ledger, params)?;
    let mut scratch = ContestScratch::new();
    let replica_rewards: Vec<f64> = attacked
        .replicas
        .iter()
        .map(|&r| eval.node_reward(r, &mut scratch).total_reward)
        .collect();
    let replica_total = replica_rewards.iter().sum::<f64>();
    Ok(AttackOutcome {
        target: spec.target,
        baseline_reward: baseline,
        replica_rewards,
        replica_total,
        profit: replica_total - baseline,
    })
}

/// How a target's effort is divided among its replicas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum SplitStrategy {
    Equal,
    /// Flat Dirichlet shares.
    Dirichlet,
}

impl SplitStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            SplitStrategy::Equal => "equal",
            SplitStrategy::Dirichlet => "dirichlet",
        }
    }

    /// `m` positive shares whose left-to-right sum is exactly `total`.
    pub fn split<R: Rng + ?Sized>(&self, total: f64, m: usize, rng: &mut R) -> Vec<f64> {
        let raw: Vec<f64> = match self {
            SplitStrategy::Equal => vec![1.0; m],
            SplitStrategy::Dirichlet => (0..m)
                .map(|_| {
                    let x: f64 = Exp1.sample(rng);
                    x.max(1e-6)
                })
                .collect(),
        };
        exact_split(total, &raw)
    }
}

/// Scales `weights` to shares of `total` whose left-to-right float sum is
/// exactly `total`.
///
/// Shares are rounded to multiples of `ulp(total)`, so every partial sum is
/// exact and the last share is simply what remains.
pub fn exact_split(total: f64, weights: &[f64]) -> Vec<f64> {
    let Some(last) = weights.len().checked_sub(1) else {
        return Vec::new();
    };
    let norm: f64 = weights.iter().sum();
    let q = total.next_up() - total;
    let mut shares: Vec<f64> = weights[..last]
        .iter()
        .map(|w| crate::math::round(total * w / norm / q).max(1.0) * q)
        .collect();
    let head = shares.iter().fold(0.0, |a, &b| a + b);
    let mut rest = total - head;
    if rest < q {
        if let Some(j) = (0..last).max_by(|&a, &b| shares[a].total_cmp(&shares[b])) {
            shares[j] -= q - rest;
            rest = q;
        }
    }
    shares.push(rest);
    shares
}

/// Attack shapes used by sweeps, parameterised by replica count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepShape {
    Chain,
    Parallel(SuccessorPolicy),
    /// Blocks of `block_size` replicas (the last block may be smaller).
    Hybrid {
        block_size: usize,
        policy: SuccessorPolicy,
    },
}

impl SweepShape {
    pub fn label(&self) -> &'static str {
        match self {
            SweepShape::Chain => "chain",
            SweepShape::Parallel(SuccessorPolicy::Shared) => "parallel-shared",
            SweepShape::Parallel(SuccessorPolicy::Partitioned) => "parallel-partitioned",
            SweepShape::Hybrid {
                policy: SuccessorPolicy::Shared,
                ..
            } => "hybrid-shared",
            SweepShape::Hybrid {
                policy: SuccessorPolicy::Partitioned,
                ..
            } => "hybrid-partitioned",
        }
    }

    pub fn attack_shape(&self, m: usize) -> AttackShape {
        match *self {
            SweepShape::Chain => AttackShape::Chain,
            SweepShape::Parallel(p) => AttackShape::Parallel(p),
            SweepShape::Hybrid { block_size, policy } => {
                let size = block_size.max(1);
                let mut blocks = vec![size; m / size];
                if !m.is_multiple_of(size) {
                    blocks.push(m % size);
                }
                AttackShape::Hybrid { blocks, policy }
            }
        }
    }

    /// Direct successors a target needs to host `m` replicas.
    pub fn successors_needed(&self, m: usize) -> usize {
        let shape = self.attack_shape(m);
        match shape.policy() {
            SuccessorPolicy::Shared => 1,
            SuccessorPolicy::Partitioned => *shape.layout(m).last().unwrap_or(&1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetSampler {
    /// Uniform over participants with enough direct successors for every
    /// replica count in the sweep.
    UniformEligible,
    Fixed(NodeId),
}

/// One sweep configuration over a fixed graph.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub shape: SweepShape,
    /// Numbers of false identities; `k` false identities means `k + 1`
    /// replicas, and `0` is the unattacked baseline.
    pub false_identities: Vec<usize>,
    pub split: SplitStrategy,
    pub params: Vec<MechanismParams>,
    pub repetitions: usize,
    pub target: TargetSampler,
}

/// One row of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRecord {
    pub shape: SweepShape,
    /// Number of false identities.
    pub m: usize,
    pub sigma: f64,
    pub split: SplitStrategy,
    pub trial: usize,
    pub target: NodeId,
    pub baseline: f64,
    pub replica_total: f64,
    pub normalized: f64,
}

/// Mean and spread of the normalized reward for one `(m, sigma)` cell.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepCell {
    pub m: usize,
    pub sigma: f64,
    pub count: usize,
    pub mean: f64,
    pub stddev: f64,
}

impl SweepCell {
    pub fn standard_error(&self) -> f64 {
        if self.count > 0 {
            self.stddev / crate::math::sqrt(self.count as f64)
        } else {
            0.0
        }
    }
}

/// Picks a target from `dag` for a sweep.
pub fn sample_target<R: Rng + ?Sized>(dag: &ReferralDag, plan: &SweepPlan, rng: &mut R) -> Result<NodeId, AttackError> {
    let needed = plan
        .false_identities
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| plan.shape.successors_needed(k + 1))
        .max()
        .unwrap_or(1);
    match plan.target {
        TargetSampler::Fixed(v) => Ok(v),
        TargetSampler::UniformEligible => {
            let eligible: Vec<NodeId> = dag
                .node_ids()
                .filter(|&v| dag.task_effort(v) > 0.0 && dag.out_degree(v) >= needed)
                .collect();
            if eligible.is_empty() {
                return Err(AttackError::NoEligibleTarget);
            }
            Ok(eligible[rng.random_range(0..eligible.len())])
        }
    }
}

/// One repetition of a sweep: a target is drawn once and attacked with every
/// replica count under every parameter set. Random draws come from streams
/// keyed by `(seed, trial)` so repetitions can run in any order.
pub fn sweep_trial(
    dag: &ReferralDag,
    plan: &SweepPlan,
    seed: u64,
    trial: usize,
) -> Result<Vec<SweepRecord>, AttackError> {
    let mut rng = substream(seed, stream_key(&[trial as u64]));
    let target = sample_target(dag, plan, &mut rng)?;
    let effort = dag.task_effort(target);
    let splits: Vec<(usize, Vec<f64>)> = plan
        .false_identities
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let mut rng = substream(seed, stream_key(&[trial as u64, k as u64]));
            (k, plan.split.split(effort, k + 1, &mut rng))
        })
        .collect();

    let mut out = Vec::with_capacity(plan.params.len() * plan.false_identities.len());
    for params in &plan.params {
        let ledger = CreditLedger::replay(dag, params);
        let eval = RewardEvaluator::new(dag, &ledger, params)?;
        let baseline = eval.node_reward(target, &mut ContestScratch::new()).total_reward;
        for &k in &plan.false_identities {
            let replica_total = if k == 0 {
                baseline
            } else {
                let split = &splits.iter().find(|(kk, _)| *kk == k).expect("split drawn").1;
                let spec = AttackSpec {
                    target,
                    shape: plan.shape.attack_shape(k + 1),
                    effort_split: split.clone(),
                };
                evaluate_against(dag, params, &spec, baseline)?.replica_total
            };
            out.push(SweepRecord {
                shape: plan.shape,
                m: k,
                sigma: params.sigma,
                split: plan.split,
                trial,
                target,
                baseline,
                replica_total,
                normalized: if k == 0 { 1.0 } else { replica_total / baseline },
            });
        }
    }
    Ok(out)
}

/// Runs every repetition of `plan` on `dag`.
pub fn attack_sweep(dag: &ReferralDag, plan: &SweepPlan, seed: u64) -> Result<Vec<SweepRecord>, AttackError> {
    let mut records = Vec::new();
    for trial in 0..plan.repetitions {
        records.extend(sweep_trial(dag, plan, seed, trial)?);
    }
    Ok(records)
}

/// Groups records by `(sigma, m)` in first-seen sigma order and ascending `m`.
pub fn summarize(records: &[SweepRecord]) -> Vec<SweepCell> {
    let mut keys: Vec<(f64, usize)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(s, m)| s == r.sigma && m == r.m) {
            keys.push((r.sigma, r.m));
        }
    }
    let mut sigmas: Vec<f64> = Vec::new();
    for &(s, _) in &keys {
        if !sigmas.contains(&s) {
            sigmas.push(s);
        }
    }
    keys.sort_by(|a, b| {
        let ia = sigmas.iter().position(|&s| s == a.0);
        let ib = sigmas.iter().position(|&s| s == b.0);
        ia.cmp(&ib).then(a.1.cmp(&b.1))
    });
    keys.into_iter()
        .map(|(sigma, m)| {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.sigma == sigma && r.m == m)
                .map(|r| r.normalized)
                .collect();
            let count = xs.len();
            let mean = xs.iter().sum::<f64>() / count as f64;
            let var = if count > 1 {
                xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            SweepCell {
                m,
                sigma,
                count,
                mean,
                stddev: crate::math::sqrt(var),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assume, proptest};

    fn n(i: u32) -> NodeId {
        NodeId::new(i)
    }

    fn params(sigma: f64) -> MechanismParams {
        MechanismParams::standard(sigma).unwrap()
    }

    /// a -> v -> c, all efforts 1.
    fn line() -> ReferralDag {
        let mut g = ReferralDag::new();
        let a = g.add_node(1.0, &[]).unwrap();
        let v = g.add_node(1.0, &[a]).unwrap();
        g.add_node(1.0, &[v]).unwrap();
        g
    }

    fn spec(target: NodeId, shape: AttackShape, split: &[f64]) -> AttackSpec {
        AttackSpec {
            target,
            shape,
            effort_split: split.to_vec(),
        }
    }

    #[test]
    fn chain_attack_shape() {
        let g = line();
        let out = apply_attack(&g, &spec(n(1), AttackShape::Chain, &[0.5, 0.5])).unwrap();
        let d = &out.dag;
        assert_eq!(out.replicas, vec![n(1), n(2)]);
        assert_eq!(out.node_map, vec![Some(n(0)), None, Some(n(3))]);
        assert_eq!(
            d.edges().collect::<Vec<_>>(),
            vec![(n(0), n(1)), (n(1), n(2)), (n(2), n(3))]
        );
    }

    #[test]
    fn parallel_shared_reweights_successor() {
        let g = line();
        let out = apply_attack(
            &g,
            &spec(n(1), AttackShape::Parallel(SuccessorPolicy::Shared), &[0.5, 0.5]),
        )
        .unwrap();
        let d = &out.dag;
        assert_eq!(d.direct_predecessors(n(1)), &[n(0)]);
        assert_eq!(d.direct_predecessors(n(2)), &[n(0)]);
        assert_eq!(d.direct_predecessors(n(3)), &[n(1), n(2)]);
        assert_eq!(d.edge_weight(n(1), n(3)), Some(0.5));
    }

    #[test]
    fn partitioned_keeps_in_degrees() {
        let mut g = ReferralDag::new();
        let v = g.add_node(1.0, &[]).unwrap();
        for _ in 0..3 {
            g.add_node(1.0, &[v]).unwrap();
        }
        let out = apply_attack(
            &g,
            &spec(v, AttackShape::Parallel(SuccessorPolicy::Partitioned), &[0.5, 0.5]),
        )
        .unwrap();
        let d = &out.dag;
        assert_eq!(d.direct_predecessors(n(2)), &[n(0)]);
        assert_eq!(d.direct_predecessors(n(3)), &[n(1)]);
        assert_eq!(d.direct_predecessors(n(4)), &[n(0)]);
        let err = apply_attack(
            &g,
            &spec(v, AttackShape::Parallel(SuccessorPolicy::Partitioned), &[0.25; 4]),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            AttackError::TooFewSuccessors {
                needed: 4,
                available: 3,
                ..
            }
        ));
    }

    #[test]
    fn hybrid_blocks() {
        let g = line();
        let shape = AttackShape::Hybrid {
            blocks: vec![2, 1],
            policy: SuccessorPolicy::Shared,
        };
        let out = apply_attack(&g, &spec(n(1), shape, &[0.25, 0.25, 0.5])).unwrap();
        let d = &out.dag;
        assert_eq!(d.direct_predecessors(n(3)), &[n(1), n(2)]);
        assert_eq!(d.direct_predecessors(n(4)), &[n(3)]);
    }

    #[test]
    fn spec_validation() {
        let g = line();
        assert_eq!(
            apply_attack(&g, &spec(n(1), AttackShape::Chain, &[1.0])).unwrap_err(),
            AttackError::TooFewReplicas(1)
        );
        assert!(matches!(
            apply_attack(&g, &spec(n(1), AttackShape::Chain, &[0.5, 0.4])).unwrap_err(),
            AttackError::SplitSum { .. }
        ));
        assert!(matches!(
            apply_attack(&g, &spec(n(1), AttackShape::Chain, &[1.5, -0.5])).unwrap_err(),
            AttackError::NonPositiveShare { index: 1, .. }
        ));
        // the sink has no successor to hand to the last replica
        assert!(matches!(
            apply_attack(&g, &spec(n(2), AttackShape::Chain, &[0.5, 0.5])).unwrap_err(),
            AttackError::TooFewSuccessors { .. }
        ));
        let bad_layout = AttackShape::Hybrid {
            blocks: vec![2, 2],
            policy: SuccessorPolicy::Shared,
        };
        assert!(matches!(
            apply_attack(&g, &spec(n(1), bad_layout, &[0.5, 0.5])).unwrap_err(),
            AttackError::Layout { .. }
        ));
    }

    #[test]
    fn parallel_shared_credits() {
        // v(t=1) -> c(t=1). In G: b_v = 0.25 + 0.5 = 0.75.
        // Each half-effort replica: 0.25 * 0.25 + 0.5 * (1 * 0.5 * 0.5) = 0.1875.
        let mut g = ReferralDag::new();
        let v = g.add_node(1.0, &[]).unwrap();
        g.add_node(1.0, &[v]).unwrap();
        let p = params(1.0);
        assert_eq!(CreditLedger::replay(&g, &p).credit(v), 0.75);
        let out = apply_attack(
            &g,
            &spec(v, AttackShape::Parallel(SuccessorPolicy::Shared), &[0.5, 0.5]),
        )
        .unwrap();
        let ledger = CreditLedger::replay(&out.dag, &p);
        let brute = oracle::compute_credits_bruteforce(&out.dag, &p).unwrap();
        for &r in &out.replicas {
            assert_eq!(ledger.credit(r), 0.1875);
            assert_eq!(brute.credit(r), 0.1875);
        }
        let outcome = evaluate_attack(
            &g,
            &p,
            &spec(v, AttackShape::Parallel(SuccessorPolicy::Shared), &[0.5, 0.5]),
        )
        .unwrap();
        assert!(outcome.profit < 0.0);
    }

    #[test]
    fn chain_attack_on_line_pays_off() {
        // a -> v -> c, all efforts 1, sigma = 1. Hand evaluation:
        //   G:  b_v = 0.75, b_c = 0.25, pool(v) = 0.1, pi(v) = 0.9 + 0.075 = 0.975
        //   G': b_r1 = b_r2 = 0.3125, b_c = 0.25
        //       pi_d(r2) = 0.3125 / 0.5625 * 0.1, pi_d(r1) = 0.3125 / 0.875 * 0.15
        //       total = 0.9 + 0.0555.. + 0.0535.. = 1.00912..
        let g = line();
        let p = params(1.0);
        let outcome = evaluate_attack(&g, &p, &spec(n(1), AttackShape::Chain, &[0.5, 0.5])).unwrap();
        assert!((outcome.baseline_reward - 0.975).abs() < 1e-12);
        let expected = 0.9 + 0.3125 / 0.5625 * 0.1 + 0.3125 / 0.875 * 0.15;
        assert!((outcome.replica_total - expected).abs() < 1e-12);
        assert!(outcome.is_profitable());

        let attacked = apply_attack(&g, &spec(n(1), AttackShape::Chain, &[0.5, 0.5])).unwrap();
        let ledger = oracle::compute_credits_bruteforce(&attacked.dag, &p).unwrap();
        let report = oracle::compute_rewards_bruteforce(&attacked.dag, &ledger, &p).unwrap();
        let total: f64 = attacked
            .replicas
            .iter()
            .map(|&r| report.rows[r.index()].total_reward)
            .sum();
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn splits_are_exact() {
        let mut rng = substream(5, 5);
        for m in 2..12 {
            for total in [1.0, 0.3, 0.7777, 1e-3] {
                for s in [SplitStrategy::Equal, SplitStrategy::Dirichlet] {
                    let shares = s.split(total, m, &mut rng);
                    assert_eq!(shares.len(), m);
                    assert!(shares.iter().all(|&x| x > 0.0));
                    assert_eq!(shares.iter().fold(0.0, |a, &b| a + b), total);
                }
            }
        }
    }

    #[test]
    fn sweep_baseline_row_is_one() {
        let mut g = ReferralDag::new();
        let v = g.add_node(0.8, &[]).unwrap();
        let c = g.add_node(0.6, &[v]).unwrap();
        g.add_node(0.9, &[c]).unwrap();
        let plan = SweepPlan {
            shape: SweepShape::Parallel(SuccessorPolicy::Shared),
            false_identities: (0..=3).collect(),
            split: SplitStrategy::Equal,
            params: vec![params(0.4), params(0.7)],
            repetitions: 3,
            target: TargetSampler::UniformEligible,
        };
        let records = attack_sweep(&g, &plan, 11).unwrap();
        assert_eq!(records.len(), 2 * 4 * 3);
        for r in records.iter().filter(|r| r.m == 0) {
            assert_eq!(r.normalized, 1.0);
        }
        let cells = summarize(&records);
        assert_eq!(cells.len(), 8);
        assert_eq!((cells[0].sigma, cells[0].m), (0.4, 0));
        assert_eq!((cells[7].sigma, cells[7].m), (0.7, 3));
        assert_eq!(cells[0].mean, 1.0);
        assert!(cells.iter().filter(|c| c.m > 0).all(|c| c.mean < 1.0));
    }

    proptest! {
        #[test]
        fn exact_split_hits_the_total(total in 1e-6f64..1.0, weights in proptest::collection::vec(1e-6f64..1.0, 2..12)) {
            let shares = exact_split(total, &weights);
            prop_assert!(shares.iter().all(|&x| x > 0.0));
            prop_assert_eq!(shares.iter().fold(0.0, |a, &b| a + b), total);
        }

        #[test]
        fn attack_preserves_everything_else(seed in any::<u64>(), nodes in 2usize..14, m in 2usize..6, kind in 0u8..4, sigma in 0.0f64..=1.0) {
            let mut rng = substream(seed, 6);
            let g = ReferralDag::random(&mut rng, nodes, 0.35, 0.15);
            let candidates: Vec<NodeId> = g.node_ids().filter(|&v| g.task_effort(v) > 0.0 && g.out_degree(v) >= m).collect();
            prop_assume!(!candidates.is_empty());
            let target = candidates[rng.random_range(0..candidates.len())];
            let shape = match kind {
                0 => AttackShape::Chain,
                1 => AttackShape::Parallel(SuccessorPolicy::Shared),
                2 => AttackShape::Parallel(SuccessorPolicy::Partitioned),
                _ => SweepShape::Hybrid { block_size: 2, policy: SuccessorPolicy::Shared }.attack_shape(m),
            };
            let split = SplitStrategy::Dirichlet.split(g.task_effort(target), m, &mut rng);
            let spec = AttackSpec { target, shape: shape.clone(), effort_split: split };
            let out = apply_attack(&g, &spec).unwrap();

            // effort conservation
            let total = out.replicas.iter().fold(0.0, |a, &r| a + out.dag.task_effort(r));
            prop_assert_eq!(total, g.task_effort(target));
            // every replica refers someone
            for &r in &out.replicas {
                prop_assert!(out.dag.out_degree(r) >= 1);
            }
            // collapsing the replicas gives the original graph back
            prop_assert_eq!(&collapse_replicas(&out.dag, &out.replicas).unwrap(), &g);

            let p = params(sigma);
            let before = crate::engine::compute_rewards(&g, &CreditLedger::replay(&g, &p), &p).unwrap();
            let after = crate::engine::compute_rewards(&out.dag, &CreditLedger::replay(&out.dag, &p), &p).unwrap();
            for x in g.node_ids().filter(|&x| x != target) {
                let y = out.node_map[x.index()].unwrap();
                prop_assert_eq!(before.rows[x.index()].task_reward, after.rows[y.index()].task_reward);
            }
            // the rooted subgraph of every direct successor is untouched by
            // chain and partitioned attacks
            if shape.policy() == SuccessorPolicy::Partitioned || shape == AttackShape::Chain {
                for &u in g.direct_successors(target) {
                    let y = out.node_map[u.index()].unwrap();
                    prop_assert_eq!(before.rows[u.index()].total_reward, after.rows[y.index()].total_reward);
                }
            }
        }
    }
}
