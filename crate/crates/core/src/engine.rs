//! Virtual credits, contests and rewards.
//!
//! Each participant `v` (task effort `t_v > 0`) is paid `mu * t_v` for its task
//! and holds virtual credits
//!
//! ```text
//! b_v = eta * t_v^2 + t_v * sum_{u successor of v} t_u * sum_{p: v -> u} w(p) * lambda^|p|
//! ```
//!
//! The ledger is maintained incrementally: when `v` joins, every participating
//! ancestor `x` gains `t_x * t_v * g(x)` where `g` is the path aggregate from
//! [`PathDp`].
//!
//! Every node `v` then runs a contest over the participants of its rooted
//! subgraph. Its win probability is the ratio-form success function
//! `b_v^sigma / sum_u b_u^sigma`, and the prize is
//! `phi * sum_u t_u * indeg_within(u) / indeg(u)`. Zero-effort nodes take no
//! part in any contest and receive nothing.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::{GraphError, NodeId, PathDp, ReferralDag};
use crate::math;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("lambda must lie in (0, 1), got {0}")]
    Lambda(f64),
    #[error("eta must be at least lambda / 2 = {min}, got {eta}")]
    Eta { eta: f64, min: f64 },
    #[error("mu must be positive, got {0}")]
    Mu(f64),
    #[error("phi must be positive, got {0}")]
    Phi(f64),
    #[error("sigma must lie in [0, 1], got {0}")]
    Sigma(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("ledger covers {ledger} nodes but the next joining node is {node}")]
    NotNewest { ledger: usize, node: NodeId },
    #[error("ledger covers {ledger} nodes, graph has {graph}")]
    LedgerMismatch { ledger: usize, graph: usize },
    #[error("node {0} exerted no effort and takes no part in contests")]
    Ineligible(NodeId),
    #[error("cost coefficient must be positive, got {0}")]
    InvalidCost(f64),
}

/// Mechanism parameters `(lambda, eta, mu, phi, sigma)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MechanismParams {
    /// Path discount, `0 < lambda < 1`.
    pub lambda: f64,
    /// Credit allowance coefficient, `eta >= lambda / 2`.
    pub eta: f64,
    /// Task reward per unit effort.
    pub mu: f64,
    /// Diffusion prize per unit of attributed effort.
    pub phi: f64,
    /// Contest noise exponent in `[0, 1]`; 0 is a uniform lottery.
    pub sigma: f64,
}

impl MechanismParams {
    pub fn new(lambda: f64, eta: f64, mu: f64, phi: f64, sigma: f64) -> Result<Self, ParamError> {
        let p = MechanismParams {
            lambda,
            eta,
            mu,
            phi,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    /// lambda = 0.5, eta = 0.25, mu = 0.9, phi = 0.1 with the given sigma.
    pub fn standard(sigma: f64) -> Result<Self, ParamError> {
        Self::new(0.5, 0.25, 0.9, 0.1, sigma)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(ParamError::Lambda(self.lambda));
        }
        if !(self.eta >= self.lambda / 2.0) || !self.eta.is_finite() {
            return Err(ParamError::Eta {
                eta: self.eta,
                min: self.lambda / 2.0,
            });
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(ParamError::Mu(self.mu));
        }
        if !(self.phi > 0.0) || !self.phi.is_finite() {
            return Err(ParamError::Phi(self.phi));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(ParamError::Sigma(self.sigma));
        }
        Ok(())
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self, ParamError> {
        let p = MechanismParams { sigma, ..self };
        p.validate()?;
        Ok(p)
    }

    /// Budget rate `mu + phi`: total payout never exceeds this times total effort.
    pub fn budget_rate(&self) -> f64 {
        self.mu + self.phi
    }

    /// Contest weight `b^sigma`, with `b^0 = 1` for every positive credit.
    #[inline]
    pub fn csf_weight(&self, credit: f64) -> f64 {
        if credit <= 0.0 {
            0.0
        } else if self.sigma == 0.0 {
            1.0
        } else if self.sigma == 1.0 {
            credit
        } else {
            math::pow(credit, self.sigma)
        }
    }
}

/// Virtual credits per node, indexed by [`NodeId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CreditLedger {
    credits: Vec<f64>,
}

impl CreditLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of joined nodes the ledger has processed.
    pub fn len(&self) -> usize {
        self.credits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.credits.is_empty()
    }

    pub fn credit(&self, v: NodeId) -> f64 {
        self.credits[v.index()]
    }

    pub fn credits(&self) -> &[f64] {
        &self.credits
    }

    pub fn from_credits(credits: Vec<f64>) -> Self {
        CreditLedger { credits }
    }

    /// Processes the newest node `v` of `dag`.
    pub fn on_join(
        &mut self,
        dag: &ReferralDag,
        v: NodeId,
        params: &MechanismParams,
        scratch: &mut PathDp,
    ) -> Result<(), EngineError> {
        if !dag.contains(v) {
            return Err(GraphError::UnknownNode(v).into());
        }
        if v.index() != self.credits.len() {
            return Err(EngineError::NotNewest {
                ledger: self.credits.len(),
                node: v,
            });
        }
        let t_v = dag.task_effort(v);
        if t_v <= 0.0 {
            self.credits.push(0.0);
            return Ok(());
        }
        self.credits.push(params.eta * t_v * t_v);
        let efforts = dag.efforts();
        let credits = &mut self.credits;
        scratch.run(dag, v, params.lambda, |x, g| {
            let t_x = efforts[x.index()];
            if t_x > 0.0 {
                credits[x.index()] += t_x * t_v * g;
            }
        });
        Ok(())
    }

    /// Replays [`on_join`](Self::on_join) over the whole graph in join order.
    pub fn replay(dag: &ReferralDag, params: &MechanismParams) -> Self {
        let mut ledger = CreditLedger {
            credits: Vec::with_capacity(dag.len()),
        };
        let mut scratch = PathDp::new();
        for v in dag.node_ids() {
            ledger
                .on_join(dag, v, params, &mut scratch)
                .expect("replay visits nodes in join order");
        }
        ledger
    }
}

/// Participants of the contest held for `G_v`: members of the rooted subgraph with positive effort.
pub fn contestants(dag: &ReferralDag, v: NodeId) -> Result<Vec<NodeId>, EngineError> {
    let view = dag.rooted_subgraph(v)?;
    Ok(view
        .nodes()
        .iter()
        .copied()
        .filter(|&u| dag.task_effort(u) > 0.0)
        .collect())
}

/// Probability that `v` wins its own contest.
pub fn win_probability(
    dag: &ReferralDag,
    ledger: &CreditLedger,
    v: NodeId,
    params: &MechanismParams,
) -> Result<f64, EngineError> {
    check_ledger(dag, ledger)?;
    if !dag.contains(v) {
        return Err(GraphError::UnknownNode(v).into());
    }
    if dag.task_effort(v) <= 0.0 {
        return Err(EngineError::Ineligible(v));
    }
    let weights = contest_weights(dag, ledger, params);
    let contest = ContestScratch::new().evaluate(dag, &weights, v);
    Ok(weights[v.index()] / contest.weight_sum)
}

/// Prize of the contest held for `G_v`.
pub fn prize_pool(dag: &ReferralDag, v: NodeId, params: &MechanismParams) -> Result<f64, EngineError> {
    if !dag.contains(v) {
        return Err(GraphError::UnknownNode(v).into());
    }
    let weights = vec![0.0; dag.len()];
    let contest = ContestScratch::new().evaluate(dag, &weights, v);
    Ok(params.phi * contest.attributed_effort)
}

fn check_ledger(dag: &ReferralDag, ledger: &CreditLedger) -> Result<(), EngineError> {
    if ledger.len() != dag.len() {
        return Err(EngineError::LedgerMismatch {
            ledger: ledger.len(),
            graph: dag.len(),
        });
    }
    Ok(())
}

fn contest_weights(dag: &ReferralDag, ledger: &CreditLedger, params: &MechanismParams) -> Vec<f64> {
    dag.efforts()
        .iter()
        .zip(ledger.credits())
        .map(|(&t, &b)| if t > 0.0 { params.csf_weight(b) } else { 0.0 })
        .collect()
}

/// Totals of one contest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contest {
    /// `sum of b_u^sigma` over the participants of `G_v`.
    pub weight_sum: f64,
    /// `sum of t_u * indeg_within(u) / indeg(u)` over `G_v`.
    pub attributed_effort: f64,
}

/// Reusable workspace for evaluating contests.
#[derive(Clone, Debug, Default)]
pub struct ContestScratch {
    stamp: Vec<u32>,
    epoch: u32,
    members: Vec<NodeId>,
}

impl ContestScratch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evaluates the contest of `G_v` given per-node contest weights.
    ///
    /// Sums run over members in ascending id order, so the result depends
    /// only on `G_v` and not on anything outside it.
    pub fn evaluate(&mut self, dag: &ReferralDag, weights: &[f64], v: NodeId) -> Contest {
        if self.stamp.len() < dag.len() {
            self.stamp.resize(dag.len(), 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        self.members.clear();
        self.members.push(v);
        self.stamp[v.index()] = epoch;
        let mut i = 0;
        while i < self.members.len() {
            let x = self.members[i];
            i += 1;
            for &y in dag.direct_successors(x) {
                if self.stamp[y.index()] != epoch {
                    self.stamp[y.index()] = epoch;
                    self.members.push(y);
                }
            }
        }
        self.members.sort_unstable();

        let mut weight_sum = 0.0;
        let mut attributed = 0.0;
        for &u in &self.members {
            weight_sum += weights[u.index()];
            let t_u = dag.task_effort(u);
            if u == v || t_u <= 0.0 {
                continue;
            }
            let preds = dag.direct_predecessors(u);
            let within = preds.iter().filter(|p| self.stamp[p.index()] == epoch).count();
            attributed += t_u * within as f64 / preds.len() as f64;
        }
        Contest {
            weight_sum,
            attributed_effort: attributed,
        }
    }
}

/// Rewards of one node.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeReward {
    pub node: NodeId,
    pub task_effort: f64,
    pub credits: f64,
    pub win_probability: f64,
    pub prize_pool: f64,
    pub task_reward: f64,
    pub diffusion_reward: f64,
    pub total_reward: f64,
}

/// Per-node rewards plus aggregate totals.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardReport {
    pub rows: Vec<NodeReward>,
    pub total_effort: f64,
    pub total_task_reward: f64,
    pub total_diffusion_reward: f64,
    pub total_reward: f64,
    pub participants: usize,
}

impl RewardReport {
    pub fn from_rows(rows: Vec<NodeReward>) -> Self {
        let mut r = RewardReport {
            rows,
            ..Default::default()
        };
        for row in &r.rows {
            r.total_effort += row.task_effort;
            r.total_task_reward += row.task_reward;
            r.total_diffusion_reward += row.diffusion_reward;
            r.total_reward += row.total_reward;
            if row.task_effort > 0.0 {
                r.participants += 1;
            }
        }
        r
    }

    pub fn get(&self, v: NodeId) -> Option<&NodeReward> {
        self.rows.get(v.index()).filter(|r| r.node == v)
    }

    /// `total_reward / ((mu + phi) * total_effort)`; 0 for an effortless graph.
    pub fn payout_ratio(&self, params: &MechanismParams) -> f64 {
        if self.total_effort > 0.0 {
            self.total_reward / (params.budget_rate() * self.total_effort)
        } else {
            0.0
        }
    }
}

/// Evaluates rewards node by node on a frozen graph and ledger.
///
/// Contests are independent, so callers may evaluate nodes in any order or
/// in parallel, each worker with its own [`ContestScratch`].
#[derive(Clone, Debug)]
pub struct RewardEvaluator<'a> {
    dag: &'a ReferralDag,
    ledger: &'a CreditLedger,
    params: MechanismParams,
    weights: Vec<f64>,
}

impl<'a> RewardEvaluator<'a> {
    pub fn new(dag: &'a ReferralDag, ledger: &'a CreditLedger, params: &MechanismParams) -> Result<Self, EngineError> {
        check_ledger(dag, ledger)?;
        Ok(RewardEvaluator {
            dag,
            ledger,
            params: *params,
            weights: contest_weights(dag, ledger, params),
        })
    }

    pub fn node_reward(&self, v: NodeId, scratch: &mut ContestScratch) -> NodeReward {
        let t = self.dag.task_effort(v);
        let contest = scratch.evaluate(self.dag, &self.weights, v);
        let pool = self.params.phi * contest.attributed_effort;
        let (prob, task, diffusion) = if t > 0.0 {
            let prob = self.weights[v.index()] / contest.weight_sum;
            let diffusion = if pool > 0.0 { prob * pool } else { 0.0 };
            (prob, self.params.mu * t, diffusion)
        } else {
            (0.0, 0.0, 0.0)
        };
        NodeReward {
            node: v,
            task_effort: t,
            credits: self.ledger.credit(v),
            win_probability: prob,
            prize_pool: pool,
            task_reward: task,
            diffusion_reward: diffusion,
            total_reward: task + diffusion,
        }
    }
}

/// Rewards for every node of `dag`.
pub fn compute_rewards(
    dag: &ReferralDag,
    ledger: &CreditLedger,
    params: &MechanismParams,
) -> Result<RewardReport, EngineError> {
    let eval = RewardEvaluator::new(dag, ledger, params)?;
    let mut scratch = ContestScratch::new();
    let rows = dag.node_ids().map(|v| eval.node_reward(v, &mut scratch)).collect();
    Ok(RewardReport::from_rows(rows))
}

/// Utility `pi(v) - delta_v * t_v`.
pub fn utility(report: &RewardReport, v: NodeId, delta: f64) -> Result<f64, EngineError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(EngineError::InvalidCost(delta));
    }
    let row = report.get(v).ok_or(GraphError::UnknownNode(v))?;
    Ok(row.total_reward - delta * row.task_effort)
}
