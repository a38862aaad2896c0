//! Exhaustive reference evaluations.
//!
//! These follow the credit and reward formulas literally, enumerating every
//! path and every rooted subgraph from scratch. They share nothing with the
//! incremental ledger or the contest workspace and are only meant for small
//! graphs.

use alloc::vec::Vec;

use crate::engine::{CreditLedger, EngineError, MechanismParams, NodeReward, RewardReport};
use crate::graph::{GraphError, ReferralDag, BRUTE_FORCE_NODE_LIMIT};
use crate::math;

/// Credits evaluated straight from the path-sum formula.
pub fn compute_credits_bruteforce(dag: &ReferralDag, params: &MechanismParams) -> Result<CreditLedger, EngineError> {
    if dag.len() > BRUTE_FORCE_NODE_LIMIT {
        return Err(GraphError::TooLarge {
            nodes: dag.len(),
            limit: BRUTE_FORCE_NODE_LIMIT,
        }
        .into());
    }
    let mut credits = Vec::with_capacity(dag.len());
    for v in dag.node_ids() {
        let t_v = dag.task_effort(v);
        if t_v <= 0.0 {
            credits.push(0.0);
            continue;
        }
        let mut sum = 0.0;
        for u in dag.successors(v)? {
            let t_u = dag.task_effort(u);
            for p in dag.enumerate_paths_bruteforce(v, u)? {
                sum += t_u * p.weight * math::pow(params.lambda, p.length as f64);
            }
        }
        credits.push(params.eta * t_v * t_v + t_v * sum);
    }
    Ok(CreditLedger::from_credits(credits))
}

/// Rewards evaluated from the contest formulas with freshly built subgraph views.
pub fn compute_rewards_bruteforce(
    dag: &ReferralDag,
    credits: &CreditLedger,
    params: &MechanismParams,
) -> Result<RewardReport, EngineError> {
    let weight = |b: f64| {
        if params.sigma == 0.0 {
            1.0
        } else {
            math::pow(b, params.sigma)
        }
    };
    let mut rows = Vec::with_capacity(dag.len());
    for v in dag.node_ids() {
        let view = dag.rooted_subgraph(v)?;
        let mut pool = 0.0;
        let mut denom = 0.0;
        for &u in view.nodes() {
            let t_u = dag.task_effort(u);
            if t_u > 0.0 {
                denom += weight(credits.credit(u));
                let global = view.global_in_degree(u).unwrap_or(0);
                if global > 0 {
                    pool += t_u * view.in_degree_within(u).unwrap_or(0) as f64 / global as f64;
                }
            }
        }
        pool *= params.phi;
        let t_v = dag.task_effort(v);
        let row = if t_v > 0.0 && credits.credit(v) >= params.eta * t_v * t_v {
            let prob = weight(credits.credit(v)) / denom;
            let task = params.mu * t_v;
            NodeReward {
                node: v,
                task_effort: t_v,
                credits: credits.credit(v),
                win_probability: prob,
                prize_pool: pool,
                task_reward: task,
                diffusion_reward: prob * pool,
                total_reward: task + prob * pool,
            }
        } else {
            NodeReward {
                node: v,
                task_effort: t_v,
                credits: credits.credit(v),
                win_probability: 0.0,
                prize_pool: pool,
                task_reward: 0.0,
                diffusion_reward: 0.0,
                total_reward: 0.0,
            }
        };
        rows.push(row);
    }
    Ok(RewardReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::compute_rewards;
    use crate::rng::substream;

    #[test]
    fn empty_graph_gives_empty_ledger() {
        let g = ReferralDag::new();
        let p = MechanismParams::standard(0.5).unwrap();
        assert!(compute_credits_bruteforce(&g, &p).unwrap().is_empty());
    }

    #[test]
    fn size_guard() {
        let mut g = ReferralDag::new();
        for _ in 0..16 {
            g.add_node(1.0, &[]).unwrap();
        }
        let p = MechanismParams::standard(0.5).unwrap();
        assert!(compute_credits_bruteforce(&g, &p).is_err());
    }

    #[test]
    fn engine_rewards_match_formula() {
        for seed in 0..200 {
            let mut rng = substream(seed, 9);
            let g = ReferralDag::random(&mut rng, 12, 0.3, 0.2);
            let sigma = (seed % 5) as f64 / 4.0;
            let p = MechanismParams::standard(sigma).unwrap();
            let ledger = compute_credits_bruteforce(&g, &p).unwrap();
            let a = compute_rewards(&g, &ledger, &p).unwrap();
            let b = compute_rewards_bruteforce(&g, &ledger, &p).unwrap();
            for (x, y) in a.rows.iter().zip(&b.rows) {
                assert!(
                    (x.total_reward - y.total_reward).abs() <= 1e-12,
                    "seed {seed}: {x:?} vs {y:?}"
                );
                assert!((x.prize_pool - y.prize_pool).abs() <= 1e-12);
            }
        }
    }
}
