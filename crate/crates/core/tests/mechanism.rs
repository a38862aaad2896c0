use mwc_core::attack::{evaluate_attack, AttackError};
use mwc_core::engine::compute_rewards;
use mwc_core::oracle::{compute_credits_bruteforce, compute_rewards_bruteforce};
use mwc_core::rng::substream;
use mwc_core::{AttackShape, AttackSpec, CreditLedger, MechanismParams, NodeId, ReferralDag};
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn two_node_chain_by_hand() {
    let mut dag = ReferralDag::new();
    let a = dag.add_node(1.0, &[]).unwrap();
    let b = dag.add_node(1.0, &[a]).unwrap();
    let params = MechanismParams::standard(0.5).unwrap();
    let ledger = CreditLedger::replay(&dag, &params);
    // eta t^2 + t * t_b * lambda
    assert!(close(ledger.credit(a), 0.75));
    assert!(close(ledger.credit(b), 0.25));

    let report = compute_rewards(&dag, &ledger, &params).unwrap();
    let wa = 0.75f64.sqrt();
    let prob = wa / (wa + 0.5);
    let ra = report.get(a).unwrap();
    assert!(close(ra.win_probability, prob));
    assert!(close(ra.prize_pool, 0.1));
    assert!(close(ra.total_reward, 0.9 + 0.1 * prob));
    // b's only referral edge comes from outside its subgraph
    let rb = report.get(b).unwrap();
    assert_eq!(rb.prize_pool, 0.0);
    assert!(close(rb.total_reward, 0.9));
}

#[test]
fn zero_effort_node_earns_nothing_and_passes_nothing_on() {
    let mut dag = ReferralDag::new();
    let a = dag.add_node(0.0, &[]).unwrap();
    let b = dag.add_node(0.7, &[a]).unwrap();
    let params = MechanismParams::standard(0.5).unwrap();
    let ledger = CreditLedger::replay(&dag, &params);
    assert_eq!(ledger.credit(a), 0.0);
    let report = compute_rewards(&dag, &ledger, &params).unwrap();
    assert_eq!(report.get(a).unwrap().total_reward, 0.0);
    assert_eq!(report.participants, 1);
    assert!(report.get(b).unwrap().total_reward > 0.0);
}

#[test]
fn attacks_need_two_replicas_with_the_target_effort() {
    let mut rng = substream(3, 0);
    let dag = ReferralDag::random(&mut rng, 12, 0.3, 0.0);
    let params = MechanismParams::standard(0.5).unwrap();
    let v = NodeId::new(0);
    let t = dag.task_effort(v);
    let spec = |split: Vec<f64>| AttackSpec {
        target: v,
        shape: AttackShape::Chain,
        effort_split: split,
    };
    assert!(matches!(
        evaluate_attack(&dag, &params, &spec(vec![t])),
        Err(AttackError::TooFewReplicas(1))
    ));
    let out = evaluate_attack(&dag, &params, &spec(vec![t / 2.0, t / 2.0])).unwrap();
    assert_eq!(out.replica_rewards.len(), 2);
    assert!(close(out.profit, out.replica_total - out.baseline_reward));
}

fn arb_dag() -> impl Strategy<Value = (u64, usize, f64, f64)> {
    (any::<u64>(), 1usize..14, 0.0..0.7f64, 0.0..0.4f64)
}

proptest! {
    #[test]
    fn engine_matches_bruteforce((seed, n, p, zero) in arb_dag(), sigma in 0.0..=1.0f64) {
        let dag = ReferralDag::random(&mut substream(seed, 0), n, p, zero);
        let params = MechanismParams::standard(sigma).unwrap();
        let fast = CreditLedger::replay(&dag, &params);
        let slow = compute_credits_bruteforce(&dag, &params).unwrap();
        for v in dag.node_ids() {
            prop_assert!(close(fast.credit(v), slow.credit(v)));
        }
        let fast = compute_rewards(&dag, &fast, &params).unwrap();
        let slow = compute_rewards_bruteforce(&dag, &slow, &params).unwrap();
        for (x, y) in fast.rows.iter().zip(&slow.rows) {
            prop_assert!(close(x.total_reward, y.total_reward), "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn payout_stays_within_budget((seed, n, p, zero) in arb_dag(), sigma in 0.0..=1.0f64) {
        let dag = ReferralDag::random(&mut substream(seed, 1), n, p, zero);
        let params = MechanismParams::standard(sigma).unwrap();
        let report = compute_rewards(&dag, &CreditLedger::replay(&dag, &params), &params).unwrap();
        prop_assert!(report.total_reward <= params.budget_rate() * report.total_effort * (1.0 + 1e-12));
    }

    #[test]
    fn replay_order_does_not_matter((seed, n, p, zero) in arb_dag()) {
        // a DAG rebuilt from its own node list gives identical credits
        let dag = ReferralDag::random(&mut substream(seed, 2), n, p, zero);
        let mut copy = ReferralDag::new();
        for v in dag.node_ids() {
            let preds: Vec<NodeId> = dag.direct_predecessors(v).to_vec();
            copy.add_node(dag.task_effort(v), &preds).unwrap();
        }
        let params = MechanismParams::standard(0.5).unwrap();
        prop_assert_eq!(CreditLedger::replay(&dag, &params), CreditLedger::replay(&copy, &params));
    }
}
