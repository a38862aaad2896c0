//! Referral DAG.
//!
//! Nodes are numbered densely in join order, so a node's id doubles as its
//! join index and every edge points from a smaller id to a larger one. A
//! node's in-edges are supplied when it joins and are never extended
//! afterwards, which keeps the derived edge weight `1 / indegree` stable for
//! the lifetime of the graph.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use thiserror::Error;

/// Largest graph the exhaustive path enumeration accepts by default.
pub const BRUTE_FORCE_NODE_LIMIT: usize = 15;

/// Dense node identifier, equal to the node's join index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct NodeId(u32);

impl NodeId {
    pub const fn new(index: u32) -> Self {
        NodeId(index)
    }

    #[inline]
    pub const fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub const fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("predecessor {0} listed more than once")]
    DuplicatePredecessor(NodeId),
    #[error("task effort must be finite and non-negative, got {0}")]
    InvalidEffort(f64),
    #[error("path enumeration is limited to {limit} nodes, graph has {nodes}")]
    TooLarge { nodes: usize, limit: usize },
}

/// A snapshot of one node.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerNode {
    pub id: NodeId,
    pub task_effort: f64,
    pub join_index: u32,
}

/// Append-only referral DAG with per-node task efforts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReferralDag {
    efforts: Vec<f64>,
    preds: Vec<Vec<NodeId>>,
    succs: Vec<Vec<NodeId>>,
    edges: usize,
}

impl ReferralDag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        ReferralDag {
            efforts: Vec::with_capacity(nodes),
            preds: Vec::with_capacity(nodes),
            succs: Vec::with_capacity(nodes),
            edges: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.efforts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.efforts.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.len()
    }

    fn check(&self, v: NodeId) -> Result<(), GraphError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(v))
        }
    }

    /// Appends a node that was referred by `direct_predecessors`.
    pub fn add_node(&mut self, task_effort: f64, direct_predecessors: &[NodeId]) -> Result<NodeId, GraphError> {
        if !(task_effort.is_finite() && task_effort >= 0.0) {
            return Err(GraphError::InvalidEffort(task_effort));
        }
        for (i, &p) in direct_predecessors.iter().enumerate() {
            self.check(p)?;
            if direct_predecessors[..i].contains(&p) {
                return Err(GraphError::DuplicatePredecessor(p));
            }
        }
        let id = NodeId(self.len() as u32);
        for &p in direct_predecessors {
            self.succs[p.index()].push(id);
        }
        self.edges += direct_predecessors.len();
        self.efforts.push(task_effort);
        self.preds.push(direct_predecessors.to_vec());
        self.succs.push(Vec::new());
        Ok(id)
    }

    /// Replaces a node's task effort. The edge structure is unaffected.
    pub fn set_task_effort(&mut self, v: NodeId, task_effort: f64) -> Result<(), GraphError> {
        self.check(v)?;
        if !(task_effort.is_finite() && task_effort >= 0.0) {
            return Err(GraphError::InvalidEffort(task_effort));
        }
        self.efforts[v.index()] = task_effort;
        Ok(())
    }

    /// Task effort of `v`. Panics if `v` is not in the graph.
    #[inline]
    pub fn task_effort(&self, v: NodeId) -> f64 {
        self.efforts[v.index()]
    }

    pub fn efforts(&self) -> &[f64] {
        &self.efforts
    }

    pub fn node(&self, v: NodeId) -> Option<PlayerNode> {
        self.efforts.get(v.index()).map(|&t| PlayerNode {
            id: v,
            task_effort: t,
            join_index: v.get(),
        })
    }

    pub fn node_ids(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        (0..self.len() as u32).map(NodeId)
    }

    /// Direct predecessors in the order given at join time.
    #[inline]
    pub fn direct_predecessors(&self, v: NodeId) -> &[NodeId] {
        &self.preds[v.index()]
    }

    /// Direct successors in join order.
    #[inline]
    pub fn direct_successors(&self, v: NodeId) -> &[NodeId] {
        &self.succs[v.index()]
    }

    #[inline]
    pub fn in_degree(&self, v: NodeId) -> usize {
        self.preds[v.index()].len()
    }

    #[inline]
    pub fn out_degree(&self, v: NodeId) -> usize {
        self.succs[v.index()].len()
    }

    /// Weight `1 / indegree(to)` of the edge `from -> to`, if present.
    pub fn edge_weight(&self, from: NodeId, to: NodeId) -> Option<f64> {
        if !self.contains(from) || !self.contains(to) {
            return None;
        }
        let preds = self.direct_predecessors(to);
        preds.contains(&from).then(|| 1.0 / preds.len() as f64)
    }

    /// All edges, grouped by target in join order, predecessors in join-time order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.preds
            .iter()
            .enumerate()
            .flat_map(|(to, ps)| ps.iter().map(move |&from| (from, NodeId(to as u32))))
    }

    /// Every node reachable from `v` by a non-empty path, ascending.
    pub fn successors(&self, v: NodeId) -> Result<Vec<NodeId>, GraphError> {
        self.check(v)?;
        Ok(self.reach(v, |g, x| g.direct_successors(x)))
    }

    /// Every node that reaches `v` by a non-empty path, ascending.
    pub fn predecessors(&self, v: NodeId) -> Result<Vec<NodeId>, GraphError> {
        self.check(v)?;
        Ok(self.reach(v, |g, x| g.direct_predecessors(x)))
    }

    fn reach<'a>(&'a self, v: NodeId, next: impl Fn(&'a Self, NodeId) -> &'a [NodeId]) -> Vec<NodeId> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![v];
        let mut out = Vec::new();
        while let Some(x) = stack.pop() {
            for &y in next(self, x) {
                if !seen[y.index()] {
                    seen[y.index()] = true;
                    out.push(y);
                    stack.push(y);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The subgraph rooted at `v`: `v`, its successors and the edges among them.
    pub fn rooted_subgraph(&self, v: NodeId) -> Result<RootedSubgraph<'_>, GraphError> {
        let mut members = self.successors(v)?;
        members.insert(0, v);
        let in_view = members
            .iter()
            .map(|&u| {
                self.direct_predecessors(u)
                    .iter()
                    .filter(|p| members.binary_search(p).is_ok())
                    .count()
            })
            .collect();
        Ok(RootedSubgraph {
            dag: self,
            root: v,
            members,
            in_view,
        })
    }

    /// Path aggregates `sum_p w(p) * lambda^|p|` from every predecessor of `v` to `v`.
    pub fn ancestor_path_aggregates(&self, v: NodeId, lambda: f64) -> Result<Vec<PathAggregate>, GraphError> {
        self.check(v)?;
        let mut dp = PathDp::new();
        let mut out = Vec::new();
        dp.run(self, v, lambda, |source, value| {
            out.push(PathAggregate {
                source,
                target: v,
                value,
            })
        });
        out.sort_unstable_by_key(|a| a.source);
        Ok(out)
    }

    /// Exhaustive list of `(weight, length)` for every path `from -> to`.
    pub fn enumerate_paths_bruteforce(&self, from: NodeId, to: NodeId) -> Result<Vec<PathWeight>, GraphError> {
        self.enumerate_paths_bruteforce_with_limit(from, to, BRUTE_FORCE_NODE_LIMIT)
    }

    pub fn enumerate_paths_bruteforce_with_limit(
        &self,
        from: NodeId,
        to: NodeId,
        limit: usize,
    ) -> Result<Vec<PathWeight>, GraphError> {
        if self.len() > limit {
            return Err(GraphError::TooLarge {
                nodes: self.len(),
                limit,
            });
        }
        self.check(from)?;
        self.check(to)?;
        let mut out = Vec::new();
        if from != to {
            self.walk(from, to, 1.0, 0, &mut out);
        }
        Ok(out)
    }

    fn walk(&self, at: NodeId, to: NodeId, weight: f64, length: usize, out: &mut Vec<PathWeight>) {
        if at == to {
            out.push(PathWeight { weight, length });
            return;
        }
        for &next in self.direct_successors(at) {
            let w = 1.0 / self.in_degree(next) as f64;
            self.walk(next, to, weight * w, length + 1, out);
        }
    }

    /// Random DAG on `nodes` nodes: each earlier node refers a later one with
    /// probability `edge_prob`; each effort is zero with probability
    /// `zero_effort_prob`, otherwise uniform on (0, 1].
    pub fn random<R: Rng + ?Sized>(rng: &mut R, nodes: usize, edge_prob: f64, zero_effort_prob: f64) -> Self {
        let mut dag = ReferralDag::with_capacity(nodes);
        let mut preds = Vec::new();
        for v in 0..nodes {
            preds.clear();
            for u in 0..v {
                if rng.random_bool(edge_prob) {
                    preds.push(NodeId(u as u32));
                }
            }
            let t = if rng.random_bool(zero_effort_prob) {
                0.0
            } else {
                1.0 - rng.random::<f64>()
            };
            dag.add_node(t, &preds).expect("generated predecessors exist");
        }
        dag
    }
}

/// One path found by [`ReferralDag::enumerate_paths_bruteforce`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathWeight {
    pub weight: f64,
    pub length: usize,
}

/// `sum over paths source -> target of w(p) * lambda^|p|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathAggregate {
    pub source: NodeId,
    pub target: NodeId,
    pub value: f64,
}

/// View of a rooted subgraph. Members are sorted by id, root first.
#[derive(Clone, Debug)]
pub struct RootedSubgraph<'a> {
    dag: &'a ReferralDag,
    root: NodeId,
    members: Vec<NodeId>,
    in_view: Vec<usize>,
}

impl<'a> RootedSubgraph<'a> {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.members
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.members.binary_search(&u).is_ok()
    }

    /// In-degree of `u` counting only predecessors inside the view.
    pub fn in_degree_within(&self, u: NodeId) -> Option<usize> {
        self.members.binary_search(&u).ok().map(|i| self.in_view[i])
    }

    /// In-degree of `u` in the whole graph.
    pub fn global_in_degree(&self, u: NodeId) -> Option<usize> {
        self.contains(u).then(|| self.dag.in_degree(u))
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.members.iter().flat_map(move |&u| {
            self.dag
                .direct_predecessors(u)
                .iter()
                .filter(move |p| self.contains(**p))
                .map(move |&p| (p, u))
        })
    }
}

/// Reusable workspace for the reverse path-weight dynamic program.
///
/// For a target `v`, `g(v) = 1` and for every predecessor `x`,
/// `g(x) = sum over direct successors y of x that reach v of w(x->y) * lambda * g(y)`.
/// Nodes are settled in decreasing id order, which is a reverse topological
/// order, so each `g(y)` is final before it is pushed to `y`'s predecessors.
#[derive(Clone, Debug, Default)]
pub struct PathDp {
    value: Vec<f64>,
    stamp: Vec<u32>,
    epoch: u32,
    order: Vec<NodeId>,
}

impl PathDp {
    pub fn new() -> Self {
        Self::default()
    }

    fn begin(&mut self, n: usize) {
        if self.value.len() < n {
            self.value.resize(n, 0.0);
            self.stamp.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    /// Calls `visit(x, g(x))` for every predecessor `x` of `target`, in
    /// decreasing id order. `target` must be in `dag`.
    pub fn run(&mut self, dag: &ReferralDag, target: NodeId, lambda: f64, mut visit: impl FnMut(NodeId, f64)) {
        self.begin(dag.len());
        let epoch = self.epoch;

        // Collect the ancestor set first.
        self.order.clear();
        self.stamp[target.index()] = epoch;
        self.order.push(target);
        let mut i = 0;
        while i < self.order.len() {
            let y = self.order[i];
            i += 1;
            for &x in dag.direct_predecessors(y) {
                if self.stamp[x.index()] != epoch {
                    self.stamp[x.index()] = epoch;
                    self.order.push(x);
                }
            }
        }
        for &x in &self.order {
            self.value[x.index()] = 0.0;
        }
        self.value[target.index()] = 1.0;

        let found = self.order.len();
        let log2 = usize::BITS - found.leading_zeros();
        let sweep = found.saturating_mul(log2 as usize) > target.index();
        if sweep {
            for y in (0..=target.index()).rev() {
                if self.stamp[y] == epoch {
                    self.settle(dag, NodeId(y as u32), target, lambda, &mut visit);
                }
            }
        } else {
            let mut order = core::mem::take(&mut self.order);
            order.sort_unstable_by(|a, b| b.cmp(a));
            for &y in &order {
                self.settle(dag, y, target, lambda, &mut visit);
            }
            self.order = order;
        }
    }

    #[inline]
    fn settle(
        &mut self,
        dag: &ReferralDag,
        y: NodeId,
        target: NodeId,
        lambda: f64,
        visit: &mut impl FnMut(NodeId, f64),
    ) {
        let gy = self.value[y.index()];
        if y != target {
            visit(y, gy);
        }
        let preds = dag.direct_predecessors(y);
        if preds.is_empty() {
            return;
        }
        let push = lambda * gy / preds.len() as f64;
        for &x in preds {
            self.value[x.index()] += push;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn chain() -> ReferralDag {
        let mut g = ReferralDag::new();
        let a = g.add_node(1.0, &[]).unwrap();
        let b = g.add_node(1.0, &[a]).unwrap();
        g.add_node(1.0, &[b]).unwrap();
        g
    }

    fn diamond() -> ReferralDag {
        let mut g = ReferralDag::new();
        let a = g.add_node(1.0, &[]).unwrap();
        let b = g.add_node(1.0, &[a]).unwrap();
        let c = g.add_node(1.0, &[a]).unwrap();
        g.add_node(1.0, &[b, c]).unwrap();
        g
    }

    #[test]
    fn seed_node_has_no_in_edges() {
        let mut g = ReferralDag::new();
        let s = g.add_node(1.0, &[]).unwrap();
        assert_eq!(s, n(0));
        assert_eq!(g.in_degree(s), 0);
    }

    #[test]
    fn two_parents_split_weight() {
        let g = diamond();
        assert_eq!(g.edge_weight(n(1), n(3)), Some(0.5));
        assert_eq!(g.edge_weight(n(2), n(3)), Some(0.5));
        assert_eq!(g.edge_weight(n(0), n(1)), Some(1.0));
        assert_eq!(g.edge_weight(n(0), n(3)), None);
    }

    #[test]
    fn add_node_rejects_bad_input() {
        let mut g = chain();
        assert_eq!(g.add_node(1.0, &[n(9)]), Err(GraphError::UnknownNode(n(9))));
        assert_eq!(
            g.add_node(1.0, &[n(0), n(0)]),
            Err(GraphError::DuplicatePredecessor(n(0)))
        );
        assert!(matches!(g.add_node(-1.0, &[]), Err(GraphError::InvalidEffort(_))));
        assert!(matches!(g.add_node(f64::NAN, &[]), Err(GraphError::InvalidEffort(_))));
        assert_eq!(g.len(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn reachability() {
        let c = chain();
        assert_eq!(c.successors(n(0)).unwrap(), vec![n(1), n(2)]);
        assert!(c.successors(n(2)).unwrap().is_empty());
        assert_eq!(c.predecessors(n(2)).unwrap(), vec![n(0), n(1)]);
        assert!(c.predecessors(n(0)).unwrap().is_empty());
        let d = diamond();
        assert_eq!(d.successors(n(0)).unwrap(), vec![n(1), n(2), n(3)]);
        assert_eq!(d.predecessors(n(3)).unwrap(), vec![n(0), n(1), n(2)]);
        assert_eq!(d.successors(n(7)), Err(GraphError::UnknownNode(n(7))));
    }

    #[test]
    fn rooted_subgraph_views() {
        let c = chain();
        let sink = c.rooted_subgraph(n(2)).unwrap();
        assert_eq!(sink.nodes(), &[n(2)]);
        assert_eq!(sink.edges().count(), 0);
        let whole = c.rooted_subgraph(n(0)).unwrap();
        assert_eq!(whole.nodes(), &[n(0), n(1), n(2)]);
        assert_eq!(whole.edges().collect::<Vec<_>>(), vec![(n(0), n(1)), (n(1), n(2))]);

        let d = diamond();
        let at_b = d.rooted_subgraph(n(1)).unwrap();
        assert_eq!(at_b.nodes(), &[n(1), n(3)]);
        assert_eq!(at_b.edges().collect::<Vec<_>>(), vec![(n(1), n(3))]);
        assert_eq!(at_b.in_degree_within(n(3)), Some(1));
        assert_eq!(at_b.global_in_degree(n(3)), Some(2));
        assert_eq!(at_b.in_degree_within(n(1)), Some(0));
        assert_eq!(at_b.in_degree_within(n(2)), None);
    }

    #[test]
    fn path_aggregates_on_chain_and_diamond() {
        let c = chain();
        let agg = c.ancestor_path_aggregates(n(2), 0.5).unwrap();
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].source, agg[0].value), (n(0), 0.25));
        assert_eq!((agg[1].source, agg[1].value), (n(1), 0.5));

        let d = diamond();
        let agg = d.ancestor_path_aggregates(n(3), 0.5).unwrap();
        let vals: Vec<_> = agg.iter().map(|a| (a.source, a.value)).collect();
        assert_eq!(vals, vec![(n(0), 0.25), (n(1), 0.25), (n(2), 0.25)]);

        // b and c do not reach each other
        assert!(d
            .ancestor_path_aggregates(n(2), 0.5)
            .unwrap()
            .iter()
            .all(|a| a.source != n(1)));
    }

    #[test]
    fn bruteforce_paths() {
        let c = chain();
        assert_eq!(
            c.enumerate_paths_bruteforce(n(0), n(2)).unwrap(),
            vec![PathWeight { weight: 1.0, length: 2 }]
        );
        assert!(c.enumerate_paths_bruteforce(n(2), n(0)).unwrap().is_empty());
        let d = diamond();
        assert_eq!(
            d.enumerate_paths_bruteforce(n(0), n(3)).unwrap(),
            vec![
                PathWeight { weight: 0.5, length: 2 },
                PathWeight { weight: 0.5, length: 2 }
            ]
        );
        let mut big = ReferralDag::new();
        for _ in 0..16 {
            big.add_node(1.0, &[]).unwrap();
        }
        assert!(matches!(
            big.enumerate_paths_bruteforce(n(0), n(1)),
            Err(GraphError::TooLarge { nodes: 16, limit: 15 })
        ));
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(seed in any::<u64>(), nodes in 1usize..=15, p in 0.1f64..0.7, lambda in 0.05f64..0.95) {
            let g = ReferralDag::random(&mut substream(seed, 0), nodes, p, 0.2);
            for v in g.node_ids() {
                let agg = g.ancestor_path_aggregates(v, lambda).unwrap();
                let preds = g.predecessors(v).unwrap();
                prop_assert_eq!(agg.iter().map(|a| a.source).collect::<Vec<_>>(), preds);
                for a in &agg {
                    let oracle: f64 = g
                        .enumerate_paths_bruteforce(a.source, v)
                        .unwrap()
                        .iter()
                        .map(|p| p.weight * libm::pow(lambda, p.length as f64))
                        .sum();
                    prop_assert!((a.value - oracle).abs() <= 1e-9 * oracle.abs().max(1e-300));
                    prop_assert!(a.value > 0.0);
                }
            }
        }

        #[test]
        fn structural_invariants(seed in any::<u64>(), nodes in 1usize..40, p in 0.0f64..0.5) {
            let g = ReferralDag::random(&mut substream(seed, 1), nodes, p, 0.3);
            for v in g.node_ids() {
                for &u in g.direct_predecessors(v) {
                    prop_assert!(u < v);
                }
                if g.in_degree(v) > 0 {
                    let total: f64 = g.direct_predecessors(v).iter().map(|&u| g.edge_weight(u, v).unwrap()).sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                }
                let view = g.rooted_subgraph(v).unwrap();
                for &u in view.nodes() {
                    prop_assert!(view.in_degree_within(u).unwrap() <= view.global_in_degree(u).unwrap());
                }
            }
        }
    }
}
