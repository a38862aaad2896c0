//! Social networks, influence estimation and threshold cascades that grow
//! referral DAGs.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::engine::MechanismParams;
use crate::graph::{GraphError, NodeId, ReferralDag};
use crate::population::{
    best_response_dynamics, choose_effort, BestResponseOutcome, EffortModel, ParticipationRule, PlayerProfile,
    PopulationError, Prospect, UserId,
};
use crate::rng::{stream_key, substream};

const THRESHOLD_STREAM: u64 = 0x7468_7265_7368;
const SEED_STREAM: u64 = 0x7365_6564;
const NETWORK_STREAM: u64 = 0x6e65_7477;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error("user {user} is not in a network of {nodes} users")]
    UnknownUser { user: UserId, nodes: usize },
    #[error("self loop on user {0}")]
    SelfLoop(UserId),
    #[error("{from} -> {to} is not an edge of the network")]
    NotAnEdge { from: UserId, to: UserId },
    #[error("probability on {from} -> {to} must be in [0, 1], got {p}")]
    Probability { from: UserId, to: UserId, p: f64 },
    #[error("record {index}: user {user} is not in the network")]
    RecordUser { index: usize, user: UserId },
    #[error("record {index}: user {user} already performed action {action}")]
    DuplicateRecord { index: usize, user: UserId, action: u64 },
    #[error("{requested} seeds requested from {nodes} users")]
    TooManySeeds { requested: usize, nodes: usize },
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("{profiles} profiles for {nodes} users")]
    ProfileCount { profiles: usize, nodes: usize },
    #[error("density must be in [0, 1], got {0}")]
    Density(f64),
    #[error("reciprocity must be in [0, 1], got {0}")]
    Reciprocity(f64),
    #[error("probability cap must be in [0, 1], got {0}")]
    ProbabilityCap(f64),
    #[error("a network needs at least one user")]
    EmptyNetwork,
}

/// Directed follower network over users `0..n`. May contain cycles.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SocialGraph {
    out: Vec<Vec<UserId>>,
    inn: Vec<Vec<UserId>>,
    edges: usize,
}

impl SocialGraph {
    pub fn new(nodes: usize) -> Self {
        SocialGraph {
            out: vec![Vec::new(); nodes],
            inn: vec![Vec::new(); nodes],
            edges: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn users(&self) -> impl ExactSizeIterator<Item = UserId> + DoubleEndedIterator {
        (0..self.out.len() as u32).map(UserId::new)
    }

    fn check(&self, u: UserId) -> Result<(), CascadeError> {
        if u.index() < self.out.len() {
            Ok(())
        } else {
            Err(CascadeError::UnknownUser {
                user: u,
                nodes: self.out.len(),
            })
        }
    }

    /// Adds `from -> to`; returns `false` if the edge was already present.
    pub fn add_edge(&mut self, from: UserId, to: UserId) -> Result<bool, CascadeError> {
        self.check(from)?;
        self.check(to)?;
        if from == to {
            return Err(CascadeError::SelfLoop(from));
        }
        let out = &mut self.out[from.index()];
        match out.binary_search(&to) {
            Ok(_) => Ok(false),
            Err(pos) => {
                out.insert(pos, to);
                let inn = &mut self.inn[to.index()];
                let pos = inn.binary_search(&from).unwrap_or_else(|p| p);
                inn.insert(pos, from);
                self.edges += 1;
                Ok(true)
            }
        }
    }

    pub fn from_edges<I>(nodes: usize, edges: I) -> Result<Self, CascadeError>
    where
        I: IntoIterator<Item = (UserId, UserId)>,
    {
        let mut g = SocialGraph::new(nodes);
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn has_edge(&self, from: UserId, to: UserId) -> bool {
        self.out.get(from.index()).is_some_and(|o| o.binary_search(&to).is_ok())
    }

    /// Sorted out-neighbours.
    pub fn out_neighbors(&self, u: UserId) -> &[UserId] {
        &self.out[u.index()]
    }

    /// Sorted in-neighbours.
    pub fn in_neighbors(&self, u: UserId) -> &[UserId] {
        &self.inn[u.index()]
    }

    pub fn out_degree(&self, u: UserId) -> usize {
        self.out[u.index()].len()
    }

    /// Edges ordered by `(from, to)`.
    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.users()
            .flat_map(move |u| self.out[u.index()].iter().map(move |&v| (u, v)))
    }

    /// The largest weakly connected component, relabelled densely in
    /// ascending original id, together with the original id of every new
    /// user. Ties go to the component holding the smallest user id.
    pub fn largest_weakly_connected_component(&self) -> (SocialGraph, Vec<UserId>) {
        let n = self.node_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (a, b) in self.edges() {
            let ra = find(&mut parent, a.index());
            let rb = find(&mut parent, b.index());
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        }
        let mut size = vec![0usize; n];
        for x in 0..n {
            let r = find(&mut parent, x);
            size[r] += 1;
        }
        let Some(best) = (0..n).max_by(|&a, &b| size[a].cmp(&size[b]).then(b.cmp(&a))) else {
            return (SocialGraph::new(0), Vec::new());
        };
        let keep: Vec<UserId> = (0..n)
            .filter(|&x| find(&mut parent, x) == best)
            .map(|x| UserId::new(x as u32))
            .collect();
        let mut relabel = vec![None; n];
        for (i, u) in keep.iter().enumerate() {
            relabel[u.index()] = Some(UserId::new(i as u32));
        }
        let mut g = SocialGraph::new(keep.len());
        for (a, b) in self.edges() {
            if let (Some(x), Some(y)) = (relabel[a.index()], relabel[b.index()]) {
                g.add_edge(x, y).expect("edge of a valid graph");
            }
        }
        (g, keep)
    }
}

/// One `(user, action, timestamp)` record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActionRecord {
    pub user: UserId,
    pub action: u64,
    pub timestamp: i64,
}

/// Who performed which action when. At most one record per `(user, action)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActionLog {
    records: Vec<ActionRecord>,
    seen: BTreeMap<(u64, UserId), usize>,
}

impl ActionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: ActionRecord) -> Result<(), CascadeError> {
        let index = self.records.len();
        if self.seen.insert((record.action, record.user), index).is_some() {
            return Err(CascadeError::DuplicateRecord {
                index,
                user: record.user,
                action: record.action,
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn from_records<I: IntoIterator<Item = ActionRecord>>(records: I) -> Result<Self, CascadeError> {
        let mut log = ActionLog::new();
        for r in records {
            log.push(r)?;
        }
        Ok(log)
    }

    pub fn records(&self) -> &[ActionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct users appearing in the log.
    pub fn user_count(&self) -> usize {
        let mut users: Vec<UserId> = self.records.iter().map(|r| r.user).collect();
        users.sort_unstable();
        users.dedup();
        users.len()
    }

    /// Distinct actions appearing in the log.
    pub fn action_count(&self) -> usize {
        let mut actions: Vec<u64> = self.records.iter().map(|r| r.action).collect();
        actions.sort_unstable();
        actions.dedup();
        actions.len()
    }
}

/// Influence probability on every edge of a social network.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceProbabilities {
    /// `incoming[u]`: `(v, p_vu)` for every in-neighbour `v`, sorted by `v`.
    incoming: Vec<Vec<(UserId, f64)>>,
}

impl InfluenceProbabilities {
    /// All-zero probabilities on the edges of `graph`.
    pub fn zeros(graph: &SocialGraph) -> Self {
        InfluenceProbabilities {
            incoming: graph
                .users()
                .map(|u| graph.in_neighbors(u).iter().map(|&v| (v, 0.0)).collect())
                .collect(),
        }
    }

    /// The same probability on every edge.
    pub fn uniform(graph: &SocialGraph, p: f64) -> Result<Self, CascadeError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(CascadeError::ProbabilityCap(p));
        }
        let mut probs = Self::zeros(graph);
        for list in &mut probs.incoming {
            for e in list.iter_mut() {
                e.1 = p;
            }
        }
        Ok(probs)
    }

    pub fn node_count(&self) -> usize {
        self.incoming.len()
    }

    pub fn get(&self, from: UserId, to: UserId) -> Option<f64> {
        let list = self.incoming.get(to.index())?;
        list.binary_search_by_key(&from, |e| e.0).ok().map(|i| list[i].1)
    }

    pub fn set(&mut self, from: UserId, to: UserId, p: f64) -> Result<(), CascadeError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(CascadeError::Probability { from, to, p });
        }
        let list = self
            .incoming
            .get_mut(to.index())
            .ok_or(CascadeError::NotAnEdge { from, to })?;
        let i = list
            .binary_search_by_key(&from, |e| e.0)
            .map_err(|_| CascadeError::NotAnEdge { from, to })?;
        list[i].1 = p;
        Ok(())
    }

    /// `(v, p_vu)` for the in-edges of `u`.
    pub fn incoming(&self, u: UserId) -> &[(UserId, f64)] {
        &self.incoming[u.index()]
    }

    /// `(from, to, p)` ordered by `(from, to)`.
    pub fn entries(&self) -> Vec<(UserId, UserId, f64)> {
        let mut out: Vec<(UserId, UserId, f64)> = self
            .incoming
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&(v, p)| (v, UserId::new(u as u32), p)))
            .collect();
        out.sort_by_key(|a| (a.0, a.1));
        out
    }

    /// Outgoing probabilities of every user, ordered by target.
    fn outgoing(&self) -> Vec<Vec<(UserId, f64)>> {
        let mut out = vec![Vec::new(); self.incoming.len()];
        for (u, list) in self.incoming.iter().enumerate() {
            for &(v, p) in list {
                out[v.index()].push((UserId::new(u as u32), p));
            }
        }
        out
    }
}

/// Static Bernoulli estimate: `p_vu` is the number of actions `u` performed
/// strictly after `v` over the edge `v -> u`, divided by the number of
/// actions `v` performed.
pub fn estimate_probabilities(graph: &SocialGraph, log: &ActionLog) -> Result<InfluenceProbabilities, CascadeError> {
    let n = graph.node_count();
    for (index, r) in log.records().iter().enumerate() {
        if r.user.index() >= n {
            return Err(CascadeError::RecordUser { index, user: r.user });
        }
    }
    let mut by_action: BTreeMap<u64, Vec<(UserId, i64)>> = BTreeMap::new();
    let mut performed = vec![0u64; n];
    for r in log.records() {
        by_action.entry(r.action).or_default().push((r.user, r.timestamp));
        performed[r.user.index()] += 1;
    }
    let mut probs = InfluenceProbabilities::zeros(graph);
    let mut hits: Vec<Vec<u64>> = probs.incoming.iter().map(|l| vec![0; l.len()]).collect();
    for records in by_action.values_mut() {
        records.sort_unstable();
        for &(u, ts_u) in records.iter() {
            for (slot, &(v, _)) in probs.incoming[u.index()].iter().enumerate() {
                if let Ok(i) = records.binary_search_by_key(&v, |r| r.0) {
                    if records[i].1 < ts_u {
                        hits[u.index()][slot] += 1;
                    }
                }
            }
        }
    }
    for (u, list) in probs.incoming.iter_mut().enumerate() {
        for (slot, e) in list.iter_mut().enumerate() {
            let acts = performed[e.0.index()];
            e.1 = if acts == 0 {
                0.0
            } else {
                hits[u][slot] as f64 / acts as f64
            };
        }
    }
    Ok(probs)
}

/// How the initial adopters are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum SeedRule {
    UniformRandom(usize),
    /// The `k` users with the most out-neighbours, ties to lower ids. A cheap
    /// stand-in for influence maximisation.
    TopOutDegree(usize),
}

impl SeedRule {
    pub fn count(&self) -> usize {
        match *self {
            SeedRule::UniformRandom(k) | SeedRule::TopOutDegree(k) => k,
        }
    }

    /// Seeds in ascending user id.
    pub fn select<R: Rng + ?Sized>(&self, graph: &SocialGraph, rng: &mut R) -> Result<Vec<UserId>, CascadeError> {
        let k = self.count();
        let n = graph.node_count();
        if k == 0 {
            return Err(CascadeError::NoSeeds);
        }
        if k > n {
            return Err(CascadeError::TooManySeeds { requested: k, nodes: n });
        }
        let mut seeds: Vec<UserId> = match self {
            SeedRule::UniformRandom(_) => index::sample(rng, n, k)
                .into_iter()
                .map(|i| UserId::new(i as u32))
                .collect(),
            SeedRule::TopOutDegree(_) => {
                let mut users: Vec<UserId> = graph.users().collect();
                users.sort_by(|a, b| graph.out_degree(*b).cmp(&graph.out_degree(*a)).then(a.cmp(b)));
                users.truncate(k);
                users
            }
        };
        seeds.sort_unstable();
        Ok(seeds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeConfig {
    pub seed_rule: SeedRule,
    pub rng_seed: u64,
    pub max_rounds: usize,
}

/// A finished cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeOutcome {
    /// Referral DAG in activation order.
    pub dag: ReferralDag,
    /// User behind every node.
    pub users: Vec<UserId>,
    /// Node of every user, if activated.
    pub nodes: Vec<Option<NodeId>>,
    /// Whether each node passed the campaign on.
    pub referring: Vec<bool>,
    /// Diffusion rounds run after seeding.
    pub rounds: usize,
    /// Present when efforts were refined by best-response dynamics.
    pub best_response: Option<BestResponseOutcome>,
}

impl CascadeOutcome {
    /// Profiles in node order.
    pub fn node_profiles(&self, profiles: &[PlayerProfile]) -> Vec<PlayerProfile> {
        self.users.iter().map(|u| profiles[u.index()]).collect()
    }

    pub fn total_effort(&self) -> f64 {
        self.dag.efforts().iter().sum()
    }
}

/// Everything a cascade run needs besides the network.
#[derive(Clone, Copy, Debug)]
pub struct Campaign<'a> {
    pub profiles: &'a [PlayerProfile],
    pub effort_model: EffortModel,
    pub participation: ParticipationRule,
    pub params: MechanismParams,
}

/// General threshold diffusion with `f_u(S) = 1 - prod (1 - p_vu)`.
///
/// Thresholds are drawn per user from `U[0, 1)`. Rounds are synchronous: a
/// user activates when the referring active in-neighbours at the start of
/// the round push `f_u` to its threshold (and above 0). Activated users join
/// in ascending user id with those in-neighbours as direct predecessors.
/// On joining, a player picks its effort from the contest it anticipates
/// with the still-inactive out-neighbours it can reach, and decides whether
/// to refer. Under [`EffortModel::BestResponse`] the efforts are then
/// refined by best-response dynamics on the final DAG.
pub fn simulate_cascade(
    graph: &SocialGraph,
    probs: &InfluenceProbabilities,
    config: &CascadeConfig,
    campaign: &Campaign<'_>,
) -> Result<CascadeOutcome, CascadeError> {
    let n = graph.node_count();
    if campaign.profiles.len() != n {
        return Err(CascadeError::ProfileCount {
            profiles: campaign.profiles.len(),
            nodes: n,
        });
    }
    if probs.node_count() != n {
        return Err(CascadeError::UnknownUser {
            user: UserId::new(probs.node_count().saturating_sub(1) as u32),
            nodes: n,
        });
    }
    campaign.effort_model.validate()?;
    let params = &campaign.params;

    let mut trng = substream(config.rng_seed, stream_key(&[THRESHOLD_STREAM]));
    let thresholds: Vec<f64> = (0..n).map(|_| trng.random::<f64>()).collect();
    let mut srng = substream(config.rng_seed, stream_key(&[SEED_STREAM]));
    let seeds = config.seed_rule.select(graph, &mut srng)?;

    let mut st = CascadeState {
        graph,
        outgoing: probs.outgoing(),
        campaign,
        dag: ReferralDag::with_capacity(n),
        active: vec![false; n],
        nodes: vec![None; n],
        users: Vec::new(),
        referring: Vec::new(),
    };

    // a wave activates as a whole before any of its members anticipates
    for &s in &seeds {
        st.active[s.index()] = true;
    }
    for &s in &seeds {
        st.join(s, &[])?;
    }

    let mut fresh: Vec<UserId> = seeds;
    let mut rounds = 0;
    let mut candidates: Vec<UserId> = Vec::new();
    let mut activated: Vec<(UserId, Vec<NodeId>)> = Vec::new();
    while rounds < config.max_rounds {
        candidates.clear();
        for &v in &fresh {
            if !st.refers(v) {
                continue;
            }
            for &(w, p) in &st.outgoing[v.index()] {
                if p > 0.0 && !st.active[w.index()] {
                    candidates.push(w);
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        activated.clear();
        for &u in &candidates {
            let mut stay = 1.0;
            let mut preds = Vec::new();
            for &(v, p) in probs.incoming(u) {
                if p > 0.0 && st.refers(v) {
                    stay *= 1.0 - p;
                    preds.push(st.nodes[v.index()].expect("referrers are active"));
                }
            }
            let f = 1.0 - stay;
            if f > 0.0 && f >= thresholds[u.index()] {
                preds.sort_unstable();
                activated.push((u, preds));
            }
        }
        if activated.is_empty() {
            break;
        }
        rounds += 1;
        for (u, _) in &activated {
            st.active[u.index()] = true;
        }
        fresh.clear();
        for (u, preds) in &activated {
            st.join(*u, preds)?;
            fresh.push(*u);
        }
    }
    let CascadeState {
        mut dag,
        nodes,
        users,
        referring,
        ..
    } = st;

    let best_response = match campaign.effort_model {
        EffortModel::BestResponse { grid_step, max_rounds } => {
            let node_profiles: Vec<PlayerProfile> = users.iter().map(|u| campaign.profiles[u.index()]).collect();
            let out = best_response_dynamics(&dag, &node_profiles, params, grid_step, max_rounds)?;
            for (i, &t) in out.efforts.iter().enumerate() {
                dag.set_task_effort(NodeId::new(i as u32), t)?;
            }
            Some(out)
        }
        EffortModel::AbilityProportional => None,
    };

    Ok(CascadeOutcome {
        dag,
        users,
        nodes,
        referring,
        rounds,
        best_response,
    })
}

struct CascadeState<'a> {
    graph: &'a SocialGraph,
    outgoing: Vec<Vec<(UserId, f64)>>,
    campaign: &'a Campaign<'a>,
    dag: ReferralDag,
    active: Vec<bool>,
    nodes: Vec<Option<NodeId>>,
    users: Vec<UserId>,
    referring: Vec<bool>,
}

impl CascadeState<'_> {
    fn refers(&self, u: UserId) -> bool {
        self.nodes[u.index()].is_some_and(|id| self.referring[id.index()])
    }

    /// The contest `u` expects two referral levels deep. Every inactive
    /// out-neighbour `w` joins with probability `p_uw` at an effort equal to
    /// its ability and recruits its own inactive out-neighbours the same way;
    /// the paths are treated as unshared (`omega = 1`).
    fn anticipate(&self, u: UserId) -> Prospect {
        let params = &self.campaign.params;
        let lambda = params.lambda;
        let ability = |w: UserId| self.campaign.profiles[w.index()].ability;
        let mut slope = 0.0;
        let mut attributed = 0.0;
        let mut rival = 0.0;
        let mut open = 0usize;
        for &(w, p) in &self.outgoing[u.index()] {
            if p <= 0.0 || self.active[w.index()] {
                continue;
            }
            open += 1;
            let tw = ability(w);
            let mut reach = 0.0;
            let mut second_rivals = 0.0;
            for &(x, q) in &self.outgoing[w.index()] {
                if q > 0.0 && x != u && !self.active[x.index()] {
                    let tx = ability(x);
                    reach += q * tx;
                    second_rivals += q * params.csf_weight(params.eta * tx * tx);
                }
            }
            let bw = params.eta * tw * tw + tw * lambda * reach;
            slope += p * (lambda * tw + lambda * lambda * reach);
            attributed += p * (tw + reach);
            rival += p * (params.csf_weight(bw) + second_rivals);
        }
        let deg = self.graph.out_degree(u);
        Prospect {
            credit_slope: slope,
            rival_weight: rival,
            pool: params.phi * attributed,
            out_fraction: if deg > 0 { open as f64 / deg as f64 } else { 0.0 },
        }
    }

    fn join(&mut self, u: UserId, preds: &[NodeId]) -> Result<(), CascadeError> {
        let params = &self.campaign.params;
        let prospect = self.anticipate(u);
        let profile = &self.campaign.profiles[u.index()];
        let t = choose_effort(&self.campaign.effort_model, profile, &prospect, params);
        let refers = self
            .campaign
            .participation
            .refers(t, prospect.diffusion_reward(t, params));
        let id = self.dag.add_node(t, preds)?;
        self.nodes[u.index()] = Some(id);
        self.users.push(u);
        self.referring.push(refers);
        Ok(())
    }
}

/// Random network families for desk-scale experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum NetworkModel {
    /// Each pair `i < j` is linked `i -> j` with probability `density`.
    ErdosRenyiDag,
    /// Every newcomer follows `round(density * (n - 1) / 2)` (at least one)
    /// earlier users picked proportionally to degree plus one, which matches
    /// the expected edge count of the Erdos-Renyi family. Influence flows
    /// from the followed user to the newcomer, and back with probability
    /// `reciprocity`.
    PreferentialAttachment { reciprocity: f64 },
}

/// A reproducible synthetic network with probabilities drawn from `U[0, p_max]`.
pub fn generate_synthetic(
    model: NetworkModel,
    n: usize,
    density: f64,
    p_max: f64,
    seed: u64,
) -> Result<(SocialGraph, InfluenceProbabilities), CascadeError> {
    if n == 0 {
        return Err(CascadeError::EmptyNetwork);
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(CascadeError::Density(density));
    }
    if !(0.0..=1.0).contains(&p_max) {
        return Err(CascadeError::ProbabilityCap(p_max));
    }
    let mut rng = substream(seed, stream_key(&[NETWORK_STREAM]));
    let mut g = SocialGraph::new(n);
    match model {
        NetworkModel::ErdosRenyiDag => {
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random_bool(density) {
                        g.add_edge(UserId::new(i as u32), UserId::new(j as u32))?;
                    }
                }
            }
        }
        NetworkModel::PreferentialAttachment { reciprocity } => {
            if !(0.0..=1.0).contains(&reciprocity) {
                return Err(CascadeError::Reciprocity(reciprocity));
            }
            let m = (crate::math::round(density * (n as f64 - 1.0) / 2.0) as usize).max(1);
            // one ticket per unit of (degree + 1)
            let mut tickets: Vec<u32> = Vec::with_capacity(n * (2 * m + 1));
            tickets.push(0);
            let mut picked: Vec<u32> = Vec::with_capacity(m);
            for j in 1..n as u32 {
                picked.clear();
                let want = m.min(j as usize);
                while picked.len() < want {
                    let c = tickets[rng.random_range(0..tickets.len())];
                    if !picked.contains(&c) {
                        picked.push(c);
                    }
                }
                picked.sort_unstable();
                for &i in &picked {
                    g.add_edge(UserId::new(i), UserId::new(j))?;
                    if rng.random_bool(reciprocity) {
                        g.add_edge(UserId::new(j), UserId::new(i))?;
                    }
                    tickets.push(i);
                    tickets.push(j);
                }
                tickets.push(j);
            }
        }
    }
    let mut probs = InfluenceProbabilities::zeros(&g);
    for list in &mut probs.incoming {
        for e in list.iter_mut() {
            e.1 = rng.random::<f64>() * p_max;
        }
    }
    Ok((g, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{sample_profiles, AbilityGroup, GroupMix};
    use proptest::prelude::{any, prop_assert, prop_assume, proptest};

    fn u(i: u32) -> UserId {
        UserId::new(i)
    }

    fn rec(user: u32, action: u64, timestamp: i64) -> ActionRecord {
        ActionRecord {
            user: u(user),
            action,
            timestamp,
        }
    }

    fn able(n: usize) -> Vec<PlayerProfile> {
        (0..n)
            .map(|i| PlayerProfile::new(u(i as u32), AbilityGroup::Ho, 0.5).unwrap())
            .collect()
    }

    fn campaign(profiles: &[PlayerProfile]) -> Campaign<'_> {
        Campaign {
            profiles,
            effort_model: EffortModel::AbilityProportional,
            participation: ParticipationRule::AllActive,
            params: MechanismParams::standard(0.5).unwrap(),
        }
    }

    fn path(n: u32) -> SocialGraph {
        SocialGraph::from_edges(n as usize, (1..n).map(|i| (u(i - 1), u(i)))).unwrap()
    }

    #[test]
    fn bernoulli_counts() {
        // v = 0 performs 4 actions; u = 1 repeats two of them later, one at
        // the same time and one earlier
        let g = SocialGraph::from_edges(3, [(u(0), u(1)), (u(2), u(1))]).unwrap();
        let log = ActionLog::from_records([
            rec(0, 1, 10),
            rec(0, 2, 10),
            rec(0, 3, 10),
            rec(0, 4, 10),
            rec(1, 1, 11),
            rec(1, 2, 30),
            rec(1, 3, 10),
            rec(1, 4, 5),
        ])
        .unwrap();
        let p = estimate_probabilities(&g, &log).unwrap();
        assert_eq!(p.get(u(0), u(1)), Some(0.5));
        assert_eq!(p.get(u(2), u(1)), Some(0.0));
        assert_eq!(p.get(u(1), u(0)), None);
    }

    #[test]
    fn log_validation() {
        let g = SocialGraph::new(2);
        let log = ActionLog::from_records([rec(0, 1, 1), rec(5, 1, 2)]).unwrap();
        assert_eq!(
            estimate_probabilities(&g, &log).unwrap_err(),
            CascadeError::RecordUser { index: 1, user: u(5) }
        );
        assert!(matches!(
            ActionLog::from_records([rec(0, 1, 1), rec(0, 1, 2)]).unwrap_err(),
            CascadeError::DuplicateRecord { index: 1, .. }
        ));
    }

    #[test]
    fn certain_path_activates_everything() {
        let g = path(6);
        let probs = InfluenceProbabilities::uniform(&g, 1.0).unwrap();
        let ps = able(6);
        let cfg = CascadeConfig {
            seed_rule: SeedRule::TopOutDegree(1),
            rng_seed: 1,
            max_rounds: 100,
        };
        let out = simulate_cascade(&g, &probs, &cfg, &campaign(&ps)).unwrap();
        assert_eq!(out.dag.len(), 6);
        assert_eq!(out.rounds, 5);
        let edges: Vec<_> = out.dag.edges().map(|(a, b)| (a.get(), b.get())).collect();
        assert_eq!(edges, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        assert_eq!(out.users, (0..6).map(u).collect::<Vec<_>>());
    }

    #[test]
    fn zero_probabilities_keep_seeds_only() {
        let g = path(6);
        let probs = InfluenceProbabilities::zeros(&g);
        let ps = able(6);
        let cfg = CascadeConfig {
            seed_rule: SeedRule::UniformRandom(2),
            rng_seed: 3,
            max_rounds: 100,
        };
        let out = simulate_cascade(&g, &probs, &cfg, &campaign(&ps)).unwrap();
        assert_eq!(out.dag.len(), 2);
        assert_eq!(out.dag.edge_count(), 0);
    }

    #[test]
    fn two_parents_share_the_child() {
        let g = SocialGraph::from_edges(3, [(u(0), u(2)), (u(1), u(2))]).unwrap();
        let probs = InfluenceProbabilities::uniform(&g, 1.0).unwrap();
        let ps = able(3);
        let cfg = CascadeConfig {
            seed_rule: SeedRule::TopOutDegree(2),
            rng_seed: 0,
            max_rounds: 10,
        };
        let out = simulate_cascade(&g, &probs, &cfg, &campaign(&ps)).unwrap();
        let child = out.nodes[2].unwrap();
        assert_eq!(out.dag.in_degree(child), 2);
        assert_eq!(out.dag.edge_weight(out.nodes[0].unwrap(), child), Some(0.5));
    }

    #[test]
    fn seed_rules() {
        let g = SocialGraph::from_edges(4, [(u(3), u(0)), (u(3), u(1)), (u(1), u(0))]).unwrap();
        let mut rng = substream(0, 0);
        assert_eq!(
            SeedRule::TopOutDegree(2).select(&g, &mut rng).unwrap(),
            vec![u(1), u(3)]
        );
        assert!(SeedRule::UniformRandom(5).select(&g, &mut rng).is_err());
        assert!(SeedRule::UniformRandom(0).select(&g, &mut rng).is_err());
    }

    #[test]
    fn synthetic_networks() {
        let (g, p) = generate_synthetic(NetworkModel::ErdosRenyiDag, 1, 0.5, 0.3, 1).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
        assert!(p.entries().is_empty());

        let d = 0.05;
        let n = 100.0;
        let pairs = n * (n - 1.0) / 2.0;
        let sd = crate::math::sqrt(pairs * d * (1.0 - d));
        for seed in 0..5 {
            let (g, p) = generate_synthetic(NetworkModel::ErdosRenyiDag, 100, d, 0.3, seed).unwrap();
            assert!((g.edge_count() as f64 - d * pairs).abs() < 5.0 * sd);
            assert!(p.entries().iter().all(|e| (0.0..=0.3).contains(&e.2)));
        }
        let a = generate_synthetic(
            NetworkModel::PreferentialAttachment { reciprocity: 0.0 },
            300,
            0.02,
            0.2,
            8,
        )
        .unwrap();
        let b = generate_synthetic(
            NetworkModel::PreferentialAttachment { reciprocity: 0.0 },
            300,
            0.02,
            0.2,
            8,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.edge_count(), 1 + 2 + 3 * 297);
        assert!(generate_synthetic(NetworkModel::ErdosRenyiDag, 10, 1.5, 0.2, 0).is_err());
        assert!(generate_synthetic(NetworkModel::ErdosRenyiDag, 0, 0.5, 0.2, 0).is_err());
    }

    #[test]
    fn weak_components() {
        let g = SocialGraph::from_edges(7, [(u(0), u(1)), (u(2), u(3)), (u(4), u(3)), (u(5), u(4))]).unwrap();
        let (c, ids) = g.largest_weakly_connected_component();
        assert_eq!(ids, vec![u(2), u(3), u(4), u(5)]);
        assert_eq!(c.edge_count(), 3);
        assert!(c.has_edge(u(0), u(1)) && c.has_edge(u(2), u(1)) && c.has_edge(u(3), u(2)));
    }

    #[test]
    fn cascades_are_reproducible() {
        let (g, p) = generate_synthetic(
            NetworkModel::PreferentialAttachment { reciprocity: 0.5 },
            400,
            0.01,
            0.5,
            2,
        )
        .unwrap();
        let ps = sample_profiles(&GroupMix::uniform(), 400, 2);
        let cfg = CascadeConfig {
            seed_rule: SeedRule::UniformRandom(5),
            rng_seed: 17,
            max_rounds: 50,
        };
        let mut c = campaign(&ps);
        c.effort_model = EffortModel::best_response();
        c.participation = ParticipationRule::IncentiveGated { referral_cost: 0.01 };
        let a = simulate_cascade(&g, &p, &cfg, &c).unwrap();
        let b = simulate_cascade(&g, &p, &cfg, &c).unwrap();
        assert_eq!(a, b);
        assert!(a.dag.efforts().iter().all(|t| (0.0..=1.0).contains(t)));
        for (i, uid) in a.users.iter().enumerate() {
            assert_eq!(a.nodes[uid.index()], Some(NodeId::new(i as u32)));
        }
    }

    proptest! {
        #[test]
        fn raising_a_probability_never_shrinks_the_cascade(seed in any::<u64>(), bump in 0usize..500, to in 0.0f64..=1.0) {
            let (g, p) = generate_synthetic(NetworkModel::ErdosRenyiDag, 40, 0.08, 0.6, seed).unwrap();
            let entries = p.entries();
            prop_assume!(!entries.is_empty());
            let (a, b, old) = entries[bump % entries.len()];
            let mut q = p.clone();
            q.set(a, b, old.max(to)).unwrap();
            let ps = able(40);
            let cfg = CascadeConfig { seed_rule: SeedRule::UniformRandom(2), rng_seed: seed, max_rounds: 100 };
            let lo = simulate_cascade(&g, &p, &cfg, &campaign(&ps)).unwrap();
            let hi = simulate_cascade(&g, &q, &cfg, &campaign(&ps)).unwrap();
            for user in g.users() {
                if lo.nodes[user.index()].is_some() {
                    prop_assert!(hi.nodes[user.index()].is_some());
                }
            }
        }

        #[test]
        fn estimates_are_probabilities(seed in any::<u64>()) {
            let mut rng = substream(seed, 0);
            let (g, _) = generate_synthetic(NetworkModel::ErdosRenyiDag, 12, 0.3, 0.5, seed).unwrap();
            let mut log = ActionLog::new();
            for user in 0..12u32 {
                for action in 0..6u64 {
                    if rng.random_bool(0.5) {
                        log.push(rec(user, action, rng.random_range(0..5))).unwrap();
                    }
                }
            }
            let p = estimate_probabilities(&g, &log).unwrap();
            for (a, b, x) in p.entries() {
                prop_assert!((0.0..=1.0).contains(&x));
                prop_assert!(g.has_edge(a, b));
            }
        }
    }
}
