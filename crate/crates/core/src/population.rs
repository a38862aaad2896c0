//! Heterogeneous players: ability sampling and effort choice.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::engine::MechanismParams;
use crate::graph::{NodeId, PathDp, ReferralDag};
use crate::rng::{stream_key, substream};

/// Spread of an individual's ability around the mean drawn for them.
pub const INDIVIDUAL_SPREAD: f64 = 0.05;
pub const ABILITY_MIN: f64 = 0.01;
pub const ABILITY_MAX: f64 = 0.99;

const PROFILE_STREAM: u64 = 0x70_726f_6669_6c65;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("group fraction for {group} must be in [0, 1], got {value}")]
    Fraction { group: AbilityGroup, value: f64 },
    #[error("group fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("group {0} listed twice")]
    DuplicateGroup(AbilityGroup),
    #[error("unknown ability group {0:?}")]
    UnknownGroup(alloc::string::String),
    #[error("ability must lie strictly between 0 and 1, got {0}")]
    Ability(f64),
    #[error("effort grid step must be in (0, 1], got {0}")]
    GridStep(f64),
    #[error("{profiles} profiles for a graph of {nodes} nodes")]
    ProfileCount { profiles: usize, nodes: usize },
}

/// Player identity in the social network, independent of join order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct UserId(u32);

impl UserId {
    pub const fn new(raw: u32) -> Self {
        UserId(raw)
    }

    pub const fn get(self) -> u32 {
        self.0
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for UserId {
    fn from(raw: u32) -> Self {
        UserId(raw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AbilityGroup {
    /// Homogeneous, means around 0.5.
    #[cfg_attr(feature = "serde", serde(rename = "HO"))]
    Ho,
    /// Widely spread around a low mean.
    #[cfg_attr(feature = "serde", serde(rename = "HL"))]
    Hl,
    /// Widely spread around a high mean.
    #[cfg_attr(feature = "serde", serde(rename = "HH"))]
    Hh,
    /// Two tight clusters at 0.2 and 0.8.
    #[cfg_attr(feature = "serde", serde(rename = "DI"))]
    Di,
}

impl AbilityGroup {
    pub const ALL: [AbilityGroup; 4] = [AbilityGroup::Ho, AbilityGroup::Hl, AbilityGroup::Hh, AbilityGroup::Di];

    pub fn tag(self) -> &'static str {
        match self {
            AbilityGroup::Ho => "HO",
            AbilityGroup::Hl => "HL",
            AbilityGroup::Hh => "HH",
            AbilityGroup::Di => "DI",
        }
    }

    /// Draws the mean ability for one player of this group.
    pub fn sample_mean<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let (mean, sd) = match self {
            AbilityGroup::Ho => (0.5, 0.05),
            AbilityGroup::Hl => (0.2, 0.7),
            AbilityGroup::Hh => (0.8, 0.7),
            AbilityGroup::Di => {
                if rng.random_bool(0.5) {
                    (0.2, 0.05)
                } else {
                    (0.8, 0.05)
                }
            }
        };
        Normal::new(mean, sd).expect("finite sd").sample(rng)
    }
}

impl fmt::Display for AbilityGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AbilityGroup {
    type Err = PopulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AbilityGroup::ALL
            .into_iter()
            .find(|g| g.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| PopulationError::UnknownGroup(s.into()))
    }
}

/// Fractions of the population drawn from each group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupMix {
    entries: Vec<(AbilityGroup, f64)>,
}

impl GroupMix {
    pub fn new(entries: Vec<(AbilityGroup, f64)>) -> Result<Self, PopulationError> {
        for (i, &(group, value)) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(PopulationError::Fraction { group, value });
            }
            if entries[..i].iter().any(|&(g, _)| g == group) {
                return Err(PopulationError::DuplicateGroup(group));
            }
        }
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PopulationError::FractionSum(sum));
        }
        Ok(GroupMix { entries })
    }

    pub fn pure(group: AbilityGroup) -> Self {
        GroupMix {
            entries: vec![(group, 1.0)],
        }
    }

    /// A quarter of the players from each group.
    pub fn uniform() -> Self {
        GroupMix {
            entries: AbilityGroup::ALL.iter().map(|&g| (g, 0.25)).collect(),
        }
    }

    pub fn entries(&self) -> &[(AbilityGroup, f64)] {
        &self.entries
    }

    /// Splits `n` players by largest remainder.
    pub fn counts(&self, n: usize) -> Vec<(AbilityGroup, usize)> {
        let mut out: Vec<(AbilityGroup, usize)> = Vec::with_capacity(self.entries.len());
        let mut rems: Vec<(f64, usize)> = Vec::with_capacity(self.entries.len());
        let mut assigned = 0;
        for (i, &(g, f)) in self.entries.iter().enumerate() {
            let exact = f * n as f64;
            let whole = exact as usize;
            assigned += whole;
            out.push((g, whole));
            rems.push((exact - whole as f64, i));
        }
        rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rems.iter().cycle().take(n.saturating_sub(assigned)) {
            out[i].1 += 1;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlayerProfile {
    pub user: UserId,
    pub group: AbilityGroup,
    /// Ability `rho` in (0, 1).
    pub ability: f64,
    /// Cost coefficient `1 - rho`.
    pub delta: f64,
}

impl PlayerProfile {
    pub fn new(user: UserId, group: AbilityGroup, ability: f64) -> Result<Self, PopulationError> {
        if !(ability > 0.0 && ability < 1.0) {
            return Err(PopulationError::Ability(ability));
        }
        Ok(PlayerProfile {
            user,
            group,
            ability,
            delta: 1.0 - ability,
        })
    }
}

/// Samples `n` profiles, one per user id `0..n`.
///
/// Group sizes follow `mix` exactly (largest remainder) and are shuffled
/// over users; each player draws a group mean and then an individual
/// ability around it, clamped to `[ABILITY_MIN, ABILITY_MAX]`.
pub fn sample_profiles(mix: &GroupMix, n: usize, seed: u64) -> Vec<PlayerProfile> {
    let mut rng = substream(seed, stream_key(&[PROFILE_STREAM]));
    let mut groups: Vec<AbilityGroup> = Vec::with_capacity(n);
    for (g, c) in mix.counts(n) {
        groups.extend(core::iter::repeat_n(g, c));
    }
    groups.shuffle(&mut rng);
    let spread = Normal::new(0.0, INDIVIDUAL_SPREAD).expect("finite sd");
    groups
        .into_iter()
        .enumerate()
        .map(|(i, group)| {
            let mean = group.sample_mean(&mut rng);
            let rho = (mean + spread.sample(&mut rng)).clamp(ABILITY_MIN, ABILITY_MAX);
            PlayerProfile {
                user: UserId::new(i as u32),
                group,
                ability: rho,
                delta: 1.0 - rho,
            }
        })
        .collect()
}

/// How an activated player picks its task effort.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum EffortModel {
    /// Effort equals ability when the task margin plus a diffusion bonus
    /// estimate is positive, else 0.
    AbilityProportional,
    /// Grid best response to the player's own contest.
    BestResponse { grid_step: f64, max_rounds: usize },
}

impl EffortModel {
    pub const DEFAULT_GRID_STEP: f64 = 0.1;
    pub const DEFAULT_MAX_ROUNDS: usize = 20;

    pub fn best_response() -> Self {
        EffortModel::BestResponse {
            grid_step: Self::DEFAULT_GRID_STEP,
            max_rounds: Self::DEFAULT_MAX_ROUNDS,
        }
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        if let EffortModel::BestResponse { grid_step, .. } = *self {
            if !(grid_step > 0.0 && grid_step <= 1.0) {
                return Err(PopulationError::GridStep(grid_step));
            }
        }
        Ok(())
    }
}

/// Whether an activated player passes the campaign on to its neighbours.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum ParticipationRule {
    /// Every player with positive effort refers.
    AllActive,
    /// A player with positive effort refers only when its anticipated
    /// diffusion reward reaches `referral_cost`.
    IncentiveGated { referral_cost: f64 },
}

impl ParticipationRule {
    pub fn refers(&self, effort: f64, anticipated_diffusion: f64) -> bool {
        effort > 0.0
            && match *self {
                ParticipationRule::AllActive => true,
                ParticipationRule::IncentiveGated { referral_cost } => anticipated_diffusion >= referral_cost,
            }
    }
}

/// What a player sees of its own contest when choosing an effort.
///
/// Its credits at effort `t` are `eta * t^2 + t * credit_slope`, its win
/// probability is `w(b(t)) / (w(b(t)) + rival_weight)` and the prize is
/// `pool`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prospect {
    pub credit_slope: f64,
    pub rival_weight: f64,
    pub pool: f64,
    /// Share of the player's social out-neighbours it can still refer.
    pub out_fraction: f64,
}

impl Prospect {
    /// Expected diffusion reward at effort `t`.
    pub fn diffusion_reward(&self, t: f64, params: &MechanismParams) -> f64 {
        if t <= 0.0 || self.pool <= 0.0 {
            return 0.0;
        }
        let w = params.csf_weight(params.eta * t * t + t * self.credit_slope);
        w / (w + self.rival_weight) * self.pool
    }

    /// `(mu - delta) t + diffusion_reward(t)`.
    pub fn utility(&self, t: f64, delta: f64, params: &MechanismParams) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        (params.mu - delta) * t + self.diffusion_reward(t, params)
    }
}

/// Effort for one player facing `prospect`. Best responses pick the largest
/// maximiser on the grid `{0, step, ..., 1}`.
pub fn choose_effort(
    model: &EffortModel,
    profile: &PlayerProfile,
    prospect: &Prospect,
    params: &MechanismParams,
) -> f64 {
    match *model {
        EffortModel::AbilityProportional => {
            let bonus = params.phi * params.sigma * profile.ability * prospect.out_fraction;
            if (params.mu - profile.delta) + bonus > 0.0 {
                profile.ability
            } else {
                0.0
            }
        }
        EffortModel::BestResponse { grid_step, .. } => grid_best_response(grid_step, profile.delta, prospect, params),
    }
}

fn grid_best_response(step: f64, delta: f64, prospect: &Prospect, params: &MechanismParams) -> f64 {
    let steps = grid_steps(step);
    let mut best_t = 0.0;
    let mut best_u = 0.0;
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let u = prospect.utility(t, delta, params);
        if u >= best_u {
            best_u = u;
            best_t = t;
        }
    }
    best_t
}

fn grid_steps(step: f64) -> usize {
    let s = crate::math::round(1.0 / step) as usize;
    s.max(1)
}

/// Result of best-response dynamics on a fixed referral structure.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponseOutcome {
    pub efforts: Vec<f64>,
    /// Full sweeps performed.
    pub rounds: usize,
    /// A sweep finished without any change.
    pub converged: bool,
}

/// Asynchronous best-response rounds over every node of `dag`.
///
/// Nodes are visited in descending id order. A node's credits, rival weight
/// and prize pool depend only on its successors, so with efforts of all
/// other nodes fixed each step is an exact best response to the node's own
/// contest. Efforts in `dag` are the starting point; `profiles[i]` belongs
/// to node `i`.
pub fn best_response_dynamics(
    dag: &ReferralDag,
    profiles: &[PlayerProfile],
    params: &MechanismParams,
    grid_step: f64,
    max_rounds: usize,
) -> Result<BestResponseOutcome, PopulationError> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(PopulationError::GridStep(grid_step));
    }
    if profiles.len() != dag.len() {
        return Err(PopulationError::ProfileCount {
            profiles: profiles.len(),
            nodes: dag.len(),
        });
    }
    let n = dag.len();
    let mut efforts = dag.efforts().to_vec();
    // slope[x] = sum over successors u of t_u * (discounted path weight x -> u)
    let mut slope = vec![0.0; n];
    let mut dp = PathDp::new();
    for u in dag.node_ids() {
        let t_u = efforts[u.index()];
        if t_u > 0.0 {
            dp.run(dag, u, params.lambda, |x, g| {
                if x != u {
                    slope[x.index()] += t_u * g;
                }
            });
        }
    }
    let weight_of = |t: f64, c: f64| {
        if t > 0.0 {
            params.csf_weight(params.eta * t * t + t * c)
        } else {
            0.0
        }
    };
    let mut weights: Vec<f64> = (0..n).map(|i| weight_of(efforts[i], slope[i])).collect();

    let mut view = SubgraphWalk::default();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        rounds += 1;
        let mut changed = false;
        for v in dag.node_ids().rev() {
            let i = v.index();
            let (rival, attributed) = view.contest(dag, &efforts, &weights, v);
            let prospect = Prospect {
                credit_slope: slope[i],
                rival_weight: rival,
                pool: params.phi * attributed,
                out_fraction: 0.0,
            };
            let t = grid_best_response(grid_step, profiles[i].delta, &prospect, params);
            let old = efforts[i];
            if t != old {
                changed = true;
                efforts[i] = t;
                weights[i] = weight_of(t, slope[i]);
                let diff = t - old;
                dp.run(dag, v, params.lambda, |x, g| {
                    if x != v {
                        let j = x.index();
                        slope[j] += diff * g;
                        weights[j] = weight_of(efforts[j], slope[j]);
                    }
                });
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(BestResponseOutcome {
        efforts,
        rounds,
        converged,
    })
}

#[derive(Default)]
struct SubgraphWalk {
    stamp: Vec<u32>,
    epoch: u32,
    members: Vec<NodeId>,
}

impl SubgraphWalk {
    /// `(sum of successor contest weights, attributed successor effort)` for `G_v`.
    fn contest(&mut self, dag: &ReferralDag, efforts: &[f64], weights: &[f64], v: NodeId) -> (f64, f64) {
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
        let mut rival = 0.0;
        let mut attributed = 0.0;
        for &u in &self.members[1..] {
            let t = efforts[u.index()];
            if t <= 0.0 {
                continue;
            }
            rival += weights[u.index()];
            let preds = dag.direct_predecessors(u);
            let within = preds.iter().filter(|p| self.stamp[p.index()] == epoch).count();
            attributed += t * within as f64 / preds.len() as f64;
        }
        (rival, attributed)
    }
}
