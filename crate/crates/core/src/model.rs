//! Ground-truth instances, per-agent memories and the optimistic class
//! predicates evaluated by every agent at each round.

use std::fmt::Write as _;

use crate::bounds::Radius;
use crate::error::{Error, Result};

/// The hidden problem: one mean per agent and a shared noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    means: Vec<f64>,
    sigma: f64,
}

impl ProblemInstance {
    pub fn new(means: Vec<f64>, sigma: f64) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InvalidInstance("at least one agent is required".into()));
        }
        if let Some(bad) = means.iter().find(|m| !m.is_finite()) {
            return Err(Error::InvalidInstance(format!("non-finite mean {bad}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "sigma must be finite and non-negative, got {sigma}"
            )));
        }
        Ok(Self { means, sigma })
    }

    pub fn num_agents(&self) -> usize {
        self.means.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, a: usize) -> f64 {
        self.means[a]
    }

    pub fn gap(&self, a: usize, l: usize) -> f64 {
        (self.means[a] - self.means[l]).abs()
    }

    pub fn check_agent(&self, a: usize) -> Result<()> {
        if a < self.num_agents() {
            Ok(())
        } else {
            Err(Error::AgentOutOfRange {
                index: a,
                num_agents: self.num_agents(),
            })
        }
    }

    /// Smallest gap from `a` to an agent outside its `eta`-class, if any.
    pub fn separation_gap(&self, a: usize, eta: f64) -> Option<f64> {
        (0..self.num_agents())
            .map(|l| self.gap(a, l))
            .filter(|&g| g > eta)
            .min_by(f64::total_cmp)
    }

    /// Distinct means in ascending order, used to label agent groups.
    pub fn distinct_means(&self) -> Vec<f64> {
        let mut v = self.means.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Index into [`distinct_means`](Self::distinct_means) for every agent.
    pub fn group_of_agents(&self) -> Vec<usize> {
        let distinct = self.distinct_means();
        self.means
            .iter()
            .map(|m| distinct.iter().position(|d| d == m).unwrap())
            .collect()
    }

    /// Plain-text instance file: `A sigma` then one `agent_id mean` line per agent.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.num_agents(), self.sigma).unwrap();
        for (a, m) in self.means.iter().enumerate() {
            writeln!(out, "{a} {m}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let parse_err = |line, message: String| Error::Parse { line, message };

        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header line `A sigma`".into()))?;
        let mut fields = header.split_whitespace();
        let (Some(a_str), Some(s_str), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(hline, "header must be `A sigma`".into()));
        };
        let num_agents: usize = a_str
            .parse()
            .map_err(|_| parse_err(hline, format!("bad agent count `{a_str}`")))?;
        let sigma: f64 = s_str
            .parse()
            .map_err(|_| parse_err(hline, format!("bad sigma `{s_str}`")))?;

        let mut means = vec![None; num_agents];
        for (line, body) in lines {
            let mut fields = body.split_whitespace();
            let (Some(id), Some(mean), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(line, "expected `agent_id mean`".into()));
            };
            let id: usize = id
                .parse()
                .map_err(|_| parse_err(line, format!("bad agent id `{id}`")))?;
            let mean: f64 = mean
                .parse()
                .map_err(|_| parse_err(line, format!("bad mean `{mean}`")))?;
            let slot = means
                .get_mut(id)
                .ok_or_else(|| parse_err(line, format!("agent id {id} >= {num_agents}")))?;
            if slot.replace(mean).is_some() {
                return Err(parse_err(line, format!("agent {id} listed twice")));
            }
        }
        let means = means
            .into_iter()
            .enumerate()
            .map(|(a, m)| m.ok_or_else(|| Error::InvalidInstance(format!("agent {a} has no mean"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(means, sigma)
    }
}

/// Dense membership set over `[A]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentSet {
    members: Vec<bool>,
}

impl AgentSet {
    pub fn empty(num_agents: usize) -> Self {
        Self {
            members: vec![false; num_agents],
        }
    }

    pub fn full(num_agents: usize) -> Self {
        Self {
            members: vec![true; num_agents],
        }
    }

    pub fn from_indices(num_agents: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(num_agents);
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn universe(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.get(i).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, i: usize) {
        self.members[i] = true;
    }

    pub fn remove(&mut self, i: usize) {
        self.members[i] = false;
    }

    pub fn set(&mut self, i: usize, present: bool) {
        self.members[i] = present;
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn intersection_len(&self, other: &AgentSet) -> usize {
        self.members
            .iter()
            .zip(&other.members)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn is_subset(&self, other: &AgentSet) -> bool {
        self.members
            .iter()
            .zip(&other.members)
            .all(|(a, b)| !*a || *b)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.members
    }
}

/// The set of agents within `eta` of the owner's mean (a ball, not a partition,
/// once `eta > 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrueClass {
    pub owner: usize,
    pub eta: f64,
    pub members: AgentSet,
}

impl TrueClass {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn true_class(inst: &ProblemInstance, a: usize, eta: f64) -> TrueClass {
    let n = inst.num_agents();
    let members = AgentSet::from_indices(n, (0..n).filter(|&l| inst.gap(a, l) <= eta));
    TrueClass {
        owner: a,
        eta,
        members,
    }
}

/// Average of the true means over the class members.
pub fn class_mean(inst: &ProblemInstance, cls: &TrueClass) -> Result<f64> {
    let (sum, count) = cls
        .members
        .iter()
        .fold((0.0, 0usize), |(s, c), l| (s + inst.mean(l), c + 1));
    if count == 0 {
        return Err(Error::EmptyClass(cls.owner));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ConfidenceInterval {
    pub fn around(center: f64, radius: f64) -> Self {
        Self {
            lo: center - radius,
            hi: center + radius,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Length of the overlap, 0 when disjoint.
    pub fn intersection_len(&self, other: &Self) -> f64 {
        (self.hi.min(other.hi) - self.lo.max(other.lo)).max(0.0)
    }

    /// Length of the convex hull of both intervals.
    pub fn hull_len(&self, other: &Self) -> f64 {
        self.hi.max(other.hi) - self.lo.min(other.lo)
    }
}

/// What one agent remembers about every peer (itself included).
///
/// A count of 0 marks a peer that was never queried; its stored average is 0
/// and must not be read.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentMemory {
    owner: usize,
    avgs: Vec<f64>,
    counts: Vec<u64>,
    cursor: usize,
}

impl AgentMemory {
    pub fn new(owner: usize, num_agents: usize) -> Self {
        assert!(owner < num_agents, "owner {owner} out of range");
        Self {
            owner,
            avgs: vec![0.0; num_agents],
            counts: vec![0; num_agents],
            cursor: (owner + 1) % num_agents,
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn num_agents(&self) -> usize {
        self.avgs.len()
    }

    pub fn avg(&self, l: usize) -> f64 {
        self.avgs[l]
    }

    pub fn count(&self, l: usize) -> u64 {
        self.counts[l]
    }

    pub fn avgs(&self) -> &[f64] {
        &self.avgs
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn record(&mut self, l: usize, avg: f64, count: u64) {
        self.avgs[l] = avg;
        self.counts[l] = count;
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn set_cursor(&mut self, cursor: usize) {
        self.cursor = cursor % self.num_agents();
    }

    pub fn interval(&self, l: usize, radius: &(impl Radius + ?Sized)) -> ConfidenceInterval {
        ConfidenceInterval::around(self.avgs[l], radius.radius(self.counts[l]))
    }
}

/// Empirical gap minus both confidence radii; `-inf` if either side is unqueried.
pub fn optimistic_distance(mem: &AgentMemory, peer: usize, radius: &(impl Radius + ?Sized)) -> f64 {
    let own = mem.owner;
    let (n_own, n_peer) = (mem.counts[own], mem.counts[peer]);
    if n_own == 0 || n_peer == 0 {
        return f64::NEG_INFINITY;
    }
    (mem.avgs[own] - mem.avgs[peer]).abs() - radius.radius(n_own) - radius.radius(n_peer)
}

/// Peers whose optimistic distance is at most `eta` (ties included).
pub fn optimistic_class(mem: &AgentMemory, radius: &(impl Radius + ?Sized), eta: f64) -> AgentSet {
    let mut set = AgentSet::empty(mem.num_agents());
    fill_optimistic_class(mem, radius, eta, &mut set);
    set
}

pub(crate) fn fill_optimistic_class(
    mem: &AgentMemory,
    radius: &(impl Radius + ?Sized),
    eta: f64,
    out: &mut AgentSet,
) {
    let own = mem.owner;
    let n_own = mem.counts[own];
    if n_own == 0 {
        out.members.iter_mut().for_each(|m| *m = true);
        return;
    }
    let own_avg = mem.avgs[own];
    let own_radius = radius.radius(n_own);
    for (l, slot) in out.members.iter_mut().enumerate() {
        let n = mem.counts[l];
        *slot = n == 0 || (own_avg - mem.avgs[l]).abs() - own_radius - radius.radius(n) <= eta;
    }
    // |x - x| - 2 beta <= 0 <= eta except for NaN radii; keep the owner regardless
    out.members[own] = true;
}
