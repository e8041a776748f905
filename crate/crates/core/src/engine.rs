//! Synchronous multi-agent simulation: every round is split into
//! perceive, query and estimate phases separated by barriers.
//!
//! Samples come from a counter-based generator keyed by
//! `(seed, run, agent, t, j)`, so every algorithm in a run sees exactly the
//! same data regardless of scheduling.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::{BoundConfig, Radius, RadiusTable};
use crate::error::{Error, Result};
use crate::metrics::{self, Curve, LastExcursion};
use crate::model::{self, AgentMemory, AgentSet, ProblemInstance};
use crate::strategies::{self, QueryStrategy, WeightScheme};

/// A named (query strategy, weighting scheme) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Algorithm {
    name: String,
    strategy: Option<QueryStrategy>,
    scheme: WeightScheme,
}

/// Stable algorithm names accepted on the command line.
pub const ALGORITHM_NAMES: [&str; 7] = ["rr", "rrr", "soft-rrr", "agg-rrr", "local", "oracle", "eta-rrr"];

impl Algorithm {
    pub fn new(name: impl Into<String>, strategy: Option<QueryStrategy>, scheme: WeightScheme) -> Result<Self, String> {
        use QueryStrategy::*;
        use WeightScheme::*;
        let ok = match (strategy, scheme) {
            (None, Local) => true,
            (Some(OracleRestricted), OracleSimple) => true,
            (Some(RoundRobin | RestrictedRoundRobin), Simple | Soft | Aggressive | ClassUniform) => true,
            _ => false,
        };
        if !ok {
            let s = strategy.map_or("none", |s| s.as_str());
            return Err(format!("strategy `{s}` cannot be combined with scheme `{scheme}`"));
        }
        Ok(Self {
            name: name.into(),
            strategy,
            scheme,
        })
    }

    pub fn named(name: &str) -> Option<Self> {
        use QueryStrategy::*;
        use WeightScheme::*;
        let (strategy, scheme) = match name {
            "rr" => (Some(RoundRobin), Simple),
            "rrr" => (Some(RestrictedRoundRobin), Simple),
            "soft-rrr" => (Some(RestrictedRoundRobin), Soft),
            "agg-rrr" => (Some(RestrictedRoundRobin), Aggressive),
            "local" => (None, Local),
            "oracle" => (Some(OracleRestricted), OracleSimple),
            "eta-rrr" => (Some(RestrictedRoundRobin), ClassUniform),
            _ => return None,
        };
        Some(Self::new(name, strategy, scheme).unwrap())
    }

    /// Parses either a stable name (`rrr`) or an explicit `strategy+scheme`
    /// pair (`rr+soft`, `none+local`).
    pub fn parse(spec: &str) -> Result<Self, String> {
        if let Some(a) = Self::named(spec) {
            return Ok(a);
        }
        let Some((s, w)) = spec.split_once('+') else {
            return Err(format!("unknown algorithm `{spec}`"));
        };
        let strategy = match s {
            "none" => None,
            other => Some(other.parse::<QueryStrategy>()?),
        };
        Self::new(spec, strategy, w.parse::<WeightScheme>()?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn strategy(&self) -> Option<QueryStrategy> {
        self.strategy
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    /// Whether agents maintain an optimistic class (false for local and oracle).
    pub fn tracks_classes(&self) -> bool {
        !matches!(self.scheme, WeightScheme::Local | WeightScheme::OracleSimple)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMode {
    /// Per-step class aggregates and per-agent event times only.
    #[default]
    Aggregate,
    /// Additionally keep every (agent, t) estimate, error and precision.
    Full,
}

pub const DEFAULT_TRACE_BUDGET: u64 = 512 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon: u64,
    pub runs: usize,
    pub seed: u64,
    pub delta: f64,
    pub eta: f64,
    pub samples_per_round: u64,
    pub algorithms: Vec<Algorithm>,
    pub epsilons: Vec<f64>,
    /// Per-algorithm horizon, keyed by algorithm name.
    pub horizon_overrides: BTreeMap<String, u64>,
    pub trace: TraceMode,
    pub trace_budget_bytes: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 2500,
            runs: 20,
            seed: 0,
            delta: 0.001,
            eta: 0.0,
            samples_per_round: 1,
            algorithms: Vec::new(),
            epsilons: vec![0.1, 0.01],
            horizon_overrides: BTreeMap::new(),
            trace: TraceMode::Aggregate,
            trace_budget_bytes: DEFAULT_TRACE_BUDGET,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and non-negative, got {}", self.eta));
        }
        if self.samples_per_round < 1 {
            return bad("samples_per_round must be at least 1".into());
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad(format!("epsilon must be positive, got {e}"));
        }
        for (name, h) in &self.horizon_overrides {
            if *h < 1 {
                return bad(format!("horizon override for `{name}` must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn horizon_for(&self, algorithm: &Algorithm) -> u64 {
        self.horizon_overrides
            .get(algorithm.name())
            .copied()
            .unwrap_or(self.horizon)
    }
}

/// The sample stream of one agent in one run.
#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
    mean: f64,
    sigma: f64,
}

impl SampleStream {
    pub fn new(seed: u64, run: usize, agent: usize, mean: f64, sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((run as u64) << 32) ^ agent as u64);
        Self { rng, mean, sigma }
    }
}

/// Gaussian sample for round `t >= 1`, sub-round `j`, as a pure function of
/// the stream key and `(t, j)`.
pub fn draw_sample(stream: &SampleStream, t: u64, j: u64) -> f64 {
    if stream.sigma == 0.0 {
        return stream.mean;
    }
    debug_assert!(t >= 1 && j < 1 << 32);
    let mut rng = stream.rng.clone();
    // 4 words per draw, 2^32 sub-rounds per round
    rng.set_word_pos(((t as u128) << 34) | ((j as u128) << 2));
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let z = (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
    stream.mean + stream.sigma * z
}

pub trait SampleSource: Sync {
    fn sample(&self, run: usize, agent: usize, t: u64, j: u64) -> f64;
}

/// Gaussian samples around each agent's true mean.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    seed: u64,
    means: Vec<f64>,
    sigma: f64,
    base: ChaCha8Rng,
}

impl GaussianSource {
    pub fn new(seed: u64, inst: &ProblemInstance) -> Self {
        Self {
            seed,
            means: inst.means().to_vec(),
            sigma: inst.sigma(),
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn stream(&self, run: usize, agent: usize) -> SampleStream {
        SampleStream::new(self.seed, run, agent, self.means[agent], self.sigma)
    }
}

impl SampleSource for GaussianSource {
    fn sample(&self, run: usize, agent: usize, t: u64, j: u64) -> f64 {
        let mut rng = self.base.clone();
        rng.set_stream(((run as u64) << 32) ^ agent as u64);
        let stream = SampleStream {
            rng,
            mean: self.means[agent],
            sigma: self.sigma,
        };
        draw_sample(&stream, t, j)
    }
}

/// Replays a fixed table `samples[agent][t - 1][j]`; for hand-built traces.
#[derive(Debug, Clone)]
pub struct TableSource {
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl SampleSource for TableSource {
    fn sample(&self, _run: usize, agent: usize, t: u64, j: u64) -> f64 {
        self.samples[agent][t as usize - 1][j as usize]
    }
}

/// State of all agents running one algorithm in one run.
pub struct Simulation<'a> {
    algorithm: &'a Algorithm,
    source: &'a dyn SampleSource,
    radius: RadiusTable,
    eta: f64,
    m: u64,
    run: usize,
    t: u64,
    memories: Vec<AgentMemory>,
    local_sums: Vec<f64>,
    snapshot: Vec<f64>,
    classes: Vec<AgentSet>,
    true_classes: Vec<AgentSet>,
    estimates: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Simulation<'a> {
    /// `horizon` only sizes the radius cache; stepping past it stays correct.
    pub fn new(
        inst: &ProblemInstance,
        algorithm: &'a Algorithm,
        bound: BoundConfig,
        eta: f64,
        samples_per_round: u64,
        horizon: u64,
        source: &'a dyn SampleSource,
        run: usize,
    ) -> Self {
        let n = inst.num_agents();
        let true_classes = (0..n).map(|a| model::true_class(inst, a, eta).members).collect();
        Self {
            algorithm,
            source,
            radius: RadiusTable::new(bound, horizon * samples_per_round),
            eta,
            m: samples_per_round,
            run,
            t: 0,
            memories: (0..n).map(|a| AgentMemory::new(a, n)).collect(),
            local_sums: vec![0.0; n],
            snapshot: vec![0.0; n],
            classes: vec![AgentSet::full(n); n],
            true_classes,
            estimates: vec![0.0; n],
            weights: vec![0.0; n],
        }
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn memories(&self) -> &[AgentMemory] {
        &self.memories
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    /// Estimate-phase optimistic classes, or `None` when the algorithm does
    /// not maintain them.
    pub fn optimistic_classes(&self) -> Option<&[AgentSet]> {
        self.algorithm.tracks_classes().then_some(&self.classes[..])
    }

    pub fn true_classes(&self) -> &[AgentSet] {
        &self.true_classes
    }

    /// Advances one synchronized round and returns the new estimates.
    pub fn step(&mut self) -> Result<&[f64]> {
        self.t += 1;
        let t = self.t;
        let count = self.m * t;

        // Perceive
        for (a, mem) in self.memories.iter_mut().enumerate() {
            let block: f64 = (0..self.m).map(|j| self.source.sample(self.run, a, t, j)).sum();
            self.local_sums[a] += block;
            let avg = self.local_sums[a] / count as f64;
            mem.record(a, avg, count);
            self.snapshot[a] = avg;
        }

        // Query: every agent reads the post-perceive snapshot.
        let tracks = self.algorithm.tracks_classes();
        if let Some(strategy) = self.algorithm.strategy() {
            for (a, mem) in self.memories.iter_mut().enumerate() {
                let class = &mut self.classes[a];
                if tracks {
                    model::fill_optimistic_class(mem, &self.radius, self.eta, class);
                }
                let allowed = match strategy {
                    QueryStrategy::OracleRestricted => &self.true_classes[a],
                    _ => &*class,
                };
                if let Some(l) = strategies::choose_agent(strategy, mem, allowed) {
                    mem.record(l, self.snapshot[l], count);
                    if tracks {
                        // only entry l changed since the class was computed
                        let d = model::optimistic_distance(mem, l, &self.radius);
                        class.set(l, d <= self.eta);
                    }
                }
            }
        }

        // Estimate
        let scheme = self.algorithm.scheme();
        for (a, mem) in self.memories.iter().enumerate() {
            self.estimates[a] = match scheme {
                WeightScheme::Local => mem.avg(a),
                _ => {
                    let support = match scheme {
                        WeightScheme::OracleSimple => &self.true_classes[a],
                        _ => &self.classes[a],
                    };
                    strategies::fill_weights(scheme, mem, support, &self.radius, &mut self.weights)?;
                    strategies::dot(&self.weights, mem.avgs())
                }
            };
        }
        Ok(&self.estimates)
    }

    pub fn radius(&self) -> &dyn Radius {
        &self.radius
    }
}

/// Every (agent, t) value of one trace, row-major by step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FullTrace {
    pub num_agents: usize,
    pub estimates: Vec<f64>,
    pub errors: Vec<f64>,
    /// Empty when the algorithm does not maintain optimistic classes.
    pub precisions: Vec<f64>,
}

impl FullTrace {
    pub fn error(&self, agent: usize, t: u64) -> f64 {
        self.errors[(t as usize - 1) * self.num_agents + agent]
    }

    pub fn estimate(&self, agent: usize, t: u64) -> f64 {
        self.estimates[(t as usize - 1) * self.num_agents + agent]
    }

    pub fn precision(&self, agent: usize, t: u64) -> Option<f64> {
        self.precisions.get((t as usize - 1) * self.num_agents + agent).copied()
    }
}

/// Metrics of one algorithm over one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: String,
    pub run: usize,
    pub horizon: u64,
    /// Per agent: first step from which the optimistic class equals the true
    /// class for the rest of the horizon. `None` inside means never settled;
    /// the outer `None` means the algorithm has no optimistic class.
    pub class_id_times: Option<Vec<Option<u64>>>,
    /// `convergence[e][agent]` for the configured epsilons, in order.
    pub convergence: Vec<Vec<Option<u64>>>,
    /// Per-step error moments, one curve per class group.
    pub error_curves: Vec<Curve>,
    pub precision_curves: Option<Vec<Curve>>,
    pub final_estimates: Vec<f64>,
    pub full: Option<FullTrace>,
}

/// All traces of an experiment, ordered by run then by algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: SimulationConfig,
    /// Group index of every agent (index into `group_means`).
    pub groups: Vec<usize>,
    pub group_means: Vec<f64>,
    /// Error reference of every agent: its mean, or its eta-class mean.
    pub targets: Vec<f64>,
    pub traces: Vec<RunTrace>,
}

impl Experiment {
    pub fn traces_for<'s>(&'s self, algorithm: &'s str) -> impl Iterator<Item = &'s RunTrace> + 's {
        self.traces.iter().filter(move |t| t.algorithm == algorithm)
    }

    /// Pooled `(agent, run)` convergence times at epsilon index `e`.
    pub fn convergence_values(&self, algorithm: &str, e: usize) -> Vec<(usize, Option<u64>)> {
        self.traces_for(algorithm)
            .flat_map(|tr| tr.convergence[e].iter().copied().enumerate())
            .collect()
    }

    pub fn class_id_values(&self, algorithm: &str) -> Vec<(usize, Option<u64>)> {
        self.traces_for(algorithm)
            .filter_map(|tr| tr.class_id_times.as_ref())
            .flat_map(|v| v.iter().copied().enumerate())
            .collect()
    }

    /// Error curve pooled over runs for one group (or all agents).
    pub fn error_curve(&self, algorithm: &str, group: Option<usize>) -> Option<Curve> {
        pooled_curve(self.traces_for(algorithm).map(|t| &t.error_curves[..]), group)
    }

    pub fn precision_curve(&self, algorithm: &str, group: Option<usize>) -> Option<Curve> {
        pooled_curve(
            self.traces_for(algorithm).filter_map(|t| t.precision_curves.as_deref()),
            group,
        )
    }
}

fn pooled_curve<'a>(sets: impl Iterator<Item = &'a [Curve]>, group: Option<usize>) -> Option<Curve> {
    let mut acc: Option<Curve> = None;
    for curves in sets {
        let picked: Vec<&Curve> = match group {
            Some(g) => curves.get(g).into_iter().collect(),
            None => curves.iter().collect(),
        };
        for c in picked {
            match &mut acc {
                Some(a) => a.merge(c),
                None => acc = Some(c.clone()),
            }
        }
    }
    acc
}

/// Error targets: the agent's own mean, or its eta-class mean when `eta > 0`.
pub fn error_targets(inst: &ProblemInstance, eta: f64) -> Result<Vec<f64>> {
    (0..inst.num_agents())
        .map(|a| {
            if eta == 0.0 {
                Ok(inst.mean(a))
            } else {
                model::class_mean(inst, &model::true_class(inst, a, eta))
            }
        })
        .collect()
}

pub fn run_experiment(cfg: &SimulationConfig, inst: &ProblemInstance) -> Result<Experiment> {
    let source = GaussianSource::new(cfg.seed, inst);
    run_experiment_with_source(cfg, inst, &source)
}

pub fn run_experiment_with_source(
    cfg: &SimulationConfig,
    inst: &ProblemInstance,
    source: &dyn SampleSource,
) -> Result<Experiment> {
    run_experiment_observed(cfg, inst, source, &|_, _| {})
}

/// As [`run_experiment_with_source`], calling `progress(run, algorithm)` as
/// each trace completes (from worker threads, in completion order).
pub fn run_experiment_observed(
    cfg: &SimulationConfig,
    inst: &ProblemInstance,
    source: &dyn SampleSource,
    progress: &(dyn Fn(usize, &str) + Sync),
) -> Result<Experiment> {
    cfg.validate()?;
    if cfg.algorithms.is_empty() {
        return Err(Error::InvalidConfig("no algorithms configured".into()));
    }
    let bound = BoundConfig::new(cfg.delta, inst.num_agents(), inst.sigma())?;
    let n = inst.num_agents();

    if cfg.trace == TraceMode::Full {
        let needed: u64 = cfg
            .algorithms
            .iter()
            .map(|alg| cfg.runs as u64 * n as u64 * cfg.horizon_for(alg) * 3 * 8)
            .sum();
        if needed > cfg.trace_budget_bytes {
            return Err(Error::TraceBudgetExceeded {
                needed,
                budget: cfg.trace_budget_bytes,
            });
        }
    }

    let targets = error_targets(inst, cfg.eta)?;
    let groups = inst.group_of_agents();
    let group_means = inst.distinct_means();

    let tasks: Vec<(usize, &Algorithm)> = (0..cfg.runs)
        .flat_map(|run| cfg.algorithms.iter().map(move |alg| (run, alg)))
        .collect();
    let ctx = TraceContext {
        cfg,
        inst,
        bound,
        source,
        targets: &targets,
        groups: &groups,
        num_groups: group_means.len(),
    };
    let traces = tasks
        .par_iter()
        .map(|&(run, alg)| {
            let trace = ctx.trace(run, alg);
            progress(run, alg.name());
            trace
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Experiment {
        config: cfg.clone(),
        groups,
        group_means,
        targets,
        traces,
    })
}

struct TraceContext<'a> {
    cfg: &'a SimulationConfig,
    inst: &'a ProblemInstance,
    bound: BoundConfig,
    source: &'a dyn SampleSource,
    targets: &'a [f64],
    groups: &'a [usize],
    num_groups: usize,
}

impl TraceContext<'_> {
    fn trace(&self, run: usize, alg: &Algorithm) -> Result<RunTrace> {
        let n = self.inst.num_agents();
        let horizon = self.cfg.horizon_for(alg);
        let tracks = alg.tracks_classes();
        let full = self.cfg.trace == TraceMode::Full;

        let mut sim = Simulation::new(
            self.inst,
            alg,
            self.bound,
            self.cfg.eta,
            self.cfg.samples_per_round,
            horizon,
            self.source,
            run,
        );
        let mut error_curves = vec![Curve::new(horizon as usize); self.num_groups];
        let mut precision_curves = tracks.then(|| vec![Curve::new(horizon as usize); self.num_groups]);
        let mut conv = vec![vec![LastExcursion::default(); n]; self.cfg.epsilons.len()];
        let mut class_id = vec![LastExcursion::default(); n];
        let mut full_trace = full.then(|| FullTrace {
            num_agents: n,
            ..Default::default()
        });

        for t in 1..=horizon {
            sim.step()?;
            for a in 0..n {
                let est = sim.estimates[a];
                let err = metrics::error(est, self.targets[a]);
                let g = self.groups[a];
                error_curves[g].push(t, err);
                for (e, eps) in self.cfg.epsilons.iter().enumerate() {
                    conv[e][a].observe(t, err > *eps);
                }
                let prec = if let Some(curves) = precision_curves.as_mut() {
                    let (opt, truth) = (&sim.classes[a], &sim.true_classes[a]);
                    let p = metrics::precision(opt, truth);
                    curves[g].push(t, p);
                    class_id[a].observe(t, opt != truth);
                    Some(p)
                } else {
                    None
                };
                if let Some(ft) = full_trace.as_mut() {
                    ft.estimates.push(est);
                    ft.errors.push(err);
                    if let Some(p) = prec {
                        ft.precisions.push(p);
                    }
                }
            }
        }

        Ok(RunTrace {
            algorithm: alg.name().to_string(),
            run,
            horizon,
            class_id_times: tracks.then(|| class_id.iter().map(|c| c.settled_at(horizon)).collect()),
            convergence: conv
                .iter()
                .map(|per_agent| per_agent.iter().map(|c| c.settled_at(horizon)).collect())
                .collect(),
            error_curves,
            precision_curves,
            final_estimates: sim.estimates.clone(),
            full: full_trace,
        })
    }
}

/// How agents are assigned to class means.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    /// Each agent picks one of `class_means` uniformly at random.
    Random {
        class_means: Vec<f64>,
        num_agents: usize,
        sigma: f64,
    },
    /// `membership[a]` indexes into `class_means`.
    Fixed {
        class_means: Vec<f64>,
        membership: Vec<usize>,
        sigma: f64,
    },
}

pub fn make_instance(spec: &InstanceSpec, seed: u64) -> Result<ProblemInstance> {
    let check_means = |means: &[f64]| -> Result<()> {
        if means.is_empty() {
            return Err(Error::InvalidInstance("no class means given".into()));
        }
        let mut sorted = means.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInstance("class means must be distinct".into()));
        }
        Ok(())
    };
    match spec {
        InstanceSpec::Random {
            class_means,
            num_agents,
            sigma,
        } => {
            check_means(class_means)?;
            if *num_agents < class_means.len() {
                return Err(Error::InvalidInstance(format!(
                    "{num_agents} agents cannot cover {} classes",
                    class_means.len()
                )));
            }
            // separate stream from the sample generator
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            let means = (0..*num_agents)
                .map(|_| class_means[rng.gen_range(0..class_means.len())])
                .collect();
            ProblemInstance::new(means, *sigma)
        }
        InstanceSpec::Fixed {
            class_means,
            membership,
            sigma,
        } => {
            check_means(class_means)?;
            let means = membership
                .iter()
                .map(|&c| {
                    class_means.get(c).copied().ok_or_else(|| {
                        Error::InvalidInstance(format!("membership index {c} has no class mean"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ProblemInstance::new(means, *sigma)
        }
    }
}
