//! Experiment manifests and the runner behind the `colme` binary.
//!
//! A manifest is flat `key = value` text. List-valued keys (`class_mean`,
//! `algorithm`, `epsilon`, `horizon_override`) are given by repeating the key;
//! `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::bounds::BoundConfig;
use crate::engine::{self, Algorithm, Experiment, InstanceSpec, SimulationConfig, TraceMode};
use crate::error::{Error, Result};
use crate::metrics::{self, Group};
use crate::model::ProblemInstance;
use crate::theory::TheoryReport;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit code for a manifest that fails validation.
pub const EXIT_INVALID: i32 = 1;
/// Exit code for a failure while running a valid manifest.
pub const EXIT_RUNTIME: i32 = 2;

const THREE_CLASS: &str = include_str!("../manifests/three-class.manifest");
const TWO_CLASS: &str = include_str!("../manifests/two-class.manifest");

pub fn bundled_manifest(name: &str) -> Option<&'static str> {
    match name {
        "three-class" => Some(THREE_CLASS),
        "two-class" => Some(TWO_CLASS),
        _ => None,
    }
}

pub const BUNDLED_MANIFESTS: [&str; 2] = ["three-class", "two-class"];

const SCALAR_KEYS: [&str; 15] = [
    "name",
    "agents",
    "sigma",
    "instance_file",
    "instance_seed",
    "horizon",
    "runs",
    "seed",
    "delta",
    "eta",
    "samples_per_round",
    "out",
    "trace",
    "trace_budget",
    "jobs",
];
const LIST_KEYS: [&str; 4] = ["class_mean", "algorithm", "epsilon", "horizon_override"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    Generated { spec: InstanceSpec, seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub name: String,
    pub instance: InstanceSource,
    pub sim: SimulationConfig,
    pub out: PathBuf,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Canonical text the config hash is computed from.
    pub canonical: String,
}

#[derive(Debug, Clone)]
struct Entry {
    line: Option<usize>,
    key: String,
    value: String,
}

/// Command-line overrides; each replaces every occurrence of its key.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub horizon: Option<u64>,
    pub out: Option<PathBuf>,
    pub algorithms: Option<Vec<String>>,
    pub jobs: Option<usize>,
}

impl Overrides {
    fn apply(&self, entries: &mut Vec<Entry>) {
        let mut set = |key: &str, values: Vec<String>| {
            entries.retain(|e| e.key != key);
            entries.extend(values.into_iter().map(|value| Entry {
                line: None,
                key: key.to_string(),
                value,
            }));
        };
        if let Some(v) = self.seed {
            set("seed", vec![v.to_string()]);
        }
        if let Some(v) = self.runs {
            set("runs", vec![v.to_string()]);
        }
        if let Some(v) = self.horizon {
            set("horizon", vec![v.to_string()]);
        }
        if let Some(v) = &self.out {
            set("out", vec![v.display().to_string()]);
        }
        if let Some(v) = &self.algorithms {
            set("algorithm", v.clone());
        }
        if let Some(v) = self.jobs {
            set("jobs", vec![v.to_string()]);
        }
    }
}

fn tokenize(text: &str) -> (Vec<Entry>, Vec<Diagnostic>) {
    let mut entries = Vec::new();
    let mut diags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => entries.push(Entry {
                line: Some(i + 1),
                key: k.trim().to_string(),
                value: v.trim().to_string(),
            }),
            None => diags.push(Diagnostic {
                line: Some(i + 1),
                key: line.to_string(),
                message: "expected `key = value`".into(),
            }),
        }
    }
    (entries, diags)
}

/// Every problem with the manifest, without running anything.
pub fn validate(text: &str, base_dir: &Path) -> Vec<Diagnostic> {
    validate_with(text, base_dir, &Overrides::default())
}

pub fn validate_with(text: &str, base_dir: &Path, overrides: &Overrides) -> Vec<Diagnostic> {
    match parse_manifest(text, base_dir, overrides) {
        Ok(_) => Vec::new(),
        Err(d) => d,
    }
}

pub fn parse_manifest(
    text: &str,
    base_dir: &Path,
    overrides: &Overrides,
) -> Result<ExperimentManifest, Vec<Diagnostic>> {
    let (mut entries, mut diags) = tokenize(text);
    overrides.apply(&mut entries);

    let mut scalars: BTreeMap<&str, &Entry> = BTreeMap::new();
    let mut lists: BTreeMap<&str, Vec<&Entry>> = BTreeMap::new();
    for e in &entries {
        let key = e.key.as_str();
        if SCALAR_KEYS.contains(&key) {
            if scalars.insert(key, e).is_some() {
                diags.push(diag(e, "key given more than once"));
            }
        } else if LIST_KEYS.contains(&key) {
            lists.entry(key).or_default().push(e);
        } else {
            diags.push(diag(e, "unknown key"));
        }
    }

    let mut p = Parser {
        scalars: &scalars,
        diags: &mut diags,
    };
    let name = p.get("name", |v| Ok(v.to_string())).unwrap_or_else(|| "experiment".into());
    let sigma: Option<f64> = p.get("sigma", parse_num);
    let agents: Option<usize> = p.get("agents", parse_num);
    let instance_file: Option<PathBuf> = p.get("instance_file", |v| Ok(PathBuf::from(v)));
    let seed: u64 = p.get("seed", parse_num).unwrap_or(0);
    let instance_seed: u64 = p.get("instance_seed", parse_num).unwrap_or(seed);
    let horizon: u64 = p.get("horizon", parse_num).unwrap_or(2500);
    let runs: usize = p.get("runs", parse_num).unwrap_or(1);
    let delta: f64 = p.get("delta", parse_num).unwrap_or(0.001);
    let eta: f64 = p.get("eta", parse_num).unwrap_or(0.0);
    let samples_per_round: u64 = p.get("samples_per_round", parse_num).unwrap_or(1);
    let out: PathBuf = p
        .get("out", |v| Ok(PathBuf::from(v)))
        .unwrap_or_else(|| PathBuf::from("results").join(&name));
    let trace = p
        .get("trace", |v| match v {
            "aggregate" => Ok(TraceMode::Aggregate),
            "full" => Ok(TraceMode::Full),
            other => Err(format!("unknown trace mode `{other}` (aggregate, full)")),
        })
        .unwrap_or_default();
    let trace_budget: u64 = p.get("trace_budget", parse_num).unwrap_or(engine::DEFAULT_TRACE_BUDGET);
    let jobs: Option<usize> = p.get("jobs", parse_num);

    let list = |key: &str| lists.get(key).cloned().unwrap_or_default();

    let mut class_means = Vec::new();
    for e in list("class_mean") {
        match parse_num::<f64>(&e.value) {
            Ok(m) if m.is_finite() => {
                if class_means.contains(&m) {
                    diags.push(diag(e, &format!("duplicate class mean {m}")));
                }
                class_means.push(m);
            }
            Ok(m) => diags.push(diag(e, &format!("class mean must be finite, got {m}"))),
            Err(msg) => diags.push(diag(e, &msg)),
        }
    }

    let mut algorithms: Vec<Algorithm> = Vec::new();
    for e in list("algorithm") {
        match Algorithm::parse(&e.value) {
            Ok(a) => {
                if algorithms.iter().any(|b| b.name() == a.name()) {
                    diags.push(diag(e, &format!("algorithm `{}` listed twice", a.name())));
                }
                algorithms.push(a)
            }
            Err(msg) => diags.push(diag(e, &msg)),
        }
    }
    if algorithms.is_empty() {
        diags.push(missing("algorithm", "at least one algorithm is required"));
    }

    let mut epsilons = Vec::new();
    for e in list("epsilon") {
        match parse_num::<f64>(&e.value) {
            Ok(x) if x > 0.0 && x.is_finite() => epsilons.push(x),
            Ok(_) => diags.push(diag(e, "epsilon must be positive")),
            Err(msg) => diags.push(diag(e, &msg)),
        }
    }

    let mut horizon_overrides = BTreeMap::new();
    for e in list("horizon_override") {
        let parsed = e
            .value
            .split_once(':')
            .ok_or_else(|| "expected `algorithm:horizon`".to_string())
            .and_then(|(a, h)| Ok((a.trim().to_string(), parse_num::<u64>(h.trim())?)));
        match parsed {
            Ok((_, 0)) => diags.push(diag(e, "horizon override must be at least 1")),
            Ok((a, h)) => {
                // overrides for known algorithms that are not selected are ignored
                if let Err(msg) = Algorithm::parse(&a) {
                    diags.push(diag(e, &msg));
                } else if algorithms.iter().any(|b| b.name() == a) {
                    horizon_overrides.insert(a, h);
                }
            }
            Err(msg) => diags.push(diag(e, &msg)),
        }
    }

    // scalar range checks
    let check = |diags: &mut Vec<Diagnostic>, key: &str, ok: bool, msg: &str| {
        if !ok {
            let line = scalars.get(key).and_then(|e| e.line);
            diags.push(Diagnostic {
                line,
                key: key.into(),
                message: msg.into(),
            });
        }
    };
    check(&mut diags, "horizon", horizon >= 1, "horizon must be at least 1");
    check(&mut diags, "runs", runs >= 1, "runs must be at least 1");
    check(&mut diags, "delta", delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    check(&mut diags, "eta", eta >= 0.0 && eta.is_finite(), "eta must be non-negative");
    check(&mut diags, "samples_per_round", samples_per_round >= 1, "samples_per_round must be at least 1");
    check(&mut diags, "jobs", jobs != Some(0), "jobs must be at least 1");

    let instance = match (instance_file, class_means.is_empty()) {
        (Some(path), true) => {
            let path = if path.is_absolute() { path } else { base_dir.join(path) };
            match fs::read_to_string(&path) {
                Ok(text) => {
                    if let Err(e) = ProblemInstance::from_text(&text) {
                        check(&mut diags, "instance_file", false, &format!("{}: {e}", path.display()));
                    }
                }
                Err(e) => check(&mut diags, "instance_file", false, &format!("cannot read {}: {e}", path.display())),
            }
            for key in ["agents", "sigma"] {
                check(&mut diags, key, !scalars.contains_key(key), "not allowed with instance_file");
            }
            Some(InstanceSource::File(path))
        }
        (Some(_), false) => {
            check(&mut diags, "instance_file", false, "give either instance_file or class_mean, not both");
            None
        }
        (None, true) => {
            diags.push(missing("class_mean", "no instance: give class_mean entries or instance_file"));
            None
        }
        (None, false) => {
            match agents {
                None => diags.push(missing("agents", "required with class_mean")),
                Some(n) if n < class_means.len() => check(
                    &mut diags,
                    "agents",
                    false,
                    &format!("{n} agents cannot cover {} classes", class_means.len()),
                ),
                _ => {}
            }
            match sigma {
                None => diags.push(missing("sigma", "required with class_mean")),
                Some(s) => check(&mut diags, "sigma", s >= 0.0 && s.is_finite(), "sigma must be non-negative"),
            }
            Some(InstanceSource::Generated {
                spec: InstanceSpec::Random {
                    class_means,
                    num_agents: agents.unwrap_or(0),
                    sigma: sigma.unwrap_or(0.0),
                },
                seed: instance_seed,
            })
        }
    };

    if !diags.is_empty() {
        return Err(diags);
    }

    let sim = SimulationConfig {
        horizon,
        runs,
        seed,
        delta,
        eta,
        samples_per_round,
        algorithms,
        epsilons,
        horizon_overrides,
        trace,
        trace_budget_bytes: trace_budget,
    };
    Ok(ExperimentManifest {
        name,
        instance: instance.expect("instance diagnosed above"),
        sim,
        out,
        jobs,
        canonical: canonical_text(&entries),
    })
}

struct Parser<'a, 'b> {
    scalars: &'a BTreeMap<&'a str, &'a Entry>,
    diags: &'b mut Vec<Diagnostic>,
}

impl Parser<'_, '_> {
    fn get<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let e = self.scalars.get(key)?;
        match parse(&e.value) {
            Ok(v) => Some(v),
            Err(msg) => {
                self.diags.push(diag(e, &msg));
                None
            }
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn diag(e: &Entry, message: &str) -> Diagnostic {
    Diagnostic {
        line: e.line,
        key: e.key.clone(),
        message: message.into(),
    }
}

fn missing(key: &str, message: &str) -> Diagnostic {
    Diagnostic {
        line: None,
        key: key.into(),
        message: message.into(),
    }
}

// Sorted by key, order-preserving within repeated keys; `out` and `jobs`
// do not affect results and are left out.
fn canonical_text(entries: &[Entry]) -> String {
    let mut sorted: Vec<&Entry> = entries
        .iter()
        .filter(|e| e.key != "out" && e.key != "jobs")
        .collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let mut s = String::new();
    for e in sorted {
        writeln!(s, "{} = {}", e.key, e.value).unwrap();
    }
    s
}

pub fn config_hash(manifest: &ExperimentManifest) -> String {
    let digest = Sha256::digest(manifest.canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a manifest given as a bundled name or a path. Returns the text and
/// the directory relative paths resolve against.
pub fn load_manifest(arg: &str) -> Result<(String, PathBuf)> {
    if let Some(text) = bundled_manifest(arg) {
        return Ok((text.to_string(), PathBuf::from(".")));
    }
    let path = Path::new(arg);
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("cannot read manifest `{arg}`: {e}")))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok((text, base))
}

pub fn build_instance(manifest: &ExperimentManifest) -> Result<ProblemInstance> {
    match &manifest.instance {
        InstanceSource::Generated { spec, seed } => engine::make_instance(spec, *seed),
        InstanceSource::File(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
            ProblemInstance::from_text(&text)
        }
    }
}

pub fn theory_report(manifest: &ExperimentManifest, inst: &ProblemInstance) -> Result<TheoryReport> {
    let cfg = BoundConfig::new(manifest.sim.delta, inst.num_agents(), inst.sigma())?;
    TheoryReport::compute(inst, &cfg, &manifest.sim.epsilons, manifest.sim.eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    TheoryOnly,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub written: Vec<PathBuf>,
    pub experiment: Option<Experiment>,
    pub theory: TheoryReport,
}

/// Runs a parsed manifest and writes its artifacts into `manifest.out`.
pub fn run(manifest: &ExperimentManifest, mode: Mode, quiet: bool) -> Result<RunOutcome> {
    let inst = build_instance(manifest)?;
    let theory = theory_report(manifest, &inst)?;
    fs::create_dir_all(&manifest.out)?;

    let mut written = Vec::new();
    let mut write = |file: &str, body: String| -> Result<()> {
        let path = manifest.out.join(file);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    write("instance.txt", inst.to_text())?;
    write("theory.csv", theory.to_csv())?;

    let experiment = match mode {
        Mode::TheoryOnly => None,
        Mode::Simulate => {
            let done: Vec<AtomicUsize> = (0..manifest.sim.runs).map(|_| AtomicUsize::new(0)).collect();
            let per_run = manifest.sim.algorithms.len();
            let progress = |run: usize, _alg: &str| {
                if done[run].fetch_add(1, Ordering::SeqCst) + 1 == per_run && !quiet {
                    eprintln!("run {}/{} done", run + 1, manifest.sim.runs);
                }
            };
            let source = engine::GaussianSource::new(manifest.sim.seed, &inst);
            let exec = || engine::run_experiment_observed(&manifest.sim, &inst, &source, &progress);
            let exp = match manifest.jobs {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Io(e.to_string()))?
                    .install(exec)?,
                None => exec()?,
            };
            write("curves.csv", curves_csv(&exp))?;
            write("events.csv", events_csv(&exp))?;
            write("summaries.csv", summaries_csv(&exp))?;
            Some(exp)
        }
    };

    let stamp = format!(
        "name = {}\nseed = {}\nconfig_sha256 = {}\nartifact_version = {}\ngenerated_unix = {}\n",
        manifest.name,
        manifest.sim.seed,
        config_hash(manifest),
        ARTIFACT_VERSION,
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    );
    write("stamp.txt", stamp)?;

    Ok(RunOutcome {
        written,
        experiment,
        theory,
    })
}

fn group_label(exp: &Experiment, g: Group) -> String {
    match g {
        Group::All => "all".into(),
        Group::Class(i) => exp.group_means[i].to_string(),
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<u64>) -> String {
    x.map_or_else(|| "NA".into(), |v| v.to_string())
}

fn conv_metric(eps: f64) -> String {
    format!("conv({eps})")
}

/// `algorithm,class,metric,t,mean,std`, pooled over agents and runs.
pub fn curves_csv(exp: &Experiment) -> String {
    let mut out = String::from("algorithm,class,metric,t,mean,std\n");
    let groups: Vec<Group> = std::iter::once(Group::All)
        .chain((0..exp.group_means.len()).map(Group::Class))
        .collect();
    for alg in &exp.config.algorithms {
        let name = alg.name();
        for &g in &groups {
            let gi = match g {
                Group::All => None,
                Group::Class(i) => Some(i),
            };
            let label = group_label(exp, g);
            let curves = [
                ("error", exp.error_curve(name, gi)),
                ("precision", exp.precision_curve(name, gi)),
            ];
            for (metric, curve) in curves {
                let Some(curve) = curve else { continue };
                for (t, m) in curve.iter() {
                    writeln!(out, "{name},{label},{metric},{t},{},{}", fmt_num(m.mean()), fmt_num(m.std())).unwrap();
                }
            }
        }
    }
    out
}

/// `algorithm,agent,run,class,metric,value`; `NA` marks never settled.
pub fn events_csv(exp: &Experiment) -> String {
    let mut out = String::from("algorithm,agent,run,class,metric,value\n");
    let eps_names: Vec<String> = exp.config.epsilons.iter().map(|&e| conv_metric(e)).collect();
    for tr in &exp.traces {
        for agent in 0..exp.groups.len() {
            let label = exp.group_means[exp.groups[agent]];
            let prefix = format!("{},{agent},{},{label}", tr.algorithm, tr.run);
            if let Some(times) = &tr.class_id_times {
                writeln!(out, "{prefix},class_id_time,{}", fmt_opt(times[agent])).unwrap();
            }
            for (e, name) in eps_names.iter().enumerate() {
                writeln!(out, "{prefix},{name},{}", fmt_opt(tr.convergence[e][agent])).unwrap();
            }
        }
    }
    out
}

/// `algorithm,class,metric,avg,std,max,not_converged_count`. Each agent's
/// value is averaged over runs first, then summarized across agents; an agent
/// that failed to settle in some run counts as not converged.
pub fn summaries_csv(exp: &Experiment) -> String {
    let mut out = String::from("algorithm,class,metric,avg,std,max,not_converged_count\n");
    let as_f64 = |v: &[Option<u64>]| -> Vec<Option<f64>> { v.iter().map(|x| x.map(|x| x as f64)).collect() };
    for alg in &exp.config.algorithms {
        let name = alg.name();
        let mut metrics_list: Vec<(String, Vec<Vec<Option<f64>>>)> = Vec::new();
        if alg.tracks_classes() {
            let per_run = exp
                .traces_for(name)
                .filter_map(|t| t.class_id_times.as_deref())
                .map(as_f64)
                .collect();
            metrics_list.push(("class_id_time".into(), per_run));
        }
        for (e, &eps) in exp.config.epsilons.iter().enumerate() {
            let per_run = exp.traces_for(name).map(|t| as_f64(&t.convergence[e])).collect();
            metrics_list.push((conv_metric(eps), per_run));
        }
        for (metric, per_run) in metrics_list {
            let values = metrics::aggregate_runs_first(&per_run);
            for (g, s) in metrics::aggregate_by_class(&values, &exp.groups) {
                writeln!(
                    out,
                    "{name},{},{metric},{},{},{},{}",
                    group_label(exp, g),
                    fmt_num(s.avg),
                    fmt_num(s.std),
                    fmt_num(s.max),
                    s.not_converged
                )
                .unwrap();
            }
        }
    }
    out
}
