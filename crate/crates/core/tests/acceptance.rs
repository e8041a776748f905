//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use colme::bounds::{confidence_radius, inverse_radius_ceil, BoundConfig, RadiusTable};
use colme::cli::{self, Overrides};
use colme::engine::{run_experiment, Algorithm, Experiment, GaussianSource, Simulation, SimulationConfig, TraceMode};
use colme::metrics::Curve;
use colme::model::{self, AgentMemory, ProblemInstance};
use colme::strategies::{self, WeightScheme};
use colme::theory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("[{}] criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn three_class_instance() -> (cli::ExperimentManifest, ProblemInstance) {
    let (text, base) = cli::load_manifest("three-class").unwrap();
    let manifest = cli::parse_manifest(&text, &base, &Overrides::default()).unwrap();
    let inst = cli::build_instance(&manifest).unwrap();
    (manifest, inst)
}

fn criterion_1(r: &mut Report) {
    let cfg = BoundConfig::new(0.001, 200, 0.5).unwrap();
    let a = inverse_radius_ceil(&cfg, 0.1).unwrap();
    let b = inverse_radius_ceil(&cfg, 0.01).unwrap();
    r.line(
        "1 (inversion anchors)",
        a.abs_diff(885) <= 1 && b.abs_diff(100216) <= 1,
        format!("ceil inverse at 0.1 = {a} (885 +-1), at 0.01 = {b} (100216 +-1)"),
    );
}

fn criterion_2(r: &mut Report, inst: &ProblemInstance) {
    let cfg = BoundConfig::new(0.001, inst.num_agents(), inst.sigma()).unwrap();
    let extra = inst.num_agents() as u64 - 1;
    let mut ok = true;
    let mut seen = BTreeMap::new();
    for a in 0..inst.num_agents() {
        let v = theory::n_star(inst, a, a, &cfg, 0.0).unwrap() + extra;
        let target = if inst.mean(a) == 0.8 { 1085 } else { 3878 };
        ok &= v.abs_diff(target) <= 2;
        seen.insert(format!("{}", inst.mean(a)), v);
    }
    let report = theory::TheoryReport::compute(inst, &cfg, &[0.1, 0.01], 0.0).unwrap();
    let min = report.min_threshold();
    r.line(
        "2 (theory anchors)",
        ok && within(min, 0.049, 0.001),
        format!("n*+A-1 by class {seen:?} (3878/3878/1085 +-2); min eps threshold {min:.5} (0.049 +-0.001)"),
    );
}

/// Per-class averages, indexed by class mean.
fn class_averages(exp: &Experiment, pairs: &[(usize, Option<u64>)]) -> BTreeMap<String, (f64, usize, usize)> {
    let mut acc: BTreeMap<String, (f64, usize, usize)> = BTreeMap::new();
    for (a, v) in pairs {
        let key = format!("{}", exp.group_means[exp.groups[*a]]);
        let e = acc.entry(key).or_default();
        match v {
            Some(x) => {
                e.0 += *x as f64;
                e.1 += 1;
            }
            None => e.2 += 1,
        }
    }
    for e in acc.values_mut() {
        e.0 /= e.1.max(1) as f64;
    }
    acc
}

fn all_average(pairs: &[(usize, Option<u64>)]) -> (f64, usize) {
    let done: Vec<f64> = pairs.iter().filter_map(|(_, v)| v.map(|x| x as f64)).collect();
    (done.iter().sum::<f64>() / done.len() as f64, pairs.len() - done.len())
}

fn criterion_3(r: &mut Report, exp: &Experiment, inst: &ProblemInstance) {
    let cfg = BoundConfig::new(0.001, inst.num_agents(), inst.sigma()).unwrap();
    let pairs = exp.class_id_values("rrr");
    let avgs = class_averages(exp, &pairs);
    let table = [("0.2", 1376.0, 211.0), ("0.4", 1379.0, 210.0), ("0.8", 373.0, 55.0)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (class, mean, std) in table {
        let (avg, _, missing) = avgs[class];
        ok &= missing == 0 && within(avg, mean, 3.0 * std);
        parts.push(format!("{class}: {avg:.0} vs {mean}+-3*{std}"));
    }
    let zeta: Vec<u64> = (0..inst.num_agents())
        .map(|a| theory::zeta(inst, a, &cfg, 0.0).unwrap())
        .collect();
    let good = pairs.iter().filter(|(a, v)| v.is_some_and(|t| t <= zeta[*a])).count();
    let frac = good as f64 / pairs.len() as f64;
    let need = 1.0 - 0.001 / 8.0 - 0.02;
    r.line(
        "3 (class identification)",
        ok && frac >= need,
        format!("{}; fraction with id time <= zeta_a {frac:.4} (>= {need:.5})", parts.join(", ")),
    );
}

fn criterion_4(r: &mut Report, exp: &Experiment) {
    // (algorithm, conv(0.1) mean, std, conv(0.01) mean, std)
    let table = [
        ("rr", 417.0, 230.0, 916.0, 427.0),
        ("rrr", 405.0, 227.0, 894.0, 438.0),
        ("local", 41.0, 39.0, 4494.0, 3945.0),
        ("oracle", 5.0, 4.0, 98.0, 63.0),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (alg, m1, s1, m2, s2) in table {
        for (e, m, s) in [(0, m1, s1), (1, m2, s2)] {
            let (avg, missing) = all_average(&exp.convergence_values(alg, e));
            ok &= within(avg, m, 3.0 * s);
            let eps = exp.config.epsilons[e];
            parts.push(format!("{alg}@{eps}: {avg:.0} vs {m}+-3*{s} ({missing} unconverged)"));
        }
    }
    r.line("4 (convergence times)", ok, parts.join("; "));
}

fn criterion_5(r: &mut Report, exp: &Experiment) {
    let order = ["oracle", "agg-rrr", "soft-rrr", "rrr", "rr", "local"];
    let avgs: Vec<f64> = order.iter().map(|a| all_average(&exp.convergence_values(a, 1)).0).collect();
    let ok = avgs[0] < avgs[1] && avgs[1] < avgs[2] && avgs[2] < avgs[3] && avgs[3] <= avgs[4] && avgs[4] < avgs[5];
    let shown: Vec<String> = order.iter().zip(&avgs).map(|(a, v)| format!("{a} {v:.0}")).collect();
    r.line("5 (method ordering at 0.01)", ok, shown.join(" / "));
}

fn criterion_6(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut issues: Vec<String> = Vec::new();

    // class membership rule on the good events
    let grid = [0.0, 0.1, 0.2, 0.4, 0.5, 0.8];
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..40);
        let means: Vec<f64> = (0..n).map(|_| grid[rng.gen_range(0..grid.len())]).collect();
        let sigma = rng.gen_range(0.1..1.0);
        let eta = [0.0, 0.05, 0.15, 0.25][rng.gen_range(0..4)];
        let inst = ProblemInstance::new(means.clone(), sigma).unwrap();
        let cfg = BoundConfig::new(rng.gen_range(0.001..0.2), n, sigma).unwrap();
        let a = rng.gen_range(0..n);
        let truth = model::true_class(&inst, a, eta).members;
        let mut mem = AgentMemory::new(a, n);
        for l in 0..n {
            let need = theory::n_star(&inst, a, l, &cfg, eta).unwrap_or(1);
            let count = need + rng.gen_range(0..need);
            let avg = means[l] + rng.gen_range(-1.0..=1.0) * confidence_radius(&cfg, count);
            mem.record(l, avg, count);
        }
        for l in 0..n {
            if (model::optimistic_distance(&mem, l, &cfg) > eta) == truth.contains(l) {
                violations += 1;
            }
        }
    }
    if violations > 0 {
        issues.push(format!("{violations} membership violations"));
    }

    // weights, self-membership, eta monotonicity
    let mut bad_weights = 0;
    let mut bad_classes = 0;
    for _ in 0..2000 {
        let n = rng.gen_range(2..15);
        let owner = rng.gen_range(0..n);
        let mut mem = AgentMemory::new(owner, n);
        let t = rng.gen_range(1..500);
        mem.record(owner, rng.gen_range(0.0..1.0), t);
        for l in 0..n {
            if l != owner && rng.gen_bool(0.7) {
                mem.record(l, rng.gen_range(0.0..1.0), rng.gen_range(1..=t));
            }
        }
        let table = RadiusTable::new(BoundConfig::new(0.01, n, 0.2).unwrap(), 500);
        let (e1, e2) = (rng.gen_range(0.0..0.3), rng.gen_range(0.3..0.6));
        let c1 = model::optimistic_class(&mem, &table, e1);
        let c2 = model::optimistic_class(&mem, &table, e2);
        if !c1.contains(owner) || !c1.is_subset(&c2) {
            bad_classes += 1;
        }
        for scheme in [WeightScheme::Simple, WeightScheme::Soft, WeightScheme::Aggressive, WeightScheme::ClassUniform] {
            let mut w = vec![0.0; n];
            strategies::fill_weights(scheme, &mem, &c1, &table, &mut w).unwrap();
            let s: f64 = w.iter().sum();
            if w.iter().any(|x| *x < 0.0) || (s - 1.0).abs() > 1e-12 {
                bad_weights += 1;
            }
        }
    }
    if bad_weights + bad_classes > 0 {
        issues.push(format!("{bad_weights} bad weight vectors, {bad_classes} bad classes"));
    }

    // pooled-mean identity against raw samples
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = rng.gen_range(2..=5);
        let means: Vec<f64> = (0..n).map(|_| [0.0, 0.4, 1.0][rng.gen_range(0..3)]).collect();
        let inst = ProblemInstance::new(means, 0.3).unwrap();
        let source = GaussianSource::new(case, &inst);
        let bound = BoundConfig::new(0.05, n, 0.3).unwrap();
        let alg = Algorithm::named("rrr").unwrap();
        let mut sim = Simulation::new(&inst, &alg, bound, 0.0, 1, 200, &source, 0);
        let mut raw = vec![0.0; n];
        let mut history: Vec<Vec<f64>> = Vec::new();
        for t in 1..=200u64 {
            for (a, s) in raw.iter_mut().enumerate() {
                *s += colme::engine::SampleSource::sample(&source, 0, a, t, 0);
            }
            history.push(raw.clone());
            let est = sim.step().unwrap().to_vec();
            let classes = sim.optimistic_classes().unwrap();
            for a in 0..n {
                let mem = &sim.memories()[a];
                let (mut num, mut den) = (0.0, 0.0);
                for l in classes[a].iter().filter(|&l| mem.count(l) > 0) {
                    let c = mem.count(l);
                    num += history[c as usize - 1][l];
                    den += c as f64;
                }
                worst = worst.max((est[a] - num / den).abs());
            }
        }
    }
    if worst > 1e-12 {
        issues.push(format!("pooled mean off by {worst:e}"));
    }

    // inversion round trip
    let cfg = BoundConfig::new(0.001, 200, 0.5).unwrap();
    let bad_inv = (0..1000)
        .filter(|i| {
            let x = 10f64.powf(-3.0 + 4.0 * *i as f64 / 999.0);
            let n = inverse_radius_ceil(&cfg, x).unwrap();
            !(confidence_radius(&cfg, n) < x && confidence_radius(&cfg, n - 1) >= x)
        })
        .count();
    if bad_inv > 0 {
        issues.push(format!("{bad_inv} inversion round-trip failures"));
    }

    // bit-identical replay
    let inst = ProblemInstance::new(vec![0.2, 0.8, 0.4, 0.2, 0.8, 0.4], 0.5).unwrap();
    let sim_cfg = SimulationConfig {
        horizon: 100,
        runs: 3,
        seed: 8,
        algorithms: ["rr", "rrr", "soft-rrr", "agg-rrr", "local", "oracle"]
            .iter()
            .map(|n| Algorithm::named(n).unwrap())
            .collect(),
        trace: TraceMode::Full,
        ..Default::default()
    };
    let once = run_experiment(&sim_cfg, &inst).unwrap();
    let twice = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_experiment(&sim_cfg, &inst).unwrap());
    let bits = |e: &Experiment| -> Vec<u64> {
        e.traces
            .iter()
            .flat_map(|t| t.full.as_ref().unwrap().estimates.iter().map(|x| x.to_bits()))
            .collect()
    };
    if bits(&once) != bits(&twice) || once != twice {
        issues.push("replay differs".into());
    }

    r.line(
        "6 (property suites)",
        issues.is_empty(),
        if issues.is_empty() {
            "membership rule (1000 instances), weights, self-membership, eta monotonicity, pooled mean, \
             inversion round trip, replay: no violations"
                .into()
        } else {
            issues.join("; ")
        },
    );
}

fn criterion_7(r: &mut Report) {
    let (eta, eps, delta) = (0.25, 0.02, 0.001);
    let spec = colme::engine::InstanceSpec::Random {
        class_means: vec![0.2, 0.4, 0.8],
        num_agents: 30,
        sigma: 0.5,
    };
    let inst = colme::engine::make_instance(&spec, 31).unwrap();
    let cfg = BoundConfig::new(delta, 30, 0.5).unwrap();
    let taus: Vec<u64> = (0..30).map(|a| theory::tau(&inst, a, &cfg, eps, eta).unwrap()).collect();
    let horizon = taus.iter().max().unwrap() + 2000;
    let sim_cfg = SimulationConfig {
        horizon,
        runs: 20,
        seed: 77,
        delta,
        eta,
        algorithms: vec![Algorithm::named("eta-rrr").unwrap()],
        epsilons: vec![eps],
        ..Default::default()
    };
    let exp = run_experiment(&sim_cfg, &inst).unwrap();
    let mut total = 0;
    let mut good = 0;
    for (a, v) in exp.convergence_values("eta-rrr", 0) {
        if inst.mean(a) == 0.8 {
            continue;
        }
        total += 1;
        if v.is_some_and(|t| t <= taus[a]) {
            good += 1;
        }
    }
    let frac = good as f64 / total as f64;
    let need = 1.0 - delta / 4.0 - 0.02;
    let tau_range = (
        (0..30).filter(|&a| inst.mean(a) != 0.8).map(|a| taus[a]).min().unwrap(),
        taus.iter().max().unwrap(),
    );
    r.line(
        "7 (eta extension)",
        total > 0 && frac >= need,
        format!(
            "{good}/{total} (agent, run) pairs within {eps} of their class mean by tau^eta in {tau_range:?}, H = {horizon}: {frac:.4} (>= {need:.5})"
        ),
    );
}

/// Largest drop below the running maximum after `from`.
fn max_drop(curve: &Curve, from: u64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut drop: f64 = 0.0;
    for (_, m) in curve.iter().filter(|(t, _)| *t >= from) {
        best = best.max(m.mean());
        drop = drop.max(best - m.mean());
    }
    drop
}

fn criterion_8(r: &mut Report, exp: &Experiment) {
    let horizon = exp.config.horizon;
    let mut ok = true;
    let mut parts = Vec::new();
    for alg in ["rr", "rrr", "soft-rrr", "agg-rrr"] {
        let p = exp.precision_curve(alg, None).unwrap();
        let drop = max_drop(&p, 250);
        let end = p.at(horizon).mean();
        ok &= drop <= 0.01 && end >= 0.999;
        parts.push(format!("{alg} precision end {end:.4}, drop after t=250 {drop:.4}"));
    }
    let local = exp.error_curve("local", None).unwrap();
    for alg in ["rr", "rrr", "soft-rrr", "agg-rrr", "oracle"] {
        let e = exp.error_curve(alg, None).unwrap();
        let below_at_end = e.at(horizon).mean() < local.at(horizon).mean();
        let first = (1..=horizon).find(|&t| e.at(t).mean() < local.at(t).mean());
        ok &= below_at_end && first.is_some();
        parts.push(format!(
            "{alg} error {:.4} vs local {:.4} at H (first below at t={first:?})",
            e.at(horizon).mean(),
            local.at(horizon).mean()
        ));
    }
    r.line("8 (curve shapes)", ok, parts.join("; "));
}

fn coverage(r: &mut Report, exp: &Experiment, inst: &ProblemInstance) {
    let cfg = BoundConfig::new(0.001, inst.num_agents(), inst.sigma()).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for (e, &eps) in exp.config.epsilons.iter().enumerate() {
        let tau: Vec<u64> = (0..inst.num_agents())
            .map(|a| theory::tau(inst, a, &cfg, eps, 0.0).unwrap())
            .collect();
        let pairs = exp.convergence_values("rrr", e);
        let late = pairs.iter().filter(|(a, v)| v.is_none_or(|t| t > tau[*a])).count();
        let frac = late as f64 / pairs.len() as f64;
        ok &= frac <= 0.001 / 4.0 + 0.02;
        parts.push(format!("eps {eps}: {frac:.4} of pairs still off after tau_a"));
    }
    r.line("theory coverage (rrr, tau_a)", ok, parts.join("; "));
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut r = Report { failures: 0 };
    let (manifest, inst) = three_class_instance();

    criterion_1(&mut r);
    criterion_2(&mut r, &inst);
    criterion_6(&mut r);

    eprintln!("simulating the 3-class configuration ({} runs)...", manifest.sim.runs);
    let exp = run_experiment(&manifest.sim, &inst).unwrap();
    criterion_3(&mut r, &exp, &inst);
    criterion_4(&mut r, &exp);
    criterion_5(&mut r, &exp);
    criterion_8(&mut r, &exp);
    coverage(&mut r, &exp, &inst);

    eprintln!("simulating the eta extension...");
    criterion_7(&mut r);

    println!(
        "acceptance: {} failing, {:.0}s",
        r.failures,
        started.elapsed().as_secs_f64()
    );
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
