//! Closed-form complexity calculators: required sample counts, class and
//! mean estimation times, and the precision below which collaborating beats
//! estimating alone. All quantities use the realized instance.

use std::fmt::Write as _;

use crate::bounds::{confidence_radius, inverse_radius_ceil, BoundConfig};
use crate::error::{Error, Result};
use crate::model::{self, ProblemInstance};

/// Samples of `l` that agent `a` needs before the membership of `l` is
/// decided with high probability.
pub fn n_star(inst: &ProblemInstance, a: usize, l: usize, cfg: &BoundConfig, eta: f64) -> Result<u64> {
    inst.check_agent(a)?;
    inst.check_agent(l)?;
    let gap = inst.gap(a, l);
    let reference = if gap > eta {
        gap
    } else {
        inst.separation_gap(a, eta)
            .ok_or(Error::ClassTriviallyIdentified { agent: a })?
    };
    inverse_radius_ceil(cfg, (reference - eta) / 4.0)
}

/// High-probability time after which the optimistic class of `a` stays equal
/// to its true class under restricted round-robin. 0 when nothing separates.
pub fn zeta(inst: &ProblemInstance, a: usize, cfg: &BoundConfig, eta: f64) -> Result<u64> {
    let own = match n_star(inst, a, a, cfg, eta) {
        Ok(n) => n,
        Err(Error::ClassTriviallyIdentified { .. }) => return Ok(0),
        Err(e) => return Err(e),
    };
    let others = inst.num_agents() as u64 - 1;
    let mut early = 0;
    for l in 0..inst.num_agents() {
        if inst.gap(a, l) > eta && own > n_star(inst, a, l, cfg, eta)? + others {
            early += 1;
        }
    }
    Ok(own + others - early)
}

/// `ceil(ceil(beta^-1(eps)) / k + (k - 1) / 2)` for a class of size `k`.
pub fn oracle_tau(class_size: usize, cfg: &BoundConfig, epsilon: f64) -> Result<u64> {
    assert!(class_size >= 1, "class size must be positive");
    let local = inverse_radius_ceil(cfg, epsilon)? as u128;
    let k = class_size as u128;
    // (2 local + k (k - 1)) / (2 k), rounded up
    let num = 2 * local + k * (k - 1);
    Ok(num.div_ceil(2 * k) as u64)
}

/// Time after which the estimate of `a` stays within `epsilon` of its target.
pub fn tau(inst: &ProblemInstance, a: usize, cfg: &BoundConfig, epsilon: f64, eta: f64) -> Result<u64> {
    let class_size = model::true_class(inst, a, eta).len();
    let z = zeta(inst, a, cfg, eta)?;
    let collab = if eta == 0.0 {
        oracle_tau(class_size, cfg, epsilon)?
    } else {
        inverse_radius_ceil(cfg, epsilon)? + class_size as u64 - 1
    };
    Ok(z.max(collab))
}

/// Radius at the class identification time: collaboration is faster than
/// local estimation for every epsilon strictly below this value.
pub fn epsilon_threshold(inst: &ProblemInstance, a: usize, cfg: &BoundConfig) -> Result<f64> {
    if inst.separation_gap(a, 0.0).is_none() {
        return Err(Error::ClassTriviallyIdentified { agent: a });
    }
    Ok(confidence_radius(cfg, zeta(inst, a, cfg, 0.0)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub tau: u64,
    /// Whether `epsilon` lies below the collaboration threshold.
    pub collaboration_wins: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTheory {
    pub agent: usize,
    pub class_mean: f64,
    pub class_size: usize,
    /// `None` for a class nobody lies outside of.
    pub n_star_self: Option<u64>,
    pub zeta: u64,
    pub per_epsilon: Vec<EpsilonRow>,
    /// `+inf` when nothing separates (collaboration always wins).
    pub epsilon_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub eta: f64,
    pub agents: Vec<AgentTheory>,
}

impl TheoryReport {
    pub fn compute(inst: &ProblemInstance, cfg: &BoundConfig, epsilons: &[f64], eta: f64) -> Result<Self> {
        let agents = (0..inst.num_agents())
            .map(|a| {
                let cls = model::true_class(inst, a, eta);
                let n_star_self = match n_star(inst, a, a, cfg, eta) {
                    Ok(n) => Some(n),
                    Err(Error::ClassTriviallyIdentified { .. }) => None,
                    Err(e) => return Err(e),
                };
                // the threshold compares against the exact-class time
                let threshold = match epsilon_threshold(inst, a, cfg) {
                    Ok(x) => x,
                    Err(Error::ClassTriviallyIdentified { .. }) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
                let per_epsilon = epsilons
                    .iter()
                    .map(|&eps| {
                        Ok(EpsilonRow {
                            epsilon: eps,
                            tau: tau(inst, a, cfg, eps, eta)?,
                            collaboration_wins: eps < threshold,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AgentTheory {
                    agent: a,
                    class_mean: model::class_mean(inst, &cls)?,
                    class_size: cls.len(),
                    n_star_self,
                    zeta: zeta(inst, a, cfg, eta)?,
                    per_epsilon,
                    epsilon_threshold: threshold,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { eta, agents })
    }

    /// Flat CSV, one row per (agent, epsilon).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent_id,class_mean,class_size,n_star_self,zeta,eps,tau,eps_threshold\n");
        for ag in &self.agents {
            let n_star = ag.n_star_self.map_or_else(|| "NA".to_string(), |n| n.to_string());
            for row in &ag.per_epsilon {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    ag.agent,
                    ag.class_mean,
                    ag.class_size,
                    n_star,
                    ag.zeta,
                    row.epsilon,
                    row.tau,
                    ag.epsilon_threshold
                )
                .unwrap();
            }
        }
        out
    }

    pub fn min_threshold(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.epsilon_threshold)
            .fold(f64::INFINITY, f64::min)
    }
}
