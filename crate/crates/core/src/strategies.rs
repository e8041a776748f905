//! Query-target selection and the weighting schemes used to aggregate the
//! averages an agent holds in memory.

use std::fmt;
use std::str::FromStr;

use crate::bounds::Radius;
use crate::error::{Error, Result};
use crate::model::{AgentMemory, AgentSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryStrategy {
    /// Cycle over every peer.
    RoundRobin,
    /// Cycle over the current optimistic class.
    RestrictedRoundRobin,
    /// Cycle over the true class (oracle baseline).
    OracleRestricted,
}

impl QueryStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryStrategy::RoundRobin => "rr",
            QueryStrategy::RestrictedRoundRobin => "rrr",
            QueryStrategy::OracleRestricted => "oracle-rrr",
        }
    }
}

impl FromStr for QueryStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rr" => Ok(QueryStrategy::RoundRobin),
            "rrr" => Ok(QueryStrategy::RestrictedRoundRobin),
            "oracle-rrr" => Ok(QueryStrategy::OracleRestricted),
            other => Err(format!("unknown query strategy `{other}`")),
        }
    }
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    Simple,
    Soft,
    Aggressive,
    ClassUniform,
    OracleSimple,
    Local,
}

impl WeightScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightScheme::Simple => "simple",
            WeightScheme::Soft => "soft",
            WeightScheme::Aggressive => "aggressive",
            WeightScheme::ClassUniform => "class-uniform",
            WeightScheme::OracleSimple => "oracle",
            WeightScheme::Local => "local",
        }
    }
}

impl FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simple" => Ok(WeightScheme::Simple),
            "soft" => Ok(WeightScheme::Soft),
            "aggressive" => Ok(WeightScheme::Aggressive),
            "class-uniform" => Ok(WeightScheme::ClassUniform),
            "oracle" => Ok(WeightScheme::OracleSimple),
            "local" => Ok(WeightScheme::Local),
            other => Err(format!("unknown weighting scheme `{other}`")),
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Next peer in cyclic order starting at the memory's cursor, skipping the
/// owner and, for the restricted strategies, anyone outside `allowed`.
///
/// On success the cursor moves just past the returned peer. When no candidate
/// exists the memory is left untouched.
pub fn choose_agent(
    strategy: QueryStrategy,
    mem: &mut AgentMemory,
    allowed: &AgentSet,
) -> Option<usize> {
    let n = mem.num_agents();
    let owner = mem.owner();
    let start = mem.cursor();
    let restricted = strategy != QueryStrategy::RoundRobin;
    let pick = (0..n)
        .map(|k| (start + k) % n)
        .find(|&l| l != owner && (!restricted || allowed.contains(l)))?;
    mem.set_cursor(pick + 1);
    Some(pick)
}

pub fn weights_simple(mem: &AgentMemory, support: &AgentSet) -> Result<Vec<f64>> {
    let mut w = vec![0.0; mem.num_agents()];
    fill_simple(mem, support, &mut w)?;
    Ok(w)
}

pub fn weights_soft(mem: &AgentMemory, support: &AgentSet, radius: &(impl Radius + ?Sized)) -> Result<Vec<f64>> {
    let mut w = vec![0.0; mem.num_agents()];
    fill_overlap(mem, support, radius, false, &mut w)?;
    Ok(w)
}

pub fn weights_aggressive(
    mem: &AgentMemory,
    support: &AgentSet,
    radius: &(impl Radius + ?Sized),
) -> Result<Vec<f64>> {
    let mut w = vec![0.0; mem.num_agents()];
    fill_overlap(mem, support, radius, true, &mut w)?;
    Ok(w)
}

pub fn weights_class_uniform(support: &AgentSet, mem: &AgentMemory) -> Result<Vec<f64>> {
    let mut w = vec![0.0; mem.num_agents()];
    fill_class_uniform(mem, support, &mut w)?;
    Ok(w)
}

/// Weight vector for `scheme`, written into `out` (length A).
///
/// For [`WeightScheme::OracleSimple`] the caller passes the true class as
/// `support`; [`WeightScheme::Local`] ignores the support.
pub fn fill_weights(
    scheme: WeightScheme,
    mem: &AgentMemory,
    support: &AgentSet,
    radius: &(impl Radius + ?Sized),
    out: &mut [f64],
) -> Result<()> {
    match scheme {
        WeightScheme::Simple | WeightScheme::OracleSimple => fill_simple(mem, support, out),
        WeightScheme::Soft => fill_overlap(mem, support, radius, false, out),
        WeightScheme::Aggressive => fill_overlap(mem, support, radius, true, out),
        WeightScheme::ClassUniform => fill_class_uniform(mem, support, out),
        WeightScheme::Local => {
            let owner = mem.owner();
            if mem.count(owner) == 0 {
                return Err(Error::DegenerateSupport(owner));
            }
            out.fill(0.0);
            out[owner] = 1.0;
            Ok(())
        }
    }
}

/// Weighted aggregate of the stored averages.
pub fn estimate(
    mem: &AgentMemory,
    support: &AgentSet,
    scheme: WeightScheme,
    radius: &(impl Radius + ?Sized),
) -> Result<f64> {
    if scheme == WeightScheme::Local {
        return Ok(mem.avg(mem.owner()));
    }
    let mut w = vec![0.0; mem.num_agents()];
    fill_weights(scheme, mem, support, radius, &mut w)?;
    Ok(dot(&w, mem.avgs()))
}

pub(crate) fn dot(w: &[f64], avgs: &[f64]) -> f64 {
    w.iter()
        .zip(avgs)
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, x)| w * x)
        .sum()
}

fn fill_simple(mem: &AgentMemory, support: &AgentSet, out: &mut [f64]) -> Result<()> {
    let counts = mem.counts();
    let total: u64 = support.iter().map(|l| counts[l]).sum();
    if total == 0 {
        return Err(Error::DegenerateSupport(mem.owner()));
    }
    let total = total as f64;
    for (l, w) in out.iter_mut().enumerate() {
        *w = if support.contains(l) {
            counts[l] as f64 / total
        } else {
            0.0
        };
    }
    Ok(())
}

// Unnormalized weight n_l * |I_a ∩ I_l| / |hull(I_a, I_l)|, optionally gated on
// the overlap exceeding the smaller radius; normalized by the sum of the same
// terms so the vector sums to one.
fn fill_overlap(
    mem: &AgentMemory,
    support: &AgentSet,
    radius: &(impl Radius + ?Sized),
    gated: bool,
    out: &mut [f64],
) -> Result<()> {
    let owner = mem.owner();
    let n_own = mem.count(owner);
    if n_own == 0 {
        return Err(Error::DegenerateSupport(owner));
    }
    let r_own = radius.radius(n_own);
    let own = mem.interval(owner, radius);

    let mut total = 0.0;
    for (l, w) in out.iter_mut().enumerate() {
        let n = mem.count(l);
        *w = 0.0;
        if n == 0 || !support.contains(l) {
            continue;
        }
        let r = radius.radius(n);
        let other = mem.interval(l, radius);
        let inter = own.intersection_len(&other);
        let hull = own.hull_len(&other);
        let ratio = if hull > 0.0 {
            inter / hull
        } else if mem.avg(l) == mem.avg(owner) {
            // both intervals collapse to the same point
            1.0
        } else {
            0.0
        };
        if gated && l != owner && !(inter > r.min(r_own)) {
            continue;
        }
        *w = n as f64 * ratio;
        total += *w;
    }

    if total > 0.0 && total.is_finite() {
        out.iter_mut().for_each(|w| *w /= total);
    } else {
        out.fill(0.0);
        out[owner] = 1.0;
    }
    Ok(())
}

fn fill_class_uniform(mem: &AgentMemory, support: &AgentSet, out: &mut [f64]) -> Result<()> {
    let counts = mem.counts();
    let k = support.iter().filter(|&l| counts[l] > 0).count();
    if k == 0 {
        return Err(Error::DegenerateSupport(mem.owner()));
    }
    let share = 1.0 / k as f64;
    for (l, w) in out.iter_mut().enumerate() {
        *w = if support.contains(l) && counts[l] > 0 {
            share
        } else {
            0.0
        };
    }
    Ok(())
}
