//! Evaluation measures: class precision, estimation error, empirical
//! convergence time, and their aggregation across agents and runs.

use std::collections::BTreeMap;

use crate::model::AgentSet;

/// Fraction of the optimistic class that truly belongs to the class.
pub fn precision(optimistic: &AgentSet, truth: &AgentSet) -> f64 {
    let size = optimistic.len();
    if size == 0 {
        return 0.0;
    }
    optimistic.intersection_len(truth) as f64 / size as f64
}

pub fn error(estimate: f64, target: f64) -> f64 {
    (estimate - target).abs()
}

/// Earliest `tau` (1-based) such that every error from `tau` to the end is at
/// most `epsilon`; `None` if the last error is above it.
pub fn convergence_time(errors: &[f64], epsilon: f64) -> Option<u64> {
    let mut tracker = LastExcursion::default();
    for (i, &e) in errors.iter().enumerate() {
        tracker.observe(i as u64 + 1, e > epsilon);
    }
    tracker.settled_at(errors.len() as u64)
}

/// Streaming form of [`convergence_time`]: remembers the last step at which a
/// condition failed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LastExcursion {
    last_bad: u64,
}

impl LastExcursion {
    pub fn observe(&mut self, t: u64, bad: bool) {
        if bad {
            self.last_bad = t;
        }
    }

    /// First step of the final good stretch, or `None` if step `horizon` was bad.
    pub fn settled_at(&self, horizon: u64) -> Option<u64> {
        (self.last_bad < horizon || horizon == 0).then_some(self.last_bad + 1)
    }
}

/// Running count, sum and sum of squares.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        let m = self.mean();
        (self.sum_sq / self.count as f64 - m * m).max(0.0).sqrt()
    }
}

/// Per-step moments of one metric over a population of agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    steps: Vec<Moments>,
}

impl Curve {
    pub fn new(horizon: usize) -> Self {
        Self {
            steps: vec![Moments::default(); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// `t` is 1-based.
    pub fn push(&mut self, t: u64, x: f64) {
        self.steps[t as usize - 1].push(x);
    }

    pub fn merge(&mut self, other: &Curve) {
        assert_eq!(self.steps.len(), other.steps.len(), "curve horizons differ");
        for (a, b) in self.steps.iter_mut().zip(&other.steps) {
            a.merge(b);
        }
    }

    pub fn at(&self, t: u64) -> &Moments {
        &self.steps[t as usize - 1]
    }

    pub fn means(&self) -> Vec<f64> {
        self.steps.iter().map(Moments::mean).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Moments)> {
        self.steps.iter().enumerate().map(|(i, m)| (i as u64 + 1, m))
    }
}

/// avg/std/max over converged entries plus the number that never converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub avg: f64,
    pub std: f64,
    pub max: f64,
    pub count: usize,
    pub not_converged: usize,
}

/// Summarize a population; `None` entries count as not converged and are
/// excluded from avg/std/max.
pub fn aggregate(values: &[Option<f64>]) -> Summary {
    let mut moments = Moments::default();
    let mut max = f64::NEG_INFINITY;
    let mut missing = 0;
    for v in values {
        match v {
            Some(x) => {
                moments.push(*x);
                max = max.max(*x);
            }
            None => missing += 1,
        }
    }
    Summary {
        avg: moments.mean(),
        std: moments.std(),
        max: if moments.count == 0 { f64::NAN } else { max },
        count: moments.count as usize,
        not_converged: missing,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    All,
    Class(usize),
}

/// [`aggregate`] over everything and over each class label in `classes`
/// (parallel to `values`).
pub fn aggregate_by_class(values: &[Option<f64>], classes: &[usize]) -> BTreeMap<Group, Summary> {
    assert_eq!(values.len(), classes.len());
    let mut grouped: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (v, c) in values.iter().zip(classes) {
        grouped.entry(*c).or_default().push(*v);
    }
    let mut out = BTreeMap::new();
    out.insert(Group::All, aggregate(values));
    for (c, vs) in grouped {
        out.insert(Group::Class(c), aggregate(&vs));
    }
    out
}

/// Average each agent's value over runs first (`per_run[run][agent]`), then
/// summarize across agents. An agent whose value is missing in any run is
/// reported as not converged.
pub fn aggregate_runs_first(per_run: &[Vec<Option<f64>>]) -> Vec<Option<f64>> {
    let Some(first) = per_run.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|agent| {
            let mut sum = 0.0;
            for run in per_run {
                sum += run[agent]?;
            }
            Some(sum / per_run.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_cases() {
        let truth = AgentSet::from_indices(5, [0, 1]);
        assert_eq!(precision(&truth, &truth), 1.0);
        assert_eq!(precision(&AgentSet::full(5), &truth), 2.0 / 5.0);
    }

    #[test]
    fn error_cases() {
        assert_eq!(error(0.2, 0.2), 0.0);
        assert!((error(0.25, 0.2) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn convergence_cases() {
        assert_eq!(convergence_time(&[0.01, 0.02, 0.0], 0.1), Some(1));
        assert_eq!(convergence_time(&[0.5, 0.05, 0.2, 0.05, 0.04], 0.1), Some(4));
        assert_eq!(convergence_time(&[0.05, 0.5], 0.1), None);
    }

    #[test]
    fn aggregate_cases() {
        let s = aggregate(&[Some(7.0)]);
        assert_eq!((s.avg, s.std, s.max), (7.0, 0.0, 7.0));
        let s = aggregate(&[Some(1.0), Some(3.0), None]);
        assert_eq!((s.avg, s.std, s.max, s.not_converged), (2.0, 1.0, 3.0, 1));
        let s = aggregate(&[None]);
        assert!(s.avg.is_nan() && s.count == 0);
    }

    #[test]
    fn runs_first_averaging() {
        let per_run = vec![vec![Some(1.0), Some(4.0)], vec![Some(3.0), None]];
        assert_eq!(aggregate_runs_first(&per_run), vec![Some(2.0), None]);
    }

    #[test]
    fn curve_merge_matches_pooled_moments() {
        let mut a = Curve::new(2);
        let mut b = Curve::new(2);
        a.push(1, 1.0);
        a.push(2, 2.0);
        b.push(1, 3.0);
        a.merge(&b);
        assert_eq!(a.at(1).mean(), 2.0);
        assert_eq!(a.at(1).std(), 1.0);
        assert_eq!(a.at(2).count, 1);
    }
}
