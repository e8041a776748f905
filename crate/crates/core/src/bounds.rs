//! Time-uniform confidence radius for sub-Gaussian means (Laplace method)
//! and its integer inversion.
//!
//! For `n >= 1` samples of a `sigma`-sub-Gaussian variable the radius is
//!
//! ```text
//! beta(n) = sigma * sqrt( 2/n * (1 + 1/n) * ln( sqrt(n + 1) / gamma ) ),   gamma = delta / (8 A)
//! ```
//!
//! and `beta(0) = +inf`. The inversion `inverse_radius_ceil(x)` is the smallest
//! `n` with `beta(n) < x`.

use crate::error::{Error, Result};

/// Largest sample count the inversion will search before giving up.
pub const DEFAULT_INVERSION_CEILING: u64 = 1 << 40;

/// Anything that can report the confidence radius for a sample count.
pub trait Radius {
    fn radius(&self, n: u64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConfig {
    delta: f64,
    num_agents: usize,
    sigma: f64,
}

impl BoundConfig {
    pub fn new(delta: f64, num_agents: usize, sigma: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidBoundConfig(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if num_agents == 0 {
            return Err(Error::InvalidBoundConfig(
                "number of agents must be at least 1".into(),
            ));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidBoundConfig(format!(
                "sigma must be finite and non-negative, got {sigma}"
            )));
        }
        Ok(Self {
            delta,
            num_agents,
            sigma,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Per-interval risk `delta / (8 A)`.
    pub fn gamma(&self) -> f64 {
        self.delta / (8.0 * self.num_agents as f64)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.delta, self.num_agents, sigma)
    }
}

impl Radius for BoundConfig {
    fn radius(&self, n: u64) -> f64 {
        confidence_radius(self, n)
    }
}

pub fn confidence_radius(cfg: &BoundConfig, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let n = n as f64;
    let inv = 1.0 / n;
    let log_term = 0.5 * (n + 1.0).ln() - cfg.gamma().ln();
    cfg.sigma * (2.0 * inv * (1.0 + inv) * log_term).sqrt()
}

/// Smallest `n >= 1` with `confidence_radius(cfg, n) < x`.
pub fn inverse_radius_ceil(cfg: &BoundConfig, x: f64) -> Result<u64> {
    inverse_radius_ceil_with_ceiling(cfg, x, DEFAULT_INVERSION_CEILING)
}

/// Exponential bracketing followed by bisection. Both bracket ends are
/// evaluated, so the result always satisfies `beta(n) < x <= beta(n - 1)`.
pub fn inverse_radius_ceil_with_ceiling(cfg: &BoundConfig, x: f64, ceiling: u64) -> Result<u64> {
    if !(x > 0.0) || !(cfg.sigma > 0.0) {
        return Err(Error::InvalidInversion {
            x,
            sigma: cfg.sigma,
        });
    }
    let beta = |n| confidence_radius(cfg, n);

    // beta(lo) >= x always holds (beta(0) = inf); beta(hi) < x once found.
    let mut lo = 0u64;
    let mut hi = 1u64;
    while beta(hi) >= x {
        if hi >= ceiling {
            return Err(Error::InversionOverflow { x, ceiling });
        }
        lo = hi;
        hi = hi.saturating_mul(2).min(ceiling);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if beta(mid) < x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Radii for `0..=max_n`, precomputed for the simulation hot loop.
#[derive(Debug, Clone)]
pub struct RadiusTable {
    values: Vec<f64>,
    cfg: BoundConfig,
}

impl RadiusTable {
    pub fn new(cfg: BoundConfig, max_n: u64) -> Self {
        let values = (0..=max_n).map(|n| confidence_radius(&cfg, n)).collect();
        Self { values, cfg }
    }

    pub fn config(&self) -> &BoundConfig {
        &self.cfg
    }
}

impl Radius for RadiusTable {
    fn radius(&self, n: u64) -> f64 {
        match self.values.get(n as usize) {
            Some(&r) => r,
            None => confidence_radius(&self.cfg, n),
        }
    }
}
