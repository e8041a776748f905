//! Collaborative online personalized mean estimation.
//!
//! Agents receive noisy samples in synchronized rounds, query each other's
//! running averages, keep an optimistic guess of which peers share their mean
//! and aggregate those peers' statistics to sharpen their own estimate.
//!
//! * [`bounds`]: confidence radius and its inversion
//! * [`model`]: instances, memories, optimistic classes
//! * [`strategies`]: query selection and weighting schemes
//! * [`engine`]: the round-based simulator
//! * [`theory`]: closed-form sample and time complexities
//! * [`metrics`]: precision, error, convergence time, aggregation
//! * [`cli`]: manifests and the experiment runner behind the `colme` binary

pub mod bounds;
pub mod cli;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod strategies;
pub mod theory;

pub use bounds::{confidence_radius, inverse_radius_ceil, BoundConfig, Radius, RadiusTable};
pub use engine::{run_experiment, Algorithm, Experiment, RunTrace, SimulationConfig, Simulation};
pub use error::{Error, Result};
pub use model::{AgentMemory, AgentSet, ProblemInstance, TrueClass};
pub use strategies::{QueryStrategy, WeightScheme};
pub use theory::TheoryReport;
