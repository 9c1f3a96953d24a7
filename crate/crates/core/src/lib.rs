//! Byzantine-resilient distributed optimization over directed networks.
//!
//! Regular agents run a synchronous two-state protocol: a solution estimate
//! `x` filtered by distance to an auxiliary point `y` (and optionally by a
//! coordinate-wise min-max filter) followed by a subgradient step, and the
//! auxiliary point itself updated by coordinate-wise resilient consensus.
//! Byzantine agents may send arbitrary, per-receiver values.
//!
//! Modules:
//! - [`graph`]: directed topologies, `r`-robustness, robust-graph generation, adversary placement.
//! - [`objectives`]: convex local cost oracles and sublevel-set geometry.
//! - [`filters`]: distance and min-max filters, weighted averages, weight policies.
//! - [`protocol`]: the synchronous round engine.
//! - [`adversary`]: Byzantine strategies, including filter-aware safe-region attacks.
//! - [`analysis`]: convergence-radius certificates and trajectory-level checks.
//! - [`harness`]: configuration, experiment presets, metrics output.

pub mod adversary;
pub mod analysis;
pub mod filters;
pub mod graph;
pub mod harness;
pub mod objectives;
pub mod protocol;
pub mod vecops;

mod seeding;

/// Index of an agent in `0..n`.
pub type AgentId = usize;

pub use adversary::AdversaryStrategy;
pub use analysis::ConvergenceCertificate;
pub use filters::{LabeledVector, WeightAssignment, WeightPolicy};
pub use graph::{AdversarySet, Topology};
pub use objectives::{Objective, QuadraticObjective, LogisticObjective};
pub use protocol::{Algorithm, AgentState, SimulationConfig, StepSize};
