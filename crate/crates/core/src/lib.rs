//! Agent-based route guidance simulation with distributive cost learning.
//!
//! Travelers keep their own perceived link costs and update them from
//! pieces of traffic information whose weight decays over road distance and
//! time according to a propagation kernel. The crate provides the network
//! model, the kernel catalogue and its analysis tools, the learning rule,
//! traveler behavior, the simulation loop and an experiment harness for
//! comparing and tuning kernels.

pub mod behavior;
pub mod engine;
pub mod experiments;
pub mod kernels;
pub mod learning;
pub mod network;

pub use behavior::{OrderingMode, ReactionStrategy, SelectionContext, SelectionModel};
pub use engine::{run, Metrics, ScenarioConfig, TimeSeries};
pub use experiments::{EquivalenceReport, ExperimentError, OptimizationResult, SweepRow};
pub use kernels::{Domain2D, KernelFamily, KernelSpec, Principle1, PrincipleReport};
pub use learning::{InfoItem, LearningConfig, PerceivedCosts};
pub use network::{LinkId, Network, NodeId};
