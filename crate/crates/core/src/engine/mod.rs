//! Simulation engine: scenario configuration, the step loop, metrics and
//! CSV outputs.

pub mod metrics;
pub mod output;
pub mod scenario;
pub mod sim;

pub use metrics::{compute_metrics, Metrics, StepRow, TimeSeries};
pub use scenario::{
    kernel_from_pairs, kernel_section, load_scenario, parse_scenario, parse_scenario_with_network,
    ConvergenceConfig, DemandEntry, EmissionConfig, ScenarioConfig, ScenarioError,
};
pub use sim::{run, simulate, EngineError};
