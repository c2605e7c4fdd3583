//! Shared fixtures for the benchmarks in `benches/`.

use std::path::PathBuf;

use guidance_core::engine::load_scenario;
use guidance_core::ScenarioConfig;

/// The two-corridor scenario shipped under `scenarios/`, shortened to
/// `steps` steps.
pub fn two_route(steps: u64) -> ScenarioConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", "two_route.cfg"]
        .iter()
        .collect();
    let mut cfg = load_scenario(&path).expect("bundled scenario loads");
    cfg.steps = steps;
    cfg.warmup = steps / 4;
    cfg
}
