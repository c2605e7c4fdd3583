//! Scenario configuration and its line-oriented file format.
//!
//! ```text
//! [scenario]
//! network = two_route.net.csv
//! steps = 2000
//! warmup = 500
//! seed = 42
//!
//! [kernel]
//! kind = natural-spacetime
//! cx = 2
//! ct = 3
//!
//! [demand]
//! 1,2,10,1.0,0,1999
//! ```
//!
//! Keys are `key = value`; `#` starts a comment line. Unknown sections and
//! keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::behavior::{OrderingMode, ReactionStrategy, SelectionModel};
use crate::kernels::{KernelError, KernelFamily, KernelSpec};
use crate::learning::{LearningConfig, DEFAULT_EXPIRE_EPSILON};
use crate::network::{load_network, Network, NetworkError, NodeId};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// One origin-destination demand stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandEntry {
    pub origin: NodeId,
    pub dest: NodeId,
    /// Expected departures per step.
    pub rate: f64,
    /// Share of departures that receive guidance.
    pub guided_fraction: f64,
    /// First departure step (inclusive).
    pub start: u64,
    /// Last departure step (inclusive).
    pub end: u64,
}

impl DemandEntry {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: String| Err(ScenarioError::Validation(m));
        if self.origin == self.dest {
            return fail(format!("demand {}->{}: origin equals dest", self.origin, self.dest));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return fail(format!("demand {}->{}: rate must be >= 0", self.origin, self.dest));
        }
        if !(0.0..=1.0).contains(&self.guided_fraction) {
            return fail(format!(
                "demand {}->{}: guided_fraction must lie in [0, 1]",
                self.origin, self.dest
            ));
        }
        if self.start > self.end {
            return fail(format!("demand {}->{}: start > end", self.origin, self.dest));
        }
        Ok(())
    }
}

/// Information emission cadence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionConfig {
    /// Steps between periodic emissions for each link.
    pub period: u64,
    /// Relative change in realized travel time that triggers an immediate
    /// emission.
    pub change_threshold: f64,
}

impl Default for EmissionConfig {
    fn default() -> Self {
        Self {
            period: 1,
            change_threshold: 0.2,
        }
    }
}

impl EmissionConfig {
    /// Period from an upgrading frequency in emissions per step.
    pub fn period_from_frequency(f: f64) -> Result<u64, ScenarioError> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(ScenarioError::Validation(format!(
                "emission frequency must be positive, got {f}"
            )));
        }
        Ok((1.0 / f).round().max(1.0) as u64)
    }
}

/// Window and threshold of the convergence criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConfig {
    pub window: u64,
    pub cv_threshold: f64,
    /// Trailing window, in steps, of the instantaneous ATT series.
    pub att_window: u64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            window: 50,
            cv_threshold: 0.05,
            att_window: 20,
        }
    }
}

/// Everything needed for one simulation run.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub network: Arc<Network>,
    pub demand: Vec<DemandEntry>,
    pub kernel: KernelSpec,
    pub selection: SelectionModel,
    /// Service quality feature of the selection context.
    pub x_serv: f64,
    /// Compliance feature of the selection context.
    pub x_user: f64,
    pub strategy: ReactionStrategy,
    pub mode: OrderingMode,
    pub emission: EmissionConfig,
    pub expire_epsilon: f64,
    /// Explicit maximum item age; derived from the kernel when absent.
    pub max_age: Option<u64>,
    pub steps: u64,
    pub warmup: u64,
    pub seed: u64,
    pub pretrip_only: bool,
    pub convergence: ConvergenceConfig,
}

impl ScenarioConfig {
    /// Defaults around a network: no demand, zero kernel, 1000 steps.
    pub fn new(network: Arc<Network>) -> Self {
        Self {
            network,
            demand: Vec::new(),
            kernel: KernelSpec::ZERO,
            selection: SelectionModel::default(),
            x_serv: 1.0,
            x_user: 1.0,
            strategy: ReactionStrategy::MinPerceivedCost,
            mode: OrderingMode::Descriptive,
            emission: EmissionConfig::default(),
            expire_epsilon: DEFAULT_EXPIRE_EPSILON,
            max_age: None,
            steps: 1000,
            warmup: 0,
            seed: 0,
            pretrip_only: false,
            convergence: ConvergenceConfig::default(),
        }
    }

    pub fn with_kernel(&self, kernel: KernelSpec) -> Self {
        Self {
            kernel,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn learning(&self) -> LearningConfig {
        let mut cfg = LearningConfig::for_kernel(&self.kernel);
        cfg.expire_epsilon = self.expire_epsilon;
        if let Some(max_age) = self.max_age {
            cfg.max_age = max_age;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.steps <= self.warmup {
            return Err(ScenarioError::Validation(format!(
                "`steps` ({}) must exceed `warmup` ({})",
                self.steps, self.warmup
            )));
        }
        self.kernel.validate()?;
        self.strategy.validate().map_err(ScenarioError::Validation)?;
        if self.emission.period == 0 {
            return Err(ScenarioError::Validation("`period` must be at least 1".into()));
        }
        if !(self.emission.change_threshold >= 0.0) {
            return Err(ScenarioError::Validation(
                "`change_threshold` must be >= 0".into(),
            ));
        }
        if !(self.expire_epsilon > 0.0 && self.expire_epsilon < 1.0) {
            return Err(ScenarioError::Validation(
                "`expire_epsilon` must lie in (0, 1)".into(),
            ));
        }
        if self.max_age == Some(0) {
            return Err(ScenarioError::Validation("`max_age` must be at least 1".into()));
        }
        for (name, v) in [("x_serv", self.x_serv), ("x_user", self.x_user)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ScenarioError::Validation(format!("`{name}` must lie in [0, 1]")));
            }
        }
        if self.convergence.window == 0 || self.convergence.att_window == 0 {
            return Err(ScenarioError::Validation(
                "`convergence_window` and `att_window` must be at least 1".into(),
            ));
        }
        for d in &self.demand {
            d.validate()?;
            for node in [d.origin, d.dest] {
                if self.network.node_ix(node).is_none() {
                    return Err(ScenarioError::Validation(format!(
                        "demand references unknown node {node}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Builds a kernel from `key = value` pairs using the `[kernel]` keys:
/// `kind`, the family's parameter names, and optional `v`.
pub fn kernel_from_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<KernelSpec, ScenarioError> {
    let mut kind = None;
    let mut velocity = None;
    let mut values = BTreeMap::new();
    for (key, value) in pairs {
        match key {
            "kind" => kind = Some(value.parse::<KernelFamily>()?),
            "v" => velocity = Some(parse_real("v", value)?),
            other => {
                values.insert(other.to_string(), parse_real(other, value)?);
            }
        }
    }
    let family = kind.ok_or_else(|| ScenarioError::Validation("kernel `kind` is required".into()))?;
    let names = family.param_names();
    if let Some(extra) = values.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(ScenarioError::UnknownKey {
            section: format!("kernel ({family})"),
            key: extra.clone(),
        });
    }
    let params: Vec<f64> = names
        .iter()
        .zip(family.default_params())
        .map(|(name, default)| values.get(*name).copied().unwrap_or(default))
        .collect();
    Ok(family.build(&params, velocity)?)
}

/// Renders a kernel as a `[kernel]` section.
pub fn kernel_section(k: &KernelSpec) -> String {
    let mut out = String::from("[kernel]\n");
    let family = k.family();
    let _ = writeln!(out, "kind = {family}");
    for (name, value) in family.param_names().iter().zip(k.params()) {
        let _ = writeln!(out, "{name} = {value}");
    }
    if let Some(v) = k.velocity {
        let _ = writeln!(out, "v = {v}");
    }
    out
}

fn parse_real(key: &str, value: &str) -> Result<f64, ScenarioError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ScenarioError::Validation(format!("`{key}`: bad number `{value}`")))
}

fn parse_int(key: &str, value: &str) -> Result<u64, ScenarioError> {
    value
        .parse::<u64>()
        .map_err(|_| ScenarioError::Validation(format!("`{key}`: bad integer `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ScenarioError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ScenarioError::Validation(format!("`{key}`: bad boolean `{value}`"))),
    }
}

/// Sections of a scenario file before interpretation.
#[derive(Debug, Default)]
pub struct RawScenario {
    pub scenario: Vec<(String, String, usize)>,
    pub kernel: Vec<(String, String, usize)>,
    pub selection: Vec<(String, String, usize)>,
    pub emission: Vec<(String, String, usize)>,
    pub demand: Vec<(String, usize)>,
}

impl RawScenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut raw = RawScenario::default();
        let mut section: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !["scenario", "kernel", "selection", "emission", "demand"].contains(&name) {
                    return Err(ScenarioError::Parse {
                        line: line_no,
                        message: format!("unknown section [{name}]"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let Some(current) = section.as_deref() else {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: "content before the first section".into(),
                });
            };
            if current == "demand" {
                raw.demand.push((line.to_string(), line_no));
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    message: "expected `key = value`".into(),
                });
            };
            let entry = (key.trim().to_string(), value.trim().to_string(), line_no);
            match current {
                "scenario" => raw.scenario.push(entry),
                "kernel" => raw.kernel.push(entry),
                "selection" => raw.selection.push(entry),
                "emission" => raw.emission.push(entry),
                _ => unreachable!(),
            }
        }
        Ok(raw)
    }
}

/// Parses a scenario file. The `network` key is resolved relative to
/// `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let raw = RawScenario::parse(text)?;
    let network_path = raw
        .scenario
        .iter()
        .find(|(k, _, _)| k == "network")
        .map(|(_, v, _)| base_dir.join(v))
        .ok_or_else(|| ScenarioError::Validation("[scenario] `network` is required".into()))?;
    let net_text = std::fs::read_to_string(&network_path).map_err(|source| ScenarioError::Io {
        path: network_path.clone(),
        source,
    })?;
    let network = Arc::new(load_network(&net_text)?);
    interpret(raw, network)
}

/// Parses a scenario file against an already loaded network; a `network`
/// key, if present, is ignored.
pub fn parse_scenario_with_network(
    text: &str,
    network: Arc<Network>,
) -> Result<ScenarioConfig, ScenarioError> {
    interpret(RawScenario::parse(text)?, network)
}

/// Reads and parses a scenario file from disk.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, base)
}

fn unknown(section: &str, key: &str) -> ScenarioError {
    ScenarioError::UnknownKey {
        section: section.into(),
        key: key.into(),
    }
}

fn interpret(raw: RawScenario, network: Arc<Network>) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::new(network);
    let mut strategy_name = String::from("min-perceived-cost");
    let mut gain = None;

    for (key, value, _) in &raw.scenario {
        let v = value.as_str();
        match key.as_str() {
            "network" => {}
            "steps" => cfg.steps = parse_int(key, v)?,
            "warmup" => cfg.warmup = parse_int(key, v)?,
            "seed" => cfg.seed = parse_int(key, v)?,
            "mode" => cfg.mode = v.parse().map_err(ScenarioError::Validation)?,
            "strategy" => strategy_name = v.to_string(),
            "gain" => gain = Some(parse_real(key, v)?),
            "pretrip_only" => cfg.pretrip_only = parse_bool(key, v)?,
            "expire_epsilon" => cfg.expire_epsilon = parse_real(key, v)?,
            "max_age" => cfg.max_age = Some(parse_int(key, v)?),
            "convergence_window" => cfg.convergence.window = parse_int(key, v)?,
            "convergence_cv" => cfg.convergence.cv_threshold = parse_real(key, v)?,
            "att_window" => cfg.convergence.att_window = parse_int(key, v)?,
            _ => return Err(unknown("scenario", key)),
        }
    }
    cfg.strategy = match (strategy_name.as_str(), gain) {
        ("min-perceived-cost", None) => ReactionStrategy::MinPerceivedCost,
        ("min-perceived-cost", Some(_)) => {
            return Err(ScenarioError::Validation(
                "`gain` only applies to strategy equilibrium-feedback".into(),
            ))
        }
        ("equilibrium-feedback", gain) => ReactionStrategy::EquilibriumFeedback {
            gain: gain.unwrap_or(0.5),
        },
        (other, _) => {
            return Err(ScenarioError::Validation(format!("unknown strategy `{other}`")))
        }
    };

    if !raw.kernel.is_empty() {
        cfg.kernel = kernel_from_pairs(raw.kernel.iter().map(|(k, v, _)| (k.as_str(), v.as_str())))?;
    }

    for (key, value, _) in &raw.selection {
        let v = parse_real(key, value)?;
        match key.as_str() {
            "bias" => cfg.selection.bias = v,
            "w_serv" => cfg.selection.w_serv = v,
            "w_tra" => cfg.selection.w_tra = v,
            "w_user" => cfg.selection.w_user = v,
            "x_serv" => cfg.x_serv = v,
            "x_user" => cfg.x_user = v,
            _ => return Err(unknown("selection", key)),
        }
    }

    let mut period = None;
    let mut frequency = None;
    for (key, value, _) in &raw.emission {
        match key.as_str() {
            "period" => period = Some(parse_int(key, value)?),
            "f" => frequency = Some(parse_real(key, value)?),
            "change_threshold" => cfg.emission.change_threshold = parse_real(key, value)?,
            _ => return Err(unknown("emission", key)),
        }
    }
    cfg.emission.period = match (period, frequency) {
        (Some(_), Some(_)) => {
            return Err(ScenarioError::Validation(
                "give either `period` or `f` in [emission], not both".into(),
            ))
        }
        (Some(p), None) => p,
        (None, Some(f)) => EmissionConfig::period_from_frequency(f)?,
        (None, None) => cfg.emission.period,
    };

    for (row, line) in &raw.demand {
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        let err = |message: String| ScenarioError::Parse {
            line: *line,
            message,
        };
        if fields.len() != 6 {
            return Err(err(format!(
                "demand rows are `origin,dest,rate,guided_fraction,start,end`, found {} fields",
                fields.len()
            )));
        }
        let int = |i: usize| fields[i].parse::<u64>().map_err(|_| err(format!("bad integer `{}`", fields[i])));
        let real = |i: usize| fields[i].parse::<f64>().map_err(|_| err(format!("bad number `{}`", fields[i])));
        let node = |i: usize| fields[i].parse::<u32>().map(NodeId).map_err(|_| err(format!("bad node id `{}`", fields[i])));
        cfg.demand.push(DemandEntry {
            origin: node(0)?,
            dest: node(1)?,
            rate: real(2)?,
            guided_fraction: real(3)?,
            start: int(4)?,
            end: int(5)?,
        });
    }

    cfg.validate()?;
    Ok(cfg)
}
