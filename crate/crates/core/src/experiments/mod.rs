//! Experiment harnesses over the simulation: integral matching, paired
//! kernel comparisons, parameter sweeps and kernel optimization.
//!
//! Runs for different seeds or grid points share nothing and are evaluated
//! on the rayon pool; results are reduced in input order, so every
//! function here is deterministic regardless of thread count.

mod optimize;
mod output;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{run, EngineError, ScenarioConfig};
use crate::kernels::{finiteness, phase_distance, total_influence, Domain2D, KernelError, KernelFamily, KernelSpec};

pub use optimize::{halton, nelder_mead, optimize, OptimizationResult, OptimizeOptions, PENALTY_FACTOR};
pub use output::{equivalence_csv, optimize_csv, sweep_csv, EQUIVALENCE_HEADER};

/// Relative tolerance reached by [`match_integral`].
pub const MATCH_TOLERANCE: f64 = 0.005;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(
        "target influence {target} is unreachable: `{param}` in [{lo}, {hi}] gives influence in [{min_influence}, {max_influence}]"
    )]
    Unreachable {
        param: &'static str,
        lo: f64,
        hi: f64,
        min_influence: f64,
        max_influence: f64,
        target: f64,
    },
    #[error("{0}")]
    Precondition(String),
}

/// How a free parameter is searched: its bracket, whether the influence
/// grows with it, and whether bisection runs on a log scale.
struct Axis {
    lo: f64,
    hi: f64,
    increasing: bool,
    log: bool,
}

fn axis(name: &str, dom: &Domain2D) -> Axis {
    let extent = dom.x_max.max(dom.t_max);
    match name {
        "dt" => Axis {
            lo: dom.dt_grid * 1e-3,
            hi: dom.t_max,
            increasing: true,
            log: false,
        },
        "x_radius" => Axis {
            lo: dom.dx * 1e-3,
            hi: dom.x_max,
            increasing: true,
            log: false,
        },
        "cx" | "ct" => Axis {
            lo: extent * 1e-6,
            hi: extent * 1e6,
            increasing: true,
            log: true,
        },
        // Bases: the influence falls as the base grows.
        _ => Axis {
            lo: 1.0 + 1e-9,
            hi: 1e12,
            increasing: false,
            log: true,
        },
    }
}

/// Completes a kernel of `family` so that its total influence on `dom`
/// matches `target` within [`MATCH_TOLERANCE`].
///
/// `fixed` holds one entry per parameter of the family, in
/// [`KernelFamily::param_names`] order; exactly one must be `None`, and that
/// parameter is found by bisection.
pub fn match_integral(
    family: KernelFamily,
    fixed: &[Option<f64>],
    target: f64,
    dom: &Domain2D,
) -> Result<KernelSpec, ExperimentError> {
    dom.validate()?;
    if !(target > 0.0 && target.is_finite()) {
        return Err(ExperimentError::Precondition(format!(
            "target influence must be positive, got {target}"
        )));
    }
    let names = family.param_names();
    if fixed.len() != names.len() {
        return Err(ExperimentError::Precondition(format!(
            "{family} takes {} parameters, got {}",
            names.len(),
            fixed.len()
        )));
    }
    let free: Vec<usize> = (0..fixed.len()).filter(|&i| fixed[i].is_none()).collect();
    let [free] = free[..] else {
        return Err(ExperimentError::Precondition(format!(
            "exactly one free parameter required, {} given",
            free.len()
        )));
    };
    let name = names[free];
    let ax = axis(name, dom);

    let build = |value: f64| -> Result<KernelSpec, KernelError> {
        let params: Vec<f64> = fixed.iter().map(|p| p.unwrap_or(value)).collect();
        family.build(&params, None)
    };
    let influence = |value: f64| -> Result<f64, KernelError> { Ok(total_influence(&build(value)?, dom)) };
    let (to_u, from_u): (fn(f64) -> f64, fn(f64) -> f64) = if ax.log {
        (f64::ln, f64::exp)
    } else {
        (|v| v, |u| u)
    };

    let (i_lo, i_hi) = (influence(ax.lo)?, influence(ax.hi)?);
    let (min_influence, max_influence) = (i_lo.min(i_hi), i_lo.max(i_hi));
    let close = |i: f64| (i - target).abs() / target < MATCH_TOLERANCE;
    let unreachable = || ExperimentError::Unreachable {
        param: name,
        lo: ax.lo,
        hi: ax.hi,
        min_influence,
        max_influence,
        target,
    };
    if !close(min_influence) && target < min_influence || !close(max_influence) && target > max_influence {
        return Err(unreachable());
    }

    let (mut a, mut b) = (to_u(ax.lo), to_u(ax.hi));
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let value = from_u(mid);
        let i = influence(value)?;
        if close(i) {
            return Ok(build(value)?);
        }
        if (i < target) == ax.increasing {
            a = mid;
        } else {
            b = mid;
        }
    }
    for value in [ax.lo, ax.hi] {
        if close(influence(value)?) {
            return Ok(build(value)?);
        }
    }
    Err(unreachable())
}

/// Mean and population standard deviation of ATT, and mean oscillation,
/// over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedSummary {
    pub mean_att: f64,
    pub std_att: f64,
    pub mean_oscillation: f64,
}

/// Runs `cfg` under `kernel` once per seed. A run without completed trips
/// contributes NaN to the ATT statistics.
pub fn evaluate(cfg: &ScenarioConfig, kernel: &KernelSpec, seeds: &[u64]) -> Result<SeedSummary, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::Precondition("at least one seed is required".into()));
    }
    let base = cfg.with_kernel(*kernel);
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&seed| run(&base.with_seed(seed)).map(|(m, _)| m))
        .collect::<Result<_, _>>()?;
    let n = results.len() as f64;
    let atts: Vec<f64> = results.iter().map(|m| m.att.unwrap_or(f64::NAN)).collect();
    let mean_att = atts.iter().sum::<f64>() / n;
    let std_att = (atts.iter().map(|a| (a - mean_att).powi(2)).sum::<f64>() / n).sqrt();
    let mean_oscillation = results.iter().map(|m| m.oscillation_index).sum::<f64>() / n;
    Ok(SeedSummary {
        mean_att,
        std_att,
        mean_oscillation,
    })
}

/// Paired comparison of two kernels on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub integral_1: f64,
    pub integral_2: f64,
    /// `|I1 - I2| / max(I1, I2)`.
    pub integral_rel_diff: f64,
    pub eta_1: f64,
    pub eta_2: f64,
    /// `(eta_1 - eta_2) / max(|eta_1|, |eta_2|)`; antisymmetric in the kernels.
    pub eta_rel_diff: f64,
    pub phase_distance: f64,
    pub seeds_used: usize,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if a == b {
        0.0
    } else {
        (a - b) / scale
    }
}

/// Runs `base` under `k1` and `k2` for every seed and reports mean ATTs,
/// their relative difference, the integrals on `dom` and the phase
/// distance. Kernels with divergent influence are rejected unless
/// `allow_divergent` is set.
pub fn equivalence_trial(
    base: &ScenarioConfig,
    k1: &KernelSpec,
    k2: &KernelSpec,
    seeds: &[u64],
    dom: &Domain2D,
    allow_divergent: bool,
) -> Result<EquivalenceReport, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::Precondition("at least one seed is required".into()));
    }
    dom.validate()?;
    if !allow_divergent {
        for k in [k1, k2] {
            let class = finiteness(k);
            if !class.is_finite() {
                return Err(ExperimentError::Precondition(format!(
                    "kernel {k} has {class} total influence; allow divergent kernels to compare it"
                )));
            }
        }
    }
    let (integral_1, integral_2) = (total_influence(k1, dom), total_influence(k2, dom));
    let (s1, s2) = rayon::join(|| evaluate(base, k1, seeds), || evaluate(base, k2, seeds));
    let (eta_1, eta_2) = (s1?.mean_att, s2?.mean_att);
    Ok(EquivalenceReport {
        integral_1,
        integral_2,
        integral_rel_diff: rel_diff(integral_1, integral_2).abs(),
        eta_1,
        eta_2,
        eta_rel_diff: rel_diff(eta_1, eta_2),
        phase_distance: phase_distance(k1, k2, dom),
        seeds_used: seeds.len(),
    })
}

/// One evaluated grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: Vec<f64>,
    pub mean_att: f64,
    pub std_att: f64,
    pub mean_oscillation: f64,
    /// Why the point could not be evaluated; statistics are NaN then.
    pub error: Option<String>,
}

/// Cartesian product of per-parameter value lists. Parameters of `family`
/// without an axis keep their default value.
pub fn cartesian_grid(family: KernelFamily, axes: &[(String, Vec<f64>)]) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let names = family.param_names();
    let mut grid = vec![family.default_params()];
    for (name, values) in axes {
        let Some(ix) = names.iter().position(|n| n == name) else {
            return Err(ExperimentError::Precondition(format!(
                "{family} has no parameter `{name}` (expected one of: {})",
                names.join(", ")
            )));
        };
        if values.is_empty() {
            return Err(ExperimentError::Precondition(format!("no values for `{name}`")));
        }
        grid = grid
            .iter()
            .flat_map(|point| {
                values.iter().map(move |&v| {
                    let mut p = point.clone();
                    p[ix] = v;
                    p
                })
            })
            .collect();
    }
    Ok(grid)
}

/// Evaluates every grid point over `seeds` and returns the rows sorted by
/// mean ATT, failed points last. Ties keep grid order.
pub fn sweep(
    base: &ScenarioConfig,
    family: KernelFamily,
    grid: &[Vec<f64>],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, ExperimentError> {
    if grid.is_empty() {
        return Err(ExperimentError::Precondition("the sweep grid is empty".into()));
    }
    if seeds.is_empty() {
        return Err(ExperimentError::Precondition("at least one seed is required".into()));
    }
    let velocity = base.kernel.velocity;
    let mut rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|params| {
            let outcome = family
                .build(params, velocity)
                .map_err(ExperimentError::from)
                .and_then(|k| evaluate(base, &k, seeds));
            match outcome {
                Ok(s) => SweepRow {
                    params: params.clone(),
                    mean_att: s.mean_att,
                    std_att: s.std_att,
                    mean_oscillation: s.mean_oscillation,
                    error: None,
                },
                Err(e) => SweepRow {
                    params: params.clone(),
                    mean_att: f64::NAN,
                    std_att: f64::NAN,
                    mean_oscillation: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.mean_att.is_nan(), b.mean_att.is_nan()) {
        (false, false) => a.mean_att.total_cmp(&b.mean_att),
        (nan_a, nan_b) => nan_a.cmp(&nan_b),
    });
    Ok(rows)
}
