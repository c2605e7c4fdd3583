//! Derivative-free kernel optimization: a low-discrepancy grid over the
//! parameter box followed by bounded Nelder-Mead from the best grid point.

use rayon::prelude::*;

use super::{evaluate, ExperimentError};
use crate::engine::ScenarioConfig;
use crate::kernels::{finiteness, KernelFamily};

/// Kernels with divergent total influence score `(1 + PENALTY_FACTOR) * att`.
pub const PENALTY_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Default)]
pub struct OptimizeOptions {
    /// Number of grid points; `ceil(budget / 2)` when absent.
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub family: KernelFamily,
    pub best_params: Vec<f64>,
    pub best_eta: f64,
    pub evaluations: usize,
    /// Every evaluated parameter vector with its objective, in order.
    pub trace: Vec<(Vec<f64>, f64)>,
}

/// Element `index` of the Halton sequence in `dims` dimensions, using the
/// first primes as bases.
pub fn halton(index: usize, dims: usize) -> Vec<f64> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    assert!(dims <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    PRIMES[..dims]
        .iter()
        .map(|&base| {
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Minimizes `f` inside the box `[lo, hi]` starting from `x0`, using at most
/// `max_evals` evaluations. Trial points are clamped into the box. Returns
/// the best point and value seen, counting `f(x0)` as given by `f0`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    f0: f64,
    lo: &[f64],
    hi: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let clamp = |x: Vec<f64>| -> Vec<f64> { x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect() };
    let mut evals = 0;
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for d in 0..n {
        if evals >= max_evals {
            break;
        }
        let step = 0.1 * (hi[d] - lo[d]);
        let mut x = x0.to_vec();
        // Step towards the interior when the start sits near the upper bound.
        x[d] = if x[d] + step <= hi[d] { x[d] + step } else { x[d] - step };
        let x = clamp(x);
        let v = f(&x);
        evals += 1;
        simplex.push((x, v));
    }
    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);

    while simplex.len() == n + 1 && n > 0 && evals < max_evals {
        simplex.sort_by(by_value);
        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| clamp((0..n).map(|d| centroid[d] + t * (worst.0[d] - centroid[d])).collect());

        let reflected = along(-1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < simplex[0].1 {
            if evals < max_evals {
                let expanded = along(-2.0);
                let fe = f(&expanded);
                evals += 1;
                simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            } else {
                simplex[n] = (reflected, fr);
            }
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        if evals >= max_evals {
            if fr < worst.1 {
                simplex[n] = (reflected, fr);
            }
            break;
        }
        let (t, bound) = if fr < worst.1 { (-0.5, fr) } else { (0.5, worst.1) };
        let contracted = along(t);
        let fc = f(&contracted);
        evals += 1;
        if fc < bound {
            simplex[n] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            if evals >= max_evals {
                break;
            }
            let x = clamp(best.iter().zip(&entry.0).map(|(b, x)| b + 0.5 * (x - b)).collect());
            let v = f(&x);
            evals += 1;
            *entry = (x, v);
        }
    }
    simplex
        .into_iter()
        .min_by(by_value)
        .unwrap_or((x0.to_vec(), f0))
}

/// Searches the parameter box of `family` for the kernel with the lowest
/// mean ATT over `seeds`.
///
/// `bounds` gives `(lo, hi)` per parameter in [`KernelFamily::param_names`]
/// order; a parameter with `lo == hi` is held fixed. A coarse Halton grid
/// is evaluated in parallel, then Nelder-Mead refines the best grid point
/// with the remaining budget. Runs that fail or complete no trips score
/// infinity.
pub fn optimize(
    base: &ScenarioConfig,
    family: KernelFamily,
    bounds: &[(f64, f64)],
    budget: usize,
    seeds: &[u64],
    opts: &OptimizeOptions,
) -> Result<OptimizationResult, ExperimentError> {
    if budget < 10 {
        return Err(ExperimentError::Precondition(format!("budget must be at least 10, got {budget}")));
    }
    if seeds.is_empty() {
        return Err(ExperimentError::Precondition("at least one seed is required".into()));
    }
    let names = family.param_names();
    if bounds.len() != names.len() {
        return Err(ExperimentError::Precondition(format!(
            "{family} takes {} bounds ({}), got {}",
            names.len(),
            names.join(", "),
            bounds.len()
        )));
    }
    for (name, &(lo, hi)) in names.iter().zip(bounds) {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ExperimentError::Precondition(format!("invalid bounds for `{name}`: [{lo}, {hi}]")));
        }
    }
    let velocity = base.kernel.velocity;
    let lows: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    for corner in [lows.clone(), bounds.iter().map(|b| b.1).collect()] {
        family.build(&corner, velocity)?;
    }

    let free: Vec<usize> = (0..bounds.len()).filter(|&d| bounds[d].0 < bounds[d].1).collect();
    let expand = |u: &[f64]| -> Vec<f64> {
        let mut p = lows.clone();
        for (&d, &v) in free.iter().zip(u) {
            p[d] = v;
        }
        p
    };
    let objective = |params: &[f64]| -> f64 {
        let Ok(k) = family.build(params, velocity) else {
            return f64::INFINITY;
        };
        match evaluate(base, &k, seeds) {
            Ok(s) if s.mean_att.is_finite() => {
                if finiteness(&k).is_finite() {
                    s.mean_att
                } else {
                    s.mean_att * (1.0 + PENALTY_FACTOR)
                }
            }
            _ => f64::INFINITY,
        }
    };

    let n_grid = if free.is_empty() {
        1
    } else {
        opts.grid_points.unwrap_or(budget.div_ceil(2)).clamp(1, budget)
    };
    let grid: Vec<Vec<f64>> = (0..n_grid)
        .map(|i| {
            let u = halton(i + 1, free.len());
            expand(&free.iter().zip(&u).map(|(&d, &h)| bounds[d].0 + h * (bounds[d].1 - bounds[d].0)).collect::<Vec<_>>())
        })
        .collect();
    let mut trace: Vec<(Vec<f64>, f64)> = grid.par_iter().map(|p| (p.clone(), objective(p))).collect();

    let remaining = budget - trace.len();
    if !free.is_empty() && remaining > 0 {
        let (start, f0) = trace
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, v)| (free.iter().map(|&d| p[d]).collect::<Vec<f64>>(), *v))
            .expect("grid is nonempty");
        let lo: Vec<f64> = free.iter().map(|&d| bounds[d].0).collect();
        let hi: Vec<f64> = free.iter().map(|&d| bounds[d].1).collect();
        let mut refine = Vec::new();
        nelder_mead(
            |u| {
                let p = expand(u);
                let v = objective(&p);
                refine.push((p, v));
                v
            },
            &start,
            f0,
            &lo,
            &hi,
            remaining,
        );
        trace.extend(refine);
    }

    let (best_params, best_eta) = trace
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("trace is nonempty");
    Ok(OptimizationResult {
        family,
        best_params,
        best_eta,
        evaluations: trace.len(),
        trace,
    })
}
