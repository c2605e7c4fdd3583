//! CSV renderings of experiment results.

use std::fmt::Write as _;

use super::{EquivalenceReport, OptimizationResult, SweepRow};
use crate::engine::output::real;
use crate::kernels::KernelSpec;

pub const EQUIVALENCE_HEADER: &str =
    "kernel_1,kernel_2,integral_1,integral_2,integral_rel_diff,eta_1,eta_2,eta_rel_diff,phase_distance,seeds_used";

fn param_header(k: usize) -> String {
    (1..=k).map(|i| format!("param_{i},")).collect()
}

fn params(p: &[f64]) -> String {
    p.iter().map(|v| real(*v) + ",").collect()
}

/// `sweep.csv`: `param_1..param_k,mean_att,std_att,mean_oscillation`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let k = rows.first().map_or(0, |r| r.params.len());
    let mut out = format!("{}mean_att,std_att,mean_oscillation\n", param_header(k));
    for r in rows {
        let _ = writeln!(
            out,
            "{}{},{},{}",
            params(&r.params),
            real(r.mean_att),
            real(r.std_att),
            real(r.mean_oscillation)
        );
    }
    out
}

/// `optimize.csv`: one trace row per evaluation, `eval,param_1..param_k,eta`.
pub fn optimize_csv(result: &OptimizationResult) -> String {
    let k = result.family.param_names().len();
    let mut out = format!("eval,{}eta\n", param_header(k));
    for (i, (p, eta)) in result.trace.iter().enumerate() {
        let _ = writeln!(out, "{},{}{}", i + 1, params(p), real(*eta));
    }
    out
}

/// `equivalence.csv`: header plus one row, kernels in their display form.
pub fn equivalence_csv(k1: &KernelSpec, k2: &KernelSpec, r: &EquivalenceReport) -> String {
    format!(
        "{EQUIVALENCE_HEADER}\n{k1},{k2},{},{},{},{},{},{},{},{}\n",
        real(r.integral_1),
        real(r.integral_2),
        real(r.integral_rel_diff),
        real(r.eta_1),
        real(r.eta_2),
        real(r.eta_rel_diff),
        real(r.phase_distance),
        r.seeds_used
    )
}
