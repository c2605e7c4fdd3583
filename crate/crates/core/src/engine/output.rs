//! CSV renderings of run outputs. Reals use six decimals; undefined reals
//! are written as `nan` and an unreached convergence as `none`.

use std::fmt::Write as _;

use crate::engine::metrics::{Metrics, TimeSeries};

pub const METRICS_HEADER: &str = "att,convergence_time,oscillation_index,completed,failed,routes_computed";

/// Formats a real with six decimals.
pub fn real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

fn opt_real(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), real)
}

/// `metrics.csv`: header plus one row.
pub fn metrics_csv(m: &Metrics) -> String {
    format!(
        "{METRICS_HEADER}\n{},{},{},{},{},{}\n",
        opt_real(m.att),
        m.convergence_time.map_or_else(|| "none".into(), |s| s.to_string()),
        real(m.oscillation_index),
        m.completed,
        m.failed,
        m.routes_computed
    )
}

/// `timeseries.csv`: `step,att_window,route_split_<od>...,vol_<link>...,active_items`.
pub fn timeseries_csv(ts: &TimeSeries) -> String {
    let mut out = String::from("step,att_window");
    for label in &ts.od_labels {
        let _ = write!(out, ",route_split_{label}");
    }
    for id in &ts.link_ids {
        let _ = write!(out, ",vol_{id}");
    }
    out.push_str(",active_items\n");
    for row in &ts.rows {
        let _ = write!(out, "{},{}", row.step, opt_real(row.att_window));
        for s in &row.route_split {
            let _ = write!(out, ",{}", opt_real(*s));
        }
        for v in &row.volumes {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", row.active_items);
    }
    out
}
