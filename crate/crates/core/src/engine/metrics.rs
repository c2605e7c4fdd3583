//! Per-step records of a run and the performance measures derived from them.

use crate::engine::scenario::ConvergenceConfig;
use crate::network::LinkId;

/// One row of the time series, recorded at the end of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub step: u64,
    /// Mean trip time of trips completed in the trailing ATT window.
    pub att_window: Option<f64>,
    /// Per OD: share of this step's route decisions at the OD's divergence
    /// node that took the free-flow route; `None` without decisions.
    pub route_split: Vec<Option<f64>>,
    /// Per OD: number of route decisions behind `route_split`.
    pub split_decisions: Vec<u32>,
    /// Vehicles on each link.
    pub volumes: Vec<u32>,
    pub active_items: usize,
    pub spawned: u32,
    pub completed: u32,
    pub completed_time_sum: u64,
    pub failed: u32,
    pub in_flight: usize,
    /// Reaction routes computed during this step.
    pub routes_computed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// `<origin>_<dest>` per OD pair.
    pub od_labels: Vec<String>,
    pub link_ids: Vec<LinkId>,
    pub rows: Vec<StepRow>,
    pub convergence: ConvergenceConfig,
    /// Non-fatal problems found while setting up the run.
    pub warnings: Vec<String>,
}

impl TimeSeries {
    pub fn new(od_labels: Vec<String>, link_ids: Vec<LinkId>, convergence: ConvergenceConfig) -> Self {
        Self {
            od_labels,
            link_ids,
            rows: Vec::new(),
            convergence,
            warnings: Vec::new(),
        }
    }

    /// Route split per step for one OD, carrying the last observed value
    /// through steps without decisions.
    pub fn split_series(&self, od: usize) -> Vec<Option<f64>> {
        let mut last = None;
        self.rows
            .iter()
            .map(|r| {
                if let Some(v) = r.route_split[od] {
                    last = Some(v);
                }
                last
            })
            .collect()
    }
}

/// Performance of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Mean travel time of trips completed after warmup; `None` if none.
    pub att: Option<f64>,
    pub convergence_time: Option<u64>,
    /// Sign changes of the route-split increments per 100 steps.
    pub oscillation_index: f64,
    pub completed: u64,
    pub failed: u64,
    pub routes_computed: u64,
}

/// Reduces a time series to [`Metrics`].
///
/// Trip counts cover the whole run; ATT, convergence and oscillation use the
/// steps from `warmup` on. Convergence is the first step `s >= warmup` at
/// which the windowed ATT over `[s, s + W]` has a coefficient of variation
/// below the threshold. The oscillation index is measured on the OD with the
/// most route decisions after warmup.
pub fn compute_metrics(ts: &TimeSeries, warmup: u64) -> Metrics {
    let post: Vec<&StepRow> = ts.rows.iter().filter(|r| r.step >= warmup).collect();
    let (count, sum) = post
        .iter()
        .fold((0u64, 0u64), |(c, s), r| (c + r.completed as u64, s + r.completed_time_sum));
    let att = (count > 0).then(|| sum as f64 / count as f64);

    Metrics {
        att,
        convergence_time: convergence_time(ts, warmup),
        oscillation_index: oscillation_index(ts, warmup),
        completed: ts.rows.iter().map(|r| r.completed as u64).sum(),
        failed: ts.rows.iter().map(|r| r.failed as u64).sum(),
        routes_computed: ts.rows.iter().map(|r| r.routes_computed).sum(),
    }
}

fn convergence_time(ts: &TimeSeries, warmup: u64) -> Option<u64> {
    let w = ts.convergence.window as usize;
    let start = ts.rows.iter().position(|r| r.step >= warmup)?;
    let series: Vec<Option<f64>> = ts.rows[start..].iter().map(|r| r.att_window).collect();
    (0..series.len())
        .take_while(|i| i + w < series.len())
        .find(|&i| {
            let window: Option<Vec<f64>> = series[i..=i + w].iter().copied().collect();
            window.is_some_and(|v| coefficient_of_variation(&v) < ts.convergence.cv_threshold)
        })
        .map(|i| ts.rows[start + i].step)
}

fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return f64::INFINITY;
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Index of the OD with the most route decisions from `warmup` on.
pub fn dominant_od(ts: &TimeSeries, warmup: u64) -> Option<usize> {
    (0..ts.od_labels.len())
        .map(|od| {
            let n: u64 = ts
                .rows
                .iter()
                .filter(|r| r.step >= warmup)
                .map(|r| r.split_decisions[od] as u64)
                .sum();
            (od, n)
        })
        .filter(|&(_, n)| n > 0)
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(od, _)| od)
}

fn oscillation_index(ts: &TimeSeries, warmup: u64) -> f64 {
    let Some(od) = dominant_od(ts, warmup) else {
        return 0.0;
    };
    let split = ts.split_series(od);
    let start = ts.rows.iter().position(|r| r.step >= warmup).unwrap_or(ts.rows.len());
    let steps = ts.rows.len() - start;
    if steps == 0 {
        return 0.0;
    }
    flips(&split, start) as f64 / steps as f64 * 100.0
}

/// Counts sign changes between successive non-zero increments of `series`,
/// taking increments from position `start` on (the first one relative to
/// `start - 1`).
pub fn flips(series: &[Option<f64>], start: usize) -> usize {
    let mut count = 0;
    let mut last_sign = 0.0;
    for i in start.max(1)..series.len() {
        let (Some(prev), Some(cur)) = (series[i - 1], series[i]) else {
            continue;
        };
        let d = cur - prev;
        if d == 0.0 {
            continue;
        }
        let sign = d.signum();
        if last_sign != 0.0 && sign != last_sign {
            count += 1;
        }
        last_sign = sign;
    }
    count
}
