//! The discrete-time simulation loop.

use thiserror::Error;

use crate::behavior::{choose_route, Agent, Position, SelectionContext};
use crate::engine::metrics::{compute_metrics, Metrics, StepRow, TimeSeries};
use crate::engine::scenario::{ScenarioConfig, ScenarioError};
use crate::learning::{step_learning, InfoItem, WeightCache};
use crate::network::{link_travel_time, shortest_path, Network};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
}

/// Static description of one OD pair.
#[derive(Debug, Clone)]
struct OdPair {
    origin: usize,
    dest: usize,
    free_flow_route: Vec<usize>,
    /// First node on the free-flow route with a choice of outgoing links;
    /// route splits are measured there.
    divergence_node: usize,
    /// Link the free-flow route takes out of the divergence node.
    primary_link: usize,
}

#[derive(Debug, Clone)]
struct Source {
    od: usize,
    rate: f64,
    guided_fraction: f64,
    start: u64,
    end: u64,
    arrivals: f64,
    guided: f64,
}

// Accumulators count an arrival once they reach 1 up to rounding.
const ACCUMULATOR_SLACK: f64 = 1e-9;

/// Runs a scenario and returns its metrics and per-step series.
///
/// Each step: departures from the demand accumulators; route decisions by
/// travelers at nodes; movement, with travel time locked at link entry;
/// information emission from the realized link times; a learning pass; and
/// finally the time-series row. The run is a pure function of the config.
pub fn run(cfg: &ScenarioConfig) -> Result<(Metrics, TimeSeries), EngineError> {
    let series = simulate(cfg)?;
    let metrics = compute_metrics(&series, cfg.warmup);
    Ok((metrics, series))
}

/// Runs a scenario and returns only the time series.
pub fn simulate(cfg: &ScenarioConfig) -> Result<TimeSeries, EngineError> {
    cfg.validate()?;
    let net: &Network = &cfg.network;
    let free_flow = net.free_flow_costs();
    let learning = cfg.learning();

    let mut warnings = Vec::new();
    let mut ods: Vec<OdPair> = Vec::new();
    let mut sources = Vec::new();
    for d in &cfg.demand {
        let origin = net.node_ix(d.origin).expect("validated");
        let dest = net.node_ix(d.dest).expect("validated");
        let od = match ods.iter().position(|o| o.origin == origin && o.dest == dest) {
            Some(i) => i,
            None => match shortest_path(net, &free_flow, origin, dest) {
                Ok(route) => {
                    let (divergence_node, primary_link) = divergence(net, &route);
                    ods.push(OdPair {
                        origin,
                        dest,
                        free_flow_route: route,
                        divergence_node,
                        primary_link,
                    });
                    ods.len() - 1
                }
                Err(e) => {
                    warnings.push(format!("demand {}->{} dropped: {e}", d.origin, d.dest));
                    continue;
                }
            },
        };
        sources.push(Source {
            od,
            rate: d.rate,
            guided_fraction: d.guided_fraction,
            start: d.start,
            end: d.end,
            arrivals: 0.0,
            guided: 0.0,
        });
    }

    let labels = ods
        .iter()
        .map(|o| format!("{}_{}", net.node_id(o.origin), net.node_id(o.dest)))
        .collect();
    let link_ids = net.links().iter().map(|l| l.id).collect();
    let mut series = TimeSeries::new(labels, link_ids, cfg.convergence);
    series.warnings = warnings;

    let n_links = net.links().len();
    let mut volumes = vec![0u32; n_links];
    let mut realized = free_flow.clone();
    let mut last_emitted = free_flow.clone();
    let mut items: Vec<InfoItem> = Vec::new();
    let mut next_item = 0u64;
    let mut next_agent = 0u64;
    let mut agents: Vec<Agent> = Vec::new();
    let mut od_of_agent: Vec<usize> = Vec::new();

    for step in 0..cfg.steps {
        let mut row_spawned = 0u32;
        let mut row_failed = 0u32;
        let mut row_completed = 0u32;
        let mut row_time_sum = 0u64;
        let mut row_computed = 0u64;
        let mut split_total = vec![0u32; ods.len()];
        let mut split_primary = vec![0u32; ods.len()];

        // 1. Departures.
        items.retain(|item| item.age(step) <= learning.max_age);
        let mut catch_up = WeightCache::new(&cfg.kernel, net, step);
        for src in sources.iter_mut() {
            if step < src.start || step > src.end {
                continue;
            }
            src.arrivals += src.rate;
            while src.arrivals >= 1.0 - ACCUMULATOR_SLACK {
                src.arrivals -= 1.0;
                src.guided += src.guided_fraction;
                let guided = src.guided >= 1.0 - ACCUMULATOR_SLACK;
                if guided {
                    src.guided -= 1.0;
                }
                let od = &ods[src.od];
                let mut agent = Agent::new(
                    next_agent,
                    od.origin,
                    od.dest,
                    step,
                    guided,
                    od.free_flow_route.clone(),
                    net,
                    cfg.seed,
                );
                // Pre-trip acquisition of the information currently active.
                catch_up.apply(&mut agent, &items);
                agents.push(agent);
                od_of_agent.push(src.od);
                next_agent += 1;
                row_spawned += 1;
            }
        }

        // 2. Decisions at nodes.
        let x_tra = volumes
            .iter()
            .zip(net.links())
            .map(|(&v, l)| (v as f64 / l.capacity).min(1.0))
            .sum::<f64>()
            / n_links.max(1) as f64;
        let ctx = SelectionContext::new(cfg.x_serv, x_tra, cfg.x_user);
        let mut failed_ids = Vec::new();
        for agent in agents.iter_mut() {
            let Some(at) = agent.node() else { continue };
            let pretrip = agent.depart_step == step && at == agent.origin;
            if cfg.pretrip_only && !pretrip {
                continue;
            }
            match choose_route(agent, net, &cfg.strategy, cfg.mode, &ctx, &cfg.selection) {
                Ok(d) => row_computed += d.computed as u64,
                Err(_) => failed_ids.push(agent.id),
            }
        }

        // 3. Movement. Exits free capacity before entries lock their times.
        let mut entered = vec![false; n_links];
        for agent in &agents {
            if let Position::Link { link, exit_step, .. } = agent.position {
                if exit_step == step {
                    volumes[link] -= 1;
                }
            }
        }
        for (agent, &od) in agents.iter_mut().zip(&od_of_agent) {
            match agent.position {
                Position::Node(at) => {
                    if failed_ids.contains(&agent.id) {
                        continue;
                    }
                    if agent.route.is_empty() || net.link(agent.route[0]).from != at {
                        failed_ids.push(agent.id);
                        continue;
                    }
                    let link = agent.route.remove(0);
                    let tt = link_travel_time(net.link(link), volumes[link] as f64);
                    volumes[link] += 1;
                    realized[link] = tt as f64;
                    entered[link] = true;
                    agent.position = Position::Link {
                        link,
                        to: net.link(link).to,
                        exit_step: step + tt as u64,
                    };
                    let pair = &ods[od];
                    if at == pair.divergence_node {
                        split_total[od] += 1;
                        split_primary[od] += (link == pair.primary_link) as u32;
                    }
                }
                Position::Link { to, exit_step, .. } if exit_step == step => {
                    if to == agent.dest {
                        agent.trip_end = Some(step);
                        row_completed += 1;
                        row_time_sum += step - agent.trip_start;
                    } else {
                        agent.position = Position::Node(to);
                    }
                }
                Position::Link { .. } => {}
            }
        }
        failed_ids.sort_unstable();
        failed_ids.dedup();
        row_failed += failed_ids.len() as u32;
        let keep: Vec<bool> = agents
            .iter()
            .map(|a| a.trip_end.is_none() && failed_ids.binary_search(&a.id).is_err())
            .collect();
        let mut flags = keep.iter();
        agents.retain(|_| *flags.next().unwrap());
        let mut flags = keep.iter();
        od_of_agent.retain(|_| *flags.next().unwrap());

        // 4. Emission. Links without an entrant this step report the time an
        // entrant would lock now.
        for (l, link) in net.links().iter().enumerate() {
            if !entered[l] {
                realized[l] = link_travel_time(link, volumes[l] as f64) as f64;
            }
            let current = realized[l];
            let last = last_emitted[l];
            let changed = (current - last).abs() / last > cfg.emission.change_threshold;
            let periodic = step % cfg.emission.period == 0
                && (current != last || current != free_flow[l]);
            if changed || periodic {
                items.push(InfoItem {
                    id: next_item,
                    link: l,
                    new_cost: current,
                    origin_node: link.from,
                    birth_step: step,
                });
                next_item += 1;
                last_emitted[l] = current;
            }
        }

        // 5. Learning; this step's departures already had their pass.
        step_learning(
            agents.iter_mut().filter(|a| a.depart_step != step),
            &mut items,
            &cfg.kernel,
            step,
            net,
            &learning,
        );

        // 6. Record.
        let route_split = split_total
            .iter()
            .zip(&split_primary)
            .map(|(&t, &p)| (t > 0).then(|| p as f64 / t as f64))
            .collect();
        series.rows.push(StepRow {
            step,
            att_window: None,
            route_split,
            split_decisions: split_total,
            volumes: volumes.clone(),
            active_items: items.len(),
            spawned: row_spawned,
            completed: row_completed,
            completed_time_sum: row_time_sum,
            failed: row_failed,
            in_flight: agents.len(),
            routes_computed: row_computed,
        });
        let window = cfg.convergence.att_window as usize;
        let recent = &series.rows[series.rows.len().saturating_sub(window)..];
        let (count, sum) = recent
            .iter()
            .fold((0u64, 0u64), |(c, s), r| (c + r.completed as u64, s + r.completed_time_sum));
        series.rows.last_mut().unwrap().att_window = (count > 0).then(|| sum as f64 / count as f64);
    }
    Ok(series)
}

/// Finds where the free-flow route first passes a node with more than one
/// outgoing link, and the link it takes there. Falls back to the origin.
fn divergence(net: &Network, route: &[usize]) -> (usize, usize) {
    route
        .iter()
        .find(|&&l| net.outgoing(net.link(l).from).len() > 1)
        .or(route.first())
        .map(|&l| (net.link(l).from, l))
        .expect("origin differs from destination, so the route is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::SelectionModel;
    use crate::engine::scenario::DemandEntry;
    use crate::kernels::KernelSpec;
    use crate::network::{LinkSpec, NodeId};
    use std::sync::Arc;

    /// 1 -> 2 over parallel links 1 (t0 5) and 2 (t0 6).
    fn parallel_cfg() -> ScenarioConfig {
        let net = Network::new(
            &[
                LinkSpec::new(1, 1, 2, 1.0, 5.0, 4.0),
                LinkSpec::new(2, 1, 2, 1.0, 6.0, 4.0),
            ],
            &[],
        )
        .unwrap();
        let mut cfg = ScenarioConfig::new(Arc::new(net));
        cfg.steps = 400;
        cfg.warmup = 100;
        cfg.selection = SelectionModel::constant(60.0);
        cfg.demand.push(DemandEntry {
            origin: NodeId(1),
            dest: NodeId(2),
            rate: 1.5,
            guided_fraction: 1.0,
            start: 0,
            end: 399,
        });
        cfg
    }

    #[test]
    fn zero_kernel_keeps_free_flow_route() {
        let cfg = parallel_cfg();
        let (m, ts) = run(&cfg).unwrap();
        assert!(m.completed > 0);
        assert_eq!(m.oscillation_index, 0.0);
        assert!(ts.rows.iter().all(|r| r.volumes[1] == 0));
        assert!(ts.rows.iter().flat_map(|r| r.route_split[0]).all(|s| s == 1.0));
    }

    #[test]
    fn empty_demand() {
        let mut cfg = parallel_cfg();
        cfg.demand.clear();
        cfg.kernel = KernelSpec::global_gap(5.0).unwrap();
        let (m, ts) = run(&cfg).unwrap();
        assert_eq!(m.completed, 0);
        assert_eq!(m.att, None);
        assert!(ts.rows.iter().all(|r| r.active_items == 0));
    }

    #[test]
    fn conservation() {
        let mut cfg = parallel_cfg();
        cfg.kernel = KernelSpec::global_gap(5.0).unwrap();
        let ts = simulate(&cfg).unwrap();
        let (mut spawned, mut done) = (0u64, 0u64);
        for r in &ts.rows {
            spawned += r.spawned as u64;
            done += (r.completed + r.failed) as u64;
            assert_eq!(spawned, done + r.in_flight as u64);
            assert_eq!(r.volumes.iter().map(|&v| v as usize).sum::<usize>(), r.in_flight);
        }
    }

    #[test]
    fn information_moves_traffic() {
        let mut cfg = parallel_cfg();
        cfg.kernel = KernelSpec::global_gap(5.0).unwrap();
        let ts = simulate(&cfg).unwrap();
        assert!(ts.rows.iter().any(|r| r.volumes[1] > 0));
    }

    #[test]
    fn unreachable_demand_is_dropped() {
        let mut cfg = parallel_cfg();
        cfg.demand[0].origin = NodeId(2);
        cfg.demand[0].dest = NodeId(1);
        let (m, ts) = run(&cfg).unwrap();
        assert_eq!(m.completed, 0);
        assert_eq!(ts.warnings.len(), 1);
        assert!(ts.od_labels.is_empty());
    }

    #[test]
    fn deterministic() {
        let mut cfg = parallel_cfg();
        cfg.kernel = KernelSpec::natural_global(std::f64::consts::E, 4.0).unwrap();
        cfg.selection = SelectionModel::constant(0.5);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }
}
