//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to the
//! terminal (bypassing output capture) and then asserts the same outcome.

use std::f64::consts::E;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use guidance_core::engine::metrics::flips;
use guidance_core::engine::output::{metrics_csv, timeseries_csv};
use guidance_core::engine::{load_scenario, run};
use guidance_core::experiments::{equivalence_trial, evaluate, match_integral, optimize, OptimizeOptions};
use guidance_core::kernels::{check_principles, total_influence, Principle1};
use guidance_core::learning::{apply_update, PerceivedCosts};
use guidance_core::{Domain2D, KernelFamily, KernelSpec, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, pass: bool, detail: String, started: Instant, limit: Duration) {
    let elapsed = started.elapsed();
    let in_time = elapsed < limit;
    let ok = pass && in_time;
    let line = format!(
        "{} {name}: {detail} [{:.2}s of {}s]\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "{name}: {detail}");
    assert!(in_time, "{name}: took {elapsed:?}, limit {limit:?}");
}

fn scenario(file: &str) -> ScenarioConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", file].iter().collect();
    load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn ten_seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn update(old: f64, new: f64, p: f64) -> f64 {
    let mut costs = PerceivedCosts::from_costs(vec![old]);
    apply_update(&mut costs, 0, new, p).unwrap();
    costs.as_slice()[0]
}

#[test]
fn learning_rule_exactness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let old: f64 = rng.gen_range(0.0..500.0);
        let new: f64 = rng.gen_range(0.0..500.0);
        let p: f64 = rng.gen_range(0.0..=1.0);
        // Convex combination written as a step from the old value.
        let oracle = old + p * (new - old);
        worst = worst.max((update(old, new, p) - oracle).abs() / old.abs().max(new.abs()).max(1.0));
    }
    let identity = (0..100).all(|i| {
        let (old, new) = (i as f64 * 1.37, 1000.0 - i as f64);
        update(old, new, 0.0) == old && update(old, new, 1.0) == new
    });
    report(
        "learning rule exactness",
        worst <= 1e-12 && identity,
        format!("max relative error {worst:.2e} over 1000 triples, p=0/p=1 exact: {identity}"),
        t,
        secs(1),
    );
}

#[test]
fn kernel_values() {
    let t = Instant::now();
    let cases: Vec<(&str, KernelSpec, f64, f64, f64)> = vec![
        ("zero", KernelSpec::ZERO, 3.0, 4.0, 0.0),
        ("global-gap inside", KernelSpec::global_gap(10.0).unwrap(), 500.0, 3.0, 1.0),
        ("global-gap boundary", KernelSpec::global_gap(10.0).unwrap(), 500.0, 10.0, 0.0),
        ("natural-global", KernelSpec::natural_global(E, 20.0).unwrap(), 7.0, 20.0, (-1.0f64).exp()),
        ("natural-global t=ct", KernelSpec::natural_global(E, 3.5).unwrap(), 0.0, 3.5, 1.0 / E),
        ("local-gap inside", KernelSpec::local_gap(2.0, 3.0).unwrap(), 2.0, 2.9, 1.0),
        ("local-gap outside", KernelSpec::local_gap(2.0, 3.0).unwrap(), 2.1, 0.0, 0.0),
        ("natural-local", KernelSpec::natural_local(2.0, E, 4.0).unwrap(), 1.0, 2.0, (-0.5f64).exp()),
        ("natural-spacetime", KernelSpec::natural_spacetime(E, 2.0, E, 3.0).unwrap(), 2.0, 3.0, (-2.0f64).exp()),
        ("base 2", KernelSpec::natural_spacetime(2.0, 1.0, 2.0, 1.0).unwrap(), 1.0, 2.0, 0.125),
        (
            "velocity gating",
            KernelSpec::natural_global(E, 20.0).unwrap().with_velocity(Some(1.0)).unwrap(),
            50.0,
            10.0,
            0.0,
        ),
    ];
    let mut failures = Vec::new();
    for (name, k, x, time, expected) in &cases {
        let got = k.eval(*x, *time);
        if (got - expected).abs() > 1e-12 {
            failures.push(format!("{name}: {got} != {expected}"));
        }
    }
    report(
        "kernel values",
        failures.is_empty(),
        format!("{} closed forms, mismatches: {failures:?}", cases.len()),
        t,
        secs(1),
    );
}

/// Composite Simpson rule on `[0, a] x [0, b]` with `n` panels per axis.
fn simpson_2d(f: impl Fn(f64, f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let w = |i: usize| {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let (hx, ht) = (a / n as f64, b / n as f64);
    let mut sum = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            sum += w(i) * w(j) * f(i as f64 * hx, j as f64 * ht);
        }
    }
    sum * hx * ht / 9.0
}

#[test]
fn integral_oracle() {
    let t = Instant::now();
    let dom = Domain2D::new(40.0, 60.0, 0.05, 0.05).unwrap();
    let nst = KernelSpec::natural_spacetime(E, 2.0, E, 3.0).unwrap();
    let box_kernel = KernelSpec::local_gap(2.0, 3.0).unwrap();
    let i_nst = total_influence(&nst, &dom);
    let i_box = total_influence(&box_kernel, &dom);
    // Independent quadrature of the closed form at a different resolution.
    let simpson = simpson_2d(|x, t| (-x / 2.0 - t / 3.0).exp(), 40.0, 60.0, 2400);
    let nst_ok = (i_nst - 6.0).abs() / 6.0 < 0.01 && (i_nst - simpson).abs() / simpson < 0.01;
    let box_ok = (i_box - 6.0).abs() / 6.0 < 0.005;
    report(
        "integral oracle",
        nst_ok && box_ok,
        format!("natural-spacetime {i_nst:.6} (Simpson {simpson:.6}), local-gap {i_box:.6}, target 6"),
        t,
        secs(10),
    );
}

#[test]
fn principle1_classification() {
    let t = Instant::now();
    let dom = Domain2D::new(40.0, 60.0, 0.05, 0.05).unwrap();
    let reference = KernelSpec::natural_spacetime(E, 1.0, E, 1.0).unwrap();
    let cases = [
        (KernelSpec::ZERO, Principle1::BelowReference),
        (KernelSpec::global_gap(3.0).unwrap(), Principle1::DivergesInSpace),
        (KernelSpec::natural_global(E, 5.0).unwrap(), Principle1::DivergesInSpace),
        (KernelSpec::local_gap(2.0, 3.0).unwrap(), Principle1::Pass),
        (KernelSpec::natural_local(2.0, E, 3.0).unwrap(), Principle1::Pass),
        (KernelSpec::natural_spacetime(E, 2.0, E, 3.0).unwrap(), Principle1::Pass),
    ];
    let mut wrong = Vec::new();
    for (k, expected) in &cases {
        let got = check_principles(k, &reference, &dom).unwrap().principle1;
        if got != *expected {
            wrong.push(format!("{k}: {got} != {expected}"));
        }
    }
    let families: Vec<KernelFamily> = cases.iter().map(|(k, _)| k.family()).collect();
    let covered = KernelFamily::ALL.iter().all(|f| families.contains(f));
    report(
        "principle-1 classification",
        wrong.is_empty() && covered,
        format!("six families, misclassified: {wrong:?}"),
        t,
        secs(10),
    );
}

#[test]
fn zero_kernel_is_static_assignment() {
    let t = Instant::now();
    let cfg = scenario("two_route.cfg").with_kernel(KernelSpec::ZERO);
    let (m, ts) = run(&cfg).unwrap();
    let split = ts.split_series(0);
    let n_flips = flips(&split, 0);
    let all_primary = split.iter().flatten().all(|&v| v == 1.0);
    report(
        "zero kernel, no switching",
        ts.rows.len() == 2000 && n_flips == 0 && m.oscillation_index == 0.0 && all_primary,
        format!("{} steps, {n_flips} flips, every decision on the free-flow route: {all_primary}", ts.rows.len()),
        t,
        secs(5),
    );
}

#[test]
fn hunting_under_global_feedback() {
    let t = Instant::now();
    let cfg = scenario("hunting.cfg");
    let s = evaluate(&cfg, &KernelSpec::global_gap(5.0).unwrap(), &ten_seeds()).unwrap();
    report(
        "hunting",
        s.mean_oscillation > 20.0,
        format!("global-gap dt=5, forced selection: oscillation {:.3} per 100 steps (> 20)", s.mean_oscillation),
        t,
        secs(30),
    );
}

#[test]
fn local_feedback_beats_global() {
    let t = Instant::now();
    let cfg = scenario("two_route.cfg");
    let radius = cfg.network.diameter() / 2.0;
    let seeds = ten_seeds();
    let global = evaluate(&cfg, &KernelSpec::global_gap(5.0).unwrap(), &seeds).unwrap();
    let local = evaluate(&cfg, &KernelSpec::local_gap(radius, 5.0).unwrap(), &seeds).unwrap();
    report(
        "local vs global feedback",
        local.mean_att <= global.mean_att && local.mean_oscillation <= global.mean_oscillation,
        format!(
            "ATT local {:.3} vs global {:.3}; oscillation local {:.3} vs global {:.3}",
            local.mean_att, global.mean_att, local.mean_oscillation, global.mean_oscillation
        ),
        t,
        secs(60),
    );
}

#[test]
fn equivalence_harness_self_consistency() {
    let t = Instant::now();
    let dom = Domain2D::new(40.0, 60.0, 0.05, 0.05).unwrap();
    let box_kernel = KernelSpec::local_gap(2.0, 3.0).unwrap();
    let target = total_influence(&box_kernel, &dom);
    let matched = match_integral(KernelFamily::NaturalSpaceTime, &[Some(E), Some(2.0), Some(E), None], target, &dom).unwrap();
    let round_trip = (total_influence(&matched, &dom) - target).abs() / target;

    let cfg = scenario("two_route.cfg");
    let same = equivalence_trial(&cfg, &box_kernel, &box_kernel, &[1, 2], &dom, false).unwrap();
    let pair = equivalence_trial(&cfg, &box_kernel, &matched, &[1, 2], &dom, false).unwrap();
    let pass = round_trip < 0.005
        && same.eta_rel_diff == 0.0
        && pair.phase_distance.is_finite()
        && pair.integral_rel_diff < 0.005
        && pair.eta_1.is_finite()
        && pair.eta_2.is_finite();
    report(
        "equivalence harness",
        pass,
        format!(
            "round trip {round_trip:.2e}, self eta diff {}, matched {matched}: integral diff {:.2e}, eta diff {:.4}, phase distance {:.4}",
            same.eta_rel_diff, pair.integral_rel_diff, pair.eta_rel_diff, pair.phase_distance
        ),
        t,
        secs(60),
    );
}

#[test]
fn optimizer_sanity() {
    let t = Instant::now();
    let cfg = scenario("two_route.cfg");
    let seeds: Vec<u64> = (1..=5).collect();
    let bounds = [(E, E), (0.1, 5.0), (E, E), (0.5, 10.0)];
    let result = optimize(&cfg, KernelFamily::NaturalSpaceTime, &bounds, 60, &seeds, &OptimizeOptions::default()).unwrap();
    let global = evaluate(&cfg, &KernelSpec::global_gap(5.0).unwrap(), &seeds).unwrap();
    let min_trace = result.trace.iter().all(|(_, eta)| result.best_eta <= *eta);
    report(
        "optimizer sanity",
        result.best_eta <= global.mean_att && min_trace && result.evaluations <= 60,
        format!(
            "best {:?} eta {:.3} vs global-gap {:.3} after {} evaluations",
            result.best_params, result.best_eta, global.mean_att, result.evaluations
        ),
        t,
        secs(600),
    );
}

#[test]
fn determinism() {
    let t = Instant::now();
    let cfg = scenario("two_route.cfg").with_seed(42);
    let (m1, ts1) = run(&cfg).unwrap();
    let (m2, ts2) = run(&cfg).unwrap();
    let same = metrics_csv(&m1) == metrics_csv(&m2) && timeseries_csv(&ts1) == timeseries_csv(&ts2);
    report(
        "determinism",
        same,
        format!("seed 42 twice, byte-identical CSVs: {same}"),
        t,
        secs(60),
    );
}
