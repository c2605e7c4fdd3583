use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use guidance_core::engine::output::{metrics_csv, real, timeseries_csv};
use guidance_core::engine::scenario::RawScenario;
use guidance_core::engine::{kernel_from_pairs, kernel_section, load_scenario, run, EngineError, ScenarioError};
use guidance_core::experiments::{
    cartesian_grid, equivalence_csv, equivalence_trial, match_integral, optimize, optimize_csv, sweep, sweep_csv,
    ExperimentError, OptimizeOptions,
};
use guidance_core::kernels::{check_principles, sample_grid, total_influence, KernelError};
use guidance_core::{Domain2D, KernelFamily, KernelSpec, ScenarioConfig};

use crate::args::{Cli, Command, DomainArgs, InlineKernel, SeedArgs};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(e) => e.into(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Engine(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?
            .install(|| execute_command(cli.command)),
        None => execute_command(cli.command),
    }
}

fn execute_command(command: Command) -> Result<()> {
    match command {
        Command::Run {
            scenario,
            out,
            seed,
            kernel,
        } => run_scenario(&scenario, &out, seed, kernel.as_deref()),
        Command::CheckKernel {
            scenario,
            inline,
            reference,
            domain,
            out,
        } => check_kernel(scenario.as_deref(), &inline, &reference, &domain, &out),
        Command::Compare {
            scenario,
            kernel_a,
            kernel_b,
            seeds,
            match_integral,
            allow_divergent,
            domain,
            out,
        } => compare(
            &scenario,
            &kernel_a,
            &kernel_b,
            &seeds,
            match_integral.as_deref(),
            allow_divergent,
            &domain,
            &out,
        ),
        Command::Sweep {
            scenario,
            family,
            grid,
            seeds,
            out,
        } => run_sweep(&scenario, &family, &grid, &seeds, &out),
        Command::Optimize {
            scenario,
            family,
            bounds,
            budget,
            grid_points,
            seeds,
            out,
        } => run_optimize(&scenario, &family, &bounds, budget, grid_points, &seeds, &out),
        Command::EmitPlotData {
            runs,
            x_max,
            x_step,
            t_max,
            t_step,
            out,
        } => emit_plot_data(&runs, (x_max, x_step), (t_max, t_step), &out),
    }
}

fn write_output(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Parses `family` or `family:key=value,...`; missing parameters take
/// their defaults.
pub(crate) fn parse_kernel_spec(spec: &str) -> Result<KernelSpec> {
    let (family, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut pairs = vec![("kind", family.trim())];
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("kernel spec `{spec}`: expected key=value, got `{item}`")))?;
        pairs.push((k.trim(), v.trim()));
    }
    Ok(kernel_from_pairs(pairs)?)
}

fn parse_family(name: &str) -> Result<KernelFamily> {
    Ok(name.parse::<KernelFamily>()?)
}

fn parse_seeds(args: &SeedArgs, cfg: &ScenarioConfig) -> Result<Vec<u64>> {
    let Some(text) = args.seeds.as_deref() else {
        return Ok(vec![cfg.seed]);
    };
    let bad = || CliError::Validation(format!("bad seed list `{text}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(CliError::Validation(format!("seed list `{text}` is empty")));
    }
    Ok(seeds)
}

fn domain(args: &DomainArgs) -> Result<Domain2D> {
    Ok(Domain2D::new(args.x_max, args.t_max, args.grid_dx, args.grid_dt)?)
}

fn warn_all(cfg_warnings: &[String]) {
    for w in cfg_warnings {
        eprintln!("warning: {w}");
    }
}

fn run_scenario(scenario: &Path, out: &Path, seed: Option<u64>, kernel: Option<&str>) -> Result<()> {
    let mut cfg = load_scenario(scenario)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(spec) = kernel {
        cfg.kernel = parse_kernel_spec(spec)?;
    }
    let (metrics, series) = run(&cfg)?;
    warn_all(&series.warnings);
    write_output(out, "metrics.csv", &metrics_csv(&metrics))?;
    write_output(out, "timeseries.csv", &timeseries_csv(&series))?;
    write_output(out, "kernel.cfg", &kernel_section(&cfg.kernel))
}

fn inline_kernel(inline: &InlineKernel) -> Result<Option<KernelSpec>> {
    let values = [
        ("dt", inline.dt),
        ("x_radius", inline.x_radius),
        ("mt", inline.mt),
        ("ct", inline.ct),
        ("mx", inline.mx),
        ("cx", inline.cx),
        ("v", inline.v),
    ];
    let Some(kind) = inline.kernel.as_deref() else {
        if let Some((name, _)) = values.iter().find(|(_, v)| v.is_some()) {
            return Err(CliError::Usage(format!("--{} needs --kernel", name.replace('_', "-"))));
        }
        return Ok(None);
    };
    let rendered: Vec<(&str, String)> = values
        .iter()
        .filter_map(|(k, v)| v.map(|v| (*k, v.to_string())))
        .collect();
    let pairs = std::iter::once(("kind", kind)).chain(rendered.iter().map(|(k, v)| (*k, v.as_str())));
    Ok(Some(kernel_from_pairs(pairs)?))
}

fn check_kernel(
    scenario: Option<&Path>,
    inline: &InlineKernel,
    reference: &str,
    dom_args: &DomainArgs,
    out: &Path,
) -> Result<()> {
    let kernel = match (scenario, inline_kernel(inline)?) {
        (Some(path), None) => load_scenario(path)?.kernel,
        (None, Some(k)) => k,
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --scenario or --kernel".into())),
        (None, None) => return Err(CliError::Usage("a kernel is required: --scenario or --kernel".into())),
    };
    let reference = parse_kernel_spec(reference)?;
    let report = check_principles(&kernel, &reference, &domain(dom_args)?)?;
    let csv = format!(
        "kernel,principle1,integral,phase_distance_to_reference\n{kernel},{},{},{}\n",
        report.principle1,
        if report.principle1_integral.is_infinite() {
            "inf".to_string()
        } else {
            real(report.principle1_integral)
        },
        real(report.principle2_distance)
    );
    write_output(out, "kernel_report.csv", &csv)
}

#[allow(clippy::too_many_arguments)]
fn compare(
    scenario: &Path,
    spec_a: &str,
    spec_b: &str,
    seed_args: &SeedArgs,
    refit: Option<&str>,
    allow_divergent: bool,
    dom_args: &DomainArgs,
    out: &Path,
) -> Result<()> {
    let cfg = load_scenario(scenario)?;
    let seeds = parse_seeds(seed_args, &cfg)?;
    let dom = domain(dom_args)?;
    let k1 = parse_kernel_spec(spec_a)?;
    let mut k2 = parse_kernel_spec(spec_b)?;
    if let Some(param) = refit {
        let family = k2.family();
        let names = family.param_names();
        let Some(ix) = names.iter().position(|n| *n == param) else {
            return Err(CliError::Validation(format!(
                "{family} has no parameter `{param}` (expected one of: {})",
                names.join(", ")
            )));
        };
        let fixed: Vec<Option<f64>> = k2
            .params()
            .iter()
            .enumerate()
            .map(|(i, v)| (i != ix).then_some(*v))
            .collect();
        k2 = match_integral(family, &fixed, total_influence(&k1, &dom), &dom)?.with_velocity(k2.velocity)?;
        eprintln!("matched kernel B: {k2}");
    }
    let report = equivalence_trial(&cfg, &k1, &k2, &seeds, &dom, allow_divergent)?;
    write_output(out, "equivalence.csv", &equivalence_csv(&k1, &k2, &report))
}

fn parse_axis(text: &str) -> Result<(String, Vec<f64>)> {
    let bad = || CliError::Validation(format!("bad grid axis `{text}`, expected name=v1,v2,..."));
    let (name, values) = text.split_once('=').ok_or_else(bad)?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    Ok((name.trim().to_string(), values))
}

fn run_sweep(scenario: &Path, family: &str, axes: &[String], seed_args: &SeedArgs, out: &Path) -> Result<()> {
    let cfg = load_scenario(scenario)?;
    let family = parse_family(family)?;
    let seeds = parse_seeds(seed_args, &cfg)?;
    let axes = axes.iter().map(|a| parse_axis(a)).collect::<Result<Vec<_>>>()?;
    let grid = cartesian_grid(family, &axes)?;
    let rows = sweep(&cfg, family, &grid, &seeds)?;
    for row in &rows {
        if let Some(e) = &row.error {
            eprintln!("warning: grid point {:?} failed: {e}", row.params);
        }
    }
    write_output(out, "sweep.csv", &sweep_csv(&rows))
}

fn parse_bounds(family: KernelFamily, specs: &[String]) -> Result<Vec<(f64, f64)>> {
    let names = family.param_names();
    let mut bounds: Vec<(f64, f64)> = family.default_params().iter().map(|&d| (d, d)).collect();
    for text in specs {
        let bad = || CliError::Validation(format!("bad bound `{text}`, expected name=lo:hi"));
        let (name, range) = text.split_once('=').ok_or_else(bad)?;
        let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
        let (lo, hi): (f64, f64) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
        let Some(ix) = names.iter().position(|n| *n == name.trim()) else {
            return Err(CliError::Validation(format!(
                "{family} has no parameter `{name}` (expected one of: {})",
                names.join(", ")
            )));
        };
        bounds[ix] = (lo, hi);
    }
    Ok(bounds)
}

#[allow(clippy::too_many_arguments)]
fn run_optimize(
    scenario: &Path,
    family: &str,
    bound_specs: &[String],
    budget: usize,
    grid_points: Option<usize>,
    seed_args: &SeedArgs,
    out: &Path,
) -> Result<()> {
    let cfg = load_scenario(scenario)?;
    let family = parse_family(family)?;
    let seeds = parse_seeds(seed_args, &cfg)?;
    let bounds = parse_bounds(family, bound_specs)?;
    let result = optimize(&cfg, family, &bounds, budget, &seeds, &OptimizeOptions { grid_points })?;
    let best = family.build(&result.best_params, cfg.kernel.velocity)?;
    eprintln!(
        "best {best}: eta {} after {} evaluations",
        real(result.best_eta),
        result.evaluations
    );
    write_output(out, "optimize.csv", &optimize_csv(&result))?;
    write_output(out, "best_kernel.cfg", &kernel_section(&best))
}

/// Windowed ATT column of a run directory's timeseries.csv, as written.
fn read_att_column(dir: &Path) -> Result<Vec<(String, String)>> {
    let path = dir.join("timeseries.csv");
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("step,att_window") {
        return Err(CliError::Validation(format!(
            "{}: header must start with `step,att_window`",
            path.display()
        )));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut fields = line.split(',');
            match (fields.next(), fields.next()) {
                (Some(step), Some(att)) if step.parse::<u64>().is_ok() => Ok((step.to_string(), att.to_string())),
                _ => Err(CliError::Validation(format!("{}: malformed row {}", path.display(), i + 2))),
            }
        })
        .collect()
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn read_kernel_cfg(path: &Path) -> Result<KernelSpec> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let raw = RawScenario::parse(&text)?;
    Ok(kernel_from_pairs(raw.kernel.iter().map(|(k, v, _)| (k.as_str(), v.as_str())))?)
}

fn emit_plot_data(runs: &[PathBuf], x: (f64, f64), t: (f64, f64), out: &Path) -> Result<()> {
    let columns = runs.iter().map(|d| read_att_column(d)).collect::<Result<Vec<_>>>()?;
    let len = columns.iter().map(Vec::len).min().unwrap_or(0);
    if columns.iter().any(|c| c.len() != len) {
        eprintln!("warning: runs have different lengths; truncating to {len} steps");
    }
    let mut csv = String::from("step");
    for dir in runs {
        let _ = write!(csv, ",{}", run_label(dir));
    }
    csv.push('\n');
    for i in 0..len {
        csv.push_str(&columns[0][i].0);
        for col in &columns {
            let _ = write!(csv, ",{}", col[i].1);
        }
        csv.push('\n');
    }
    write_output(out, "att_compare.csv", &csv)?;

    let kernel_path = runs[0].join("kernel.cfg");
    if !kernel_path.exists() {
        eprintln!("warning: {} not found; kernel_heatmap.csv not written", kernel_path.display());
        return Ok(());
    }
    let kernel = read_kernel_cfg(&kernel_path)?;
    if !(x.0 > 0.0 && x.1 > 0.0 && t.0 > 0.0 && t.1 > 0.0) {
        return Err(CliError::Validation("heatmap extents and steps must be positive".into()));
    }
    let mut heat = String::from("x,t,p\n");
    for (x, t, p) in sample_grid(&kernel, x.0, t.0, x.1, t.1) {
        let _ = writeln!(heat, "{},{},{}", real(x), real(t), real(p));
    }
    write_output(out, "kernel_heatmap.csv", &heat)
}
