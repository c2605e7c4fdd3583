use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "guidance", version, about = "Route guidance simulation with distributive cost learning")]
pub struct Cli {
    /// Maximum number of worker threads for multi-run commands.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write metrics.csv, timeseries.csv and kernel.cfg.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario kernel with a compact spec such as
        /// `local-gap:x_radius=2,dt=5`.
        #[arg(long, value_name = "SPEC")]
        kernel: Option<String>,
    },
    /// Classify a kernel and measure it against a reference; writes
    /// kernel_report.csv.
    CheckKernel {
        /// Take the kernel from a scenario's [kernel] section.
        #[arg(long, conflicts_with = "kernel")]
        scenario: Option<PathBuf>,
        #[command(flatten)]
        inline: InlineKernel,
        /// Reference kernel as a compact spec.
        #[arg(long, value_name = "SPEC", default_value = "natural-spacetime:cx=1,ct=1")]
        reference: String,
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two kernels on one scenario over several seeds; writes
    /// equivalence.csv.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_name = "SPEC")]
        kernel_a: String,
        #[arg(long, value_name = "SPEC")]
        kernel_b: String,
        #[command(flatten)]
        seeds: SeedArgs,
        /// Refit this parameter of kernel B so that its total influence
        /// matches kernel A's.
        #[arg(long, value_name = "PARAM")]
        match_integral: Option<String>,
        /// Accept kernels whose total influence diverges.
        #[arg(long)]
        allow_divergent: bool,
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a kernel family over a parameter grid; writes sweep.csv.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        family: String,
        /// Grid axis as `name=v1,v2,...`; repeat for a Cartesian product.
        #[arg(long = "grid", value_name = "AXIS", required = true)]
        grid: Vec<String>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search a kernel family's parameter box for the lowest mean ATT;
    /// writes optimize.csv and best_kernel.cfg.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        family: String,
        /// Bounds as `name=lo:hi`; unlisted parameters stay at their
        /// default value.
        #[arg(long = "bounds", value_name = "BOUND", required = true)]
        bounds: Vec<String>,
        #[arg(long, default_value_t = 60)]
        budget: usize,
        /// Grid points before refinement; half the budget by default.
        #[arg(long)]
        grid_points: Option<usize>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect run directories into att_compare.csv and kernel_heatmap.csv.
    EmitPlotData {
        #[arg(long = "run", value_name = "DIR", required = true)]
        runs: Vec<PathBuf>,
        /// Heatmap extent and spacing along x.
        #[arg(long, default_value_t = 10.0)]
        x_max: f64,
        #[arg(long, default_value_t = 0.5)]
        x_step: f64,
        /// Heatmap extent and spacing along t.
        #[arg(long, default_value_t = 30.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1.0)]
        t_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Kernel flags mirroring the scenario file's [kernel] keys.
#[derive(Debug, Args, Default)]
pub struct InlineKernel {
    /// Kernel family.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, visible_alias = "x_radius")]
    pub x_radius: Option<f64>,
    #[arg(long)]
    pub mt: Option<f64>,
    #[arg(long)]
    pub ct: Option<f64>,
    #[arg(long)]
    pub mx: Option<f64>,
    #[arg(long)]
    pub cx: Option<f64>,
    /// Propagation velocity.
    #[arg(long)]
    pub v: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DomainArgs {
    #[arg(long, default_value_t = 40.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 60.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub grid_dx: f64,
    #[arg(long, default_value_t = 0.05)]
    pub grid_dt: f64,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Seeds as a list (`1,2,3`) or a half-open range (`0..10`); the
    /// scenario seed when absent.
    #[arg(long)]
    pub seeds: Option<String>,
}
