//! Command-line interface: scenario-driven solves, single-stage flows,
//! diagnostics, config validation, and rendering.
//!
//! Exit codes: 0 success, 2 configuration error, 3 invalid barriers,
//! 4 non-convergence (or failed identity checks), 5 internal error.

use crate::continuation::{self, SolveError, SolveStatus};
use crate::flow::{self, Bounds, FlowStatus};
use crate::graphgeo::build_cache;
use crate::scenario::{
    self, axis_slices_csv, heatmap_ppm, parse_lorgrid, state_to_lorgrid, trace_to_csv,
    write_lorgrid, LorGrid, ScenarioConfig, ScenarioError,
};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BARRIER: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Parser)]
#[command(name = "lorflow", version, about = "Prescribed-scalar-curvature hypersurface solver")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario configuration file
    #[arg(long)]
    scenario: PathBuf,
    /// Override the grid resolution (points per axis)
    #[arg(long)]
    grid: Option<usize>,
    /// Override the per-stage step budget
    #[arg(long)]
    max_steps: Option<usize>,
    /// Override the sampling seed
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full continuation solve and write report, traces, and fields
    Solve {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Override the final regularization parameter of the schedule
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run a single flow stage at fixed regularization
    Flow {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Regularization parameter for the stage (default: eps0)
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Tabulate the geometry of constant-time slices over the time interval
    SliceInfo {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Optional output directory for the CSV table
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify the algebraic identity suite on random cone samples
    CheckIdentities {
        /// Number of random spectra to sample
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        quiet: bool,
    },
    /// Validate a scenario file (schema, ranges, barrier ordering)
    ValidateConfig {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Render heatmaps and axis slices from a previous solve's output
    Render {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Directory holding final_u.lorgrid (output of solve/flow); images
        /// and slices are written next to it
        #[arg(long)]
        out: PathBuf,
    },
}

/// Configure the global thread pool from LORFLOW_THREADS, if set.
pub fn init_threads() {
    if let Ok(text) = std::env::var("LORFLOW_THREADS") {
        if let Ok(threads) = text.parse::<usize>() {
            if threads > 0 {
                // Ignore the error if a pool is already installed.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // clap handles --help/--version via this path with status 0
            let code = if err.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &ScenarioError) -> i32 {
    match err {
        ScenarioError::Schema(_)
        | ScenarioError::Range(_)
        | ScenarioError::Expr { .. }
        | ScenarioError::Io(_) => EXIT_CONFIG,
        ScenarioError::Solve(SolveError::BarrierInvalid(_)) => EXIT_BARRIER,
        _ => EXIT_INTERNAL,
    }
}

fn load(common: &ScenarioArgs) -> Result<ScenarioConfig, ScenarioError> {
    let mut config = scenario::load_scenario(&common.scenario)?;
    if let Some(points) = common.grid {
        if points < 8 {
            return Err(ScenarioError::Range(format!(
                "--grid must be >= 8, got {points}"
            )));
        }
        config.points = points;
    }
    if let Some(max_steps) = common.max_steps {
        if max_steps == 0 {
            return Err(ScenarioError::Range("--max-steps must be >= 1".into()));
        }
        config.max_steps = max_steps;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), ScenarioError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), bytes)?;
    Ok(())
}

/// Pointwise unregularized residual H₂ − f, or NaN outside the cone.
fn residual_grid(
    state: &crate::graphgeo::GraphState,
    config: &ScenarioConfig,
) -> Result<LorGrid, ScenarioError> {
    let spec = config.build_spec()?;
    let f = config.build_f()?;
    let cutoff = config.build_cutoff()?;
    let cache = build_cache(state, &spec, 0.0)?;
    let mut values = Vec::with_capacity(cache.points.len());
    for q in &cache.points {
        let ftilde = f
            .eval(q.u, q.x, cutoff.theta(q.vt))
            .map_err(ScenarioError::Flow)?;
        values.push(q.h2_reg - ftilde);
    }
    Ok(LorGrid {
        n: state.grid.n(),
        points_per_axis: state.grid.points_per_axis(),
        period: state.grid.period(),
        time_interval: config.time_interval,
        values,
    })
}

fn dispatch(command: Command) -> Result<i32, ScenarioError> {
    match command {
        Command::Solve { common, out, eps } => cmd_solve(&common, &out, eps),
        Command::Flow { common, out, eps } => cmd_flow(&common, &out, eps),
        Command::SliceInfo { common, out } => cmd_slice_info(&common, out.as_deref()),
        Command::CheckIdentities {
            samples,
            seed,
            quiet,
        } => Ok(cmd_check_identities(samples, seed, quiet)),
        Command::ValidateConfig { common } => cmd_validate(&common),
        Command::Render { common, out } => cmd_render(&common, &out),
    }
}

fn cmd_solve(
    common: &ScenarioArgs,
    out: &Path,
    eps: Option<f64>,
) -> Result<i32, ScenarioError> {
    let mut config = load(common)?;
    if let Some(eps) = eps {
        if !(eps > 0.0 && eps <= config.eps0) {
            return Err(ScenarioError::Range(format!(
                "--eps must satisfy 0 < eps <= eps0 = {}, got {eps}",
                config.eps0
            )));
        }
        config.eps_min = eps;
    }
    let spec = config.build_spec()?;
    let f = config.build_f()?;
    let barriers = config.build_barriers()?;
    let cc = config.build_continuation_config()?;
    let report = continuation::solve(&barriers, &spec, &f, &cc)?;

    write_out(out, "report.txt", scenario::report_summary(&report).as_bytes())?;
    write_out(
        out,
        "eps_table.csv",
        scenario::report_eps_table(&report).as_bytes(),
    )?;
    for (j, trace) in report.traces.iter().enumerate() {
        write_out(out, &format!("trace_stage{j}.csv"), trace_to_csv(trace).as_bytes())?;
    }
    let field = state_to_lorgrid(&report.final_state, config.time_interval);
    write_out(out, "final_u.lorgrid", write_lorgrid(&field).as_bytes())?;
    let residual = residual_grid(&report.final_state, &config)?;
    write_out(out, "residual.lorgrid", write_lorgrid(&residual).as_bytes())?;

    if !common.quiet {
        print!("{}", scenario::report_summary(&report));
        println!("outputs written to {}", out.display());
    }
    match report.status {
        SolveStatus::Converged => Ok(0),
        SolveStatus::StageFailed { stage, flow_status } => {
            eprintln!("stage {stage} did not converge ({flow_status:?})");
            Ok(EXIT_NO_CONVERGENCE)
        }
    }
}

fn cmd_flow(common: &ScenarioArgs, out: &Path, eps: Option<f64>) -> Result<i32, ScenarioError> {
    let config = load(common)?;
    let eps = eps.unwrap_or(config.eps0);
    if !(eps > 0.0) {
        return Err(ScenarioError::Range(format!("--eps must be > 0, got {eps}")));
    }
    let spec = config.build_spec()?;
    let f = config.build_f()?;
    let barriers = config.build_barriers()?;
    let cfg = config.build_flow_config(eps)?;
    let bounds = Bounds {
        lower: &barriers.lower.u,
        upper: &barriers.upper.u,
    };
    let result = flow::run_flow(&barriers.upper, &spec, &f, &cfg, Some(bounds))?;

    write_out(out, "trace.csv", trace_to_csv(&result.trace).as_bytes())?;
    let field = state_to_lorgrid(&result.state, config.time_interval);
    write_out(out, "final_u.lorgrid", write_lorgrid(&field).as_bytes())?;

    if !common.quiet {
        println!(
            "status: {:?}  steps: {}  res_sup: {:.6e}",
            result.status,
            result.trace.rows.len(),
            result.final_res_sup
        );
        println!("outputs written to {}", out.display());
    }
    match result.status {
        FlowStatus::Converged => Ok(0),
        _ => Ok(EXIT_NO_CONVERGENCE),
    }
}

fn cmd_slice_info(common: &ScenarioArgs, out: Option<&Path>) -> Result<i32, ScenarioError> {
    let config = load(common)?;
    let spec = config.build_spec()?;
    let (a, b) = config.time_interval;
    let n = config.n as f64;
    let pairs = n * (n - 1.0) / 2.0;
    let mut csv = String::from("x0,psi,kappa,h2\n");
    let rows = 21;
    for i in 0..rows {
        let margin = 0.01 * (b - a);
        let c = (a + margin) + (b - a - 2.0 * margin) * i as f64 / (rows - 1) as f64;
        let psi = spec.psi(c, [0.0; 3])?;
        let kappa = crate::ambient::slice_curvature(&spec, c)?;
        let h2 = pairs * kappa * kappa;
        csv.push_str(&format!("{c:.16e},{psi:.16e},{kappa:.16e},{h2:.16e}\n"));
        if !common.quiet {
            println!("x0 = {c:10.6}  psi = {psi:12.6}  kappa = {kappa:12.6}  H2 = {h2:12.6}");
        }
    }
    if let Some(dir) = out {
        write_out(dir, "slice_info.csv", csv.as_bytes())?;
    }
    Ok(0)
}

fn cmd_check_identities(samples: u64, seed: u64, quiet: bool) -> i32 {
    let report = crate::symcone::verify_lemma_identities(samples, seed);
    if !quiet {
        println!("samples: {}  seed: {}", report.samples, report.seed);
        for check in &report.checks {
            println!(
                "{:<40} checked {:>8}  violations {:>4}  worst margin {:+.3e}",
                check.name, check.checked, check.violations, check.worst_margin
            );
        }
        println!(
            "gradient split max ratio (reported): {:.6}",
            report.gradient_split_max_ratio
        );
    }
    if report.total_violations() == 0 {
        0
    } else {
        eprintln!("{} identity violations", report.total_violations());
        EXIT_NO_CONVERGENCE
    }
}

fn cmd_validate(common: &ScenarioArgs) -> Result<i32, ScenarioError> {
    let config = load(common)?;
    // rebuild with any overrides applied
    config.build_spec()?;
    config.build_barriers()?;
    config.build_f()?;
    config.build_continuation_config()?;
    if !common.quiet {
        println!("ok: {}", common.scenario.display());
    }
    Ok(0)
}

fn cmd_render(common: &ScenarioArgs, out: &Path) -> Result<i32, ScenarioError> {
    let _config = load(common)?;
    let field_path = out.join("final_u.lorgrid");
    let text = std::fs::read_to_string(&field_path).map_err(|_| {
        ScenarioError::Schema(format!(
            "render needs {} (run solve or flow first)",
            field_path.display()
        ))
    })?;
    let field = parse_lorgrid(&text)
        .map_err(|e| ScenarioError::Schema(format!("bad field dump: {e}")))?;
    for (name, csv) in axis_slices_csv(&field) {
        write_out(out, &name, csv.as_bytes())?;
    }
    let mut images = 0;
    if let Some(ppm) = heatmap_ppm(&field) {
        write_out(out, "heatmap_u.ppm", &ppm)?;
        images += 1;
    }
    if let Ok(text) = std::fs::read_to_string(out.join("residual.lorgrid")) {
        if let Ok(res) = parse_lorgrid(&text) {
            if let Some(ppm) = heatmap_ppm(&res) {
                write_out(out, "heatmap_residual.ppm", &ppm)?;
                images += 1;
            }
        }
    }
    if !common.quiet {
        println!(
            "wrote {} axis slices and {images} heatmaps to {}",
            field.n,
            out.display()
        );
    }
    Ok(0)
}
