//! Command-line entry point: world generation, evaluation-suite execution,
//! report generation, and per-parameter camera-mismatch sweeps.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 I/O error, 3 internal
//! invariant violation.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use trajguide::config::{ConfigError, RunConfig};
use trajguide::eval::{
    build_suite, run_suite, run_suite_traced, sweep_mismatch, SweepParameter, TraceStep,
};
use trajguide::report::{
    aggregate_by, aggregate_csv, aggregate_markdown, curve_csv, init_distance_buckets,
    invalid_count, mismatch_csv, mismatch_points, read_records, records_to_jsonl, smooth_buckets,
    sweep_buckets_by_parameter, GroupKey, MismatchPoint, ReportError, ALL_GROUP_KEYS,
    SMOOTHING_WINDOW,
};
use trajguide::world::{generate_world, WorldParams};

#[derive(Parser)]
#[command(
    name = "trajguide",
    version,
    about = "Reference-trajectory navigation: simulation, controllers, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world file and print its grid statistics.
    GenWorld {
        /// Generation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grid width in cells.
        #[arg(long, default_value_t = WorldParams::default().width)]
        width: usize,
        /// Grid height in cells.
        #[arg(long, default_value_t = WorldParams::default().height)]
        height: usize,
        /// Cell edge length, meters.
        #[arg(long, default_value_t = WorldParams::default().cell_size)]
        cell_size: f64,
        /// Obstacle extrusion height, meters.
        #[arg(long, default_value_t = WorldParams::default().obstacle_height)]
        obstacle_height: f64,
        /// Interior obstacle fraction, in [0, 0.35].
        #[arg(long, default_value_t = WorldParams::default().density)]
        density: f64,
        /// Output file path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an evaluation suite and write results, report, and config echo.
    Run {
        /// TOML run configuration; omitted means the default full protocol.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides the config; 0 = one per core).
        #[arg(long)]
        workers: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Also write a per-step guidance trace (trace.jsonl).
        #[arg(long)]
        trace: bool,
    },
    /// Recompute aggregates and curves from results files.
    Report {
        /// One or more results.jsonl files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for report.csv and curve series; omitted prints only.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grouping dimensions (repeatable); default groups on all four.
        #[arg(long = "by", value_enum)]
        by: Vec<GroupKeyArg>,
    },
    /// Run the camera-mismatch sweep configured in the [sweep] section.
    Sweep {
        /// TOML run configuration; omitted means the default document.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides the config; 0 = one per core).
        #[arg(long)]
        workers: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GroupKeyArg {
    Task,
    Init,
    Camera,
    Controller,
}

impl From<GroupKeyArg> for GroupKey {
    fn from(arg: GroupKeyArg) -> Self {
        match arg {
            GroupKeyArg::Task => GroupKey::Task,
            GroupKeyArg::Init => GroupKey::Init,
            GroupKeyArg::Camera => GroupKey::Camera,
            GroupKeyArg::Controller => GroupKey::Controller,
        }
    }
}

/// Process-level failure carrying its exit code.
#[derive(Debug)]
enum AppError {
    /// Exit 1: bad flags, bad config values, unusable parameters.
    Usage(String),
    /// Exit 2: filesystem and input-file failures.
    Io(String),
    /// Exit 3: a broken internal invariant.
    Internal(String),
}

impl AppError {
    fn code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Io(_) => 2,
            AppError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(msg) | AppError::Io(msg) | AppError::Internal(msg) => msg,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(err: ConfigError) -> Self {
        match err {
            ConfigError::Read { .. } => AppError::Io(err.to_string()),
            ConfigError::Parse(_) | ConfigError::Invalid(_) => AppError::Usage(err.to_string()),
        }
    }
}

impl From<ReportError> for AppError {
    fn from(err: ReportError) -> Self {
        AppError::Io(err.to_string())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    // Panics (from this thread or a worker) signal a broken invariant, not
    // a user mistake; give them their own exit code.
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(cli)));
    let code = match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(err)) => {
            eprintln!("error: {}", err.message());
            err.code()
        }
        Err(_) => {
            eprintln!("error: internal invariant violation (panic above)");
            AppError::Internal(String::new()).code()
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::GenWorld { seed, width, height, cell_size, obstacle_height, density, out } => {
            let params = WorldParams { width, height, cell_size, obstacle_height, density };
            cmd_gen_world(seed, &params, &out)
        }
        Command::Run { config, out, workers, seed, trace } => {
            let config = effective_config(config.as_deref(), out.as_deref(), workers, seed)?;
            cmd_run(&config, trace)
        }
        Command::Report { inputs, out, by } => cmd_report(&inputs, out.as_deref(), &by),
        Command::Sweep { config, out, workers, seed } => {
            let config = effective_config(config.as_deref(), out.as_deref(), workers, seed)?;
            cmd_sweep(&config)
        }
    }
}

/// Loads the config document and folds the command-line overrides in, so
/// the echo written next to the results describes the run that actually
/// happened.
fn effective_config(
    path: Option<&Path>,
    out: Option<&Path>,
    workers: Option<usize>,
    seed: Option<u64>,
) -> Result<RunConfig, AppError> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(workers) = workers {
        config.workers = workers;
    }
    if let Some(out) = out {
        config.out_dir = out.display().to_string();
    }
    config.validate()?;
    Ok(config)
}

fn create_dir(path: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(path)
        .map_err(|e| AppError::Io(format!("creating {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    std::fs::write(path, contents)
        .map_err(|e| AppError::Io(format!("writing {}: {e}", path.display())))
}

fn cmd_gen_world(seed: u64, params: &WorldParams, out: &Path) -> Result<(), AppError> {
    if params.width < 10 || params.height < 10 {
        return Err(AppError::Usage(format!(
            "grid {}x{} below the 10x10 minimum",
            params.width, params.height
        )));
    }
    if !(params.cell_size > 0.0) || !(params.obstacle_height > 0.0) {
        return Err(AppError::Usage("cell_size and obstacle_height must be positive".into()));
    }
    if !(0.0..=0.35).contains(&params.density) {
        return Err(AppError::Usage(format!("density {} outside [0, 0.35]", params.density)));
    }
    let world = generate_world(seed, params).map_err(|e| AppError::Usage(e.to_string()))?;
    world.save(out).map_err(|e| AppError::Io(format!("writing {}: {e}", out.display())))?;
    let free: usize = (0..world.height())
        .map(|iy| (0..world.width()).filter(|&ix| world.is_free(ix, iy)).count())
        .sum();
    let total = world.width() * world.height();
    println!(
        "world seed {seed}: {}x{} cells at {} m ({}x{} m), {} free cells ({:.1}% of grid) -> {}",
        world.width(),
        world.height(),
        world.cell_size(),
        world.bounds()[0],
        world.bounds()[1],
        free,
        100.0 * free as f64 / total as f64,
        out.display()
    );
    Ok(())
}

/// Converts point magnitudes from internal units to the parameter's
/// display units (field of view prints in degrees).
fn display_points(points: &[MismatchPoint], parameter: SweepParameter) -> Vec<MismatchPoint> {
    points
        .iter()
        .map(|p| MismatchPoint { magnitude: parameter.display_magnitude(p.magnitude), ..*p })
        .collect()
}

fn trace_to_jsonl(trace: &[TraceStep]) -> String {
    let mut out = String::new();
    for step in trace {
        out.push_str(&serde_json::to_string(step).expect("trace step serializes"));
        out.push('\n');
    }
    out
}

fn cmd_run(config: &RunConfig, trace: bool) -> Result<(), AppError> {
    let suite = config.to_suite();
    let configs = build_suite(&suite);
    let workers = config.effective_workers();
    eprintln!("running {} episodes on {} workers", configs.len(), workers);
    let (records, trace_steps) = if trace {
        run_suite_traced(&configs, workers)
    } else {
        (run_suite(&configs, workers), Vec::new())
    };

    let out_dir = PathBuf::from(&config.out_dir);
    create_dir(&out_dir)?;
    write_file(&out_dir.join("results.jsonl"), &records_to_jsonl(&records))?;
    let rows = aggregate_by(&records, &ALL_GROUP_KEYS);
    write_file(&out_dir.join("report.csv"), &aggregate_csv(&rows))?;
    write_file(&out_dir.join("config_echo.toml"), &config.to_toml_string())?;
    if trace {
        write_file(&out_dir.join("trace.jsonl"), &trace_to_jsonl(&trace_steps))?;
    }

    print!("{}", aggregate_markdown(&rows));
    let invalid = invalid_count(&records);
    println!("episodes: {} valid, {} invalid", records.len() - invalid, invalid);
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

fn cmd_report(inputs: &[PathBuf], out: Option<&Path>, by: &[GroupKeyArg]) -> Result<(), AppError> {
    let mut records = Vec::new();
    for path in inputs {
        records.extend(read_records(path)?);
    }
    if records.is_empty() {
        return Err(AppError::Usage("no episode records in the inputs".into()));
    }
    let keys: Vec<GroupKey> = if by.is_empty() {
        ALL_GROUP_KEYS.to_vec()
    } else {
        by.iter().map(|&k| GroupKey::from(k)).collect()
    };
    let rows = aggregate_by(&records, &keys);
    print!("{}", aggregate_markdown(&rows));
    let invalid = invalid_count(&records);
    println!("episodes: {} valid, {} invalid", records.len() - invalid, invalid);

    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("report.csv"), &aggregate_csv(&rows))?;
        let buckets = init_distance_buckets(&records);
        if !buckets.is_empty() {
            write_file(&dir.join("init_distance_curve.csv"), &curve_csv(&buckets))?;
            write_file(
                &dir.join("init_distance_curve_smoothed.csv"),
                &curve_csv(&smooth_buckets(&buckets, SMOOTHING_WINDOW)),
            )?;
        }
        for (parameter, sweep_buckets) in sweep_buckets_by_parameter(&records) {
            let points = display_points(&mismatch_points(&sweep_buckets), parameter);
            write_file(
                &dir.join(format!("mismatch_{}.csv", parameter.label())),
                &mismatch_csv(&points),
            )?;
        }
        println!("report in {}", dir.display());
    }
    Ok(())
}

fn cmd_sweep(config: &RunConfig) -> Result<(), AppError> {
    let suite = config.to_suite();
    let parameter = config.sweep.parameter;
    let magnitudes = config.sweep.native_magnitudes();
    let workers = config.effective_workers();
    eprintln!(
        "sweeping {} over {} magnitudes on {} workers",
        parameter.label(),
        magnitudes.len(),
        workers
    );
    let buckets = sweep_mismatch(parameter, &magnitudes, &suite, workers);

    let out_dir = PathBuf::from(&config.out_dir);
    create_dir(&out_dir)?;
    let all_records: Vec<_> =
        buckets.iter().flat_map(|bucket| bucket.records.iter().cloned()).collect();
    write_file(&out_dir.join("sweep_results.jsonl"), &records_to_jsonl(&all_records))?;
    let points = display_points(&mismatch_points(&buckets), parameter);
    write_file(&out_dir.join("mismatch_curve.csv"), &mismatch_csv(&points))?;
    write_file(&out_dir.join("config_echo.toml"), &config.to_toml_string())?;

    print!("{}", mismatch_csv(&points));
    println!("artifacts in {}", out_dir.display());
    Ok(())
}
