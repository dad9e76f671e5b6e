use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use metasim::engine::{run_grid, run_scenario};
use metasim::{GridConfig, SampleSizeSpec, Scenario};
use metasim_cli::{config, csv, moments, svg, ConfigError};

#[derive(Parser)]
#[command(
    name = "metasim",
    version,
    about = "Meta-analysis simulation engine for binary outcomes with random study sizes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario grid and write a results CSV plus its manifest
    Run(RunArgs),
    /// Run a single scenario cell
    Cell(CellArgs),
    /// Check size-sampler moments against their analytic values
    CheckMoments(CheckMomentsArgs),
    /// Render SVG summary panels from an existing results CSV
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value config file; without it the full default grid runs
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; the manifest lands next to it
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per cell override
    #[arg(long)]
    reps: Option<u64>,
    /// Worker thread count (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// tau2 plug-in for the sample-size-weighted interval: dl, mp or reml
    #[arg(long)]
    tau2_plugin: Option<String>,
    /// Zero-cell handling: on-zero, always or none
    #[arg(long)]
    correction: Option<String>,
}

#[derive(Args)]
struct CellArgs {
    /// FIM1, FIM2, RIM1, RIM2 or URIM1
    #[arg(long)]
    mechanism: String,
    /// constant, truncated-normal or uniform
    #[arg(long, default_value = "constant")]
    size_kind: String,
    /// Number of studies
    #[arg(long)]
    k: u32,
    /// Mean study arm size
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 0.0)]
    tau2: f64,
    #[arg(long, default_value_t = 0.4)]
    pc: f64,
    /// Intercept variance for random-intercept mechanisms
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 10_000)]
    reps: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    tau2_plugin: Option<String>,
    #[arg(long)]
    correction: Option<String>,
    /// Write a 1-row CSV (plus manifest) instead of printing
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckMomentsArgs {
    /// Monte Carlo draws per sampled check
    #[arg(long, default_value_t = 200_000)]
    reps: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    /// Results CSV produced by `run` or `cell`
    #[arg(long)]
    input: PathBuf,
    /// Directory for the SVG panels
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

enum AppError {
    /// Exit code 1.
    Config(String),
    /// Exit code 2.
    Io(String),
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 1,
            AppError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => AppError::Io(e.to_string()),
            ConfigError::Parse { .. } => AppError::Config(e.to_string()),
        }
    }
}

impl From<metasim::Error> for AppError {
    fn from(e: metasim::Error) -> Self {
        AppError::Config(e.to_string())
    }
}

fn io_err(context: &str, e: std::io::Error) -> AppError {
    AppError::Io(format!("{context}: {e}"))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Cell(args) => cmd_cell(args),
        Command::CheckMoments(args) => cmd_check_moments(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

fn install_workers(workers: Option<usize>) -> Result<(), AppError> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(AppError::Config("--workers must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(format!("cannot size worker pool: {e}")))?;
    }
    Ok(())
}

fn apply_overrides(
    config: &mut GridConfig,
    seed: Option<u64>,
    reps: Option<u64>,
    tau2_plugin: &Option<String>,
    correction: &Option<String>,
) -> Result<(), AppError> {
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(reps) = reps {
        if reps < 1 {
            return Err(AppError::Config("--reps must be at least 1".to_string()));
        }
        config.reps = reps;
    }
    if let Some(p) = tau2_plugin {
        config.tau2_plugin = p.parse().map_err(AppError::Config)?;
    }
    if let Some(c) = correction {
        config.correction = c.parse().map_err(AppError::Config)?;
    }
    Ok(())
}

fn epoch_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_outputs(records: &[metasim::PerformanceRecord], config: &GridConfig, out: &PathBuf, started: u64) -> Result<(), AppError> {
    csv::write_results_file(records, out)
        .map_err(|e| io_err(&format!("cannot write {}", out.display()), e))?;
    let manifest = out.with_extension("manifest");
    let text =
        config::manifest_text(config, env!("CARGO_PKG_VERSION"), started, epoch_seconds());
    std::fs::write(&manifest, text)
        .map_err(|e| io_err(&format!("cannot write {}", manifest.display()), e))?;
    println!(
        "wrote {} record{} to {} (manifest {})",
        records.len(),
        if records.len() == 1 { "" } else { "s" },
        out.display(),
        manifest.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), AppError> {
    install_workers(args.workers)?;
    let mut config = match &args.config {
        Some(path) => config::parse_config(path)?,
        None => GridConfig::default(),
    };
    apply_overrides(&mut config, args.seed, args.reps, &args.tau2_plugin, &args.correction)?;
    let started = epoch_seconds();
    let records = run_grid(&config)?;
    write_outputs(&records, &config, &args.out, started)
}

fn cmd_cell(args: CellArgs) -> Result<(), AppError> {
    install_workers(args.workers)?;
    let mut config = GridConfig {
        k_values: vec![args.k],
        n_values: vec![args.n],
        theta_values: vec![args.theta],
        tau2_values: vec![args.tau2],
        pc_values: vec![args.pc],
        sigma2_values: vec![args.sigma2],
        mechanisms: vec![args.mechanism.parse().map_err(AppError::Config)?],
        size_kinds: vec![args.size_kind.parse().map_err(AppError::Config)?],
        reps: args.reps,
        master_seed: args.seed,
        ..GridConfig::default()
    };
    apply_overrides(&mut config, None, Some(args.reps), &args.tau2_plugin, &args.correction)?;

    let size_spec = SampleSizeSpec::new(config.size_kinds[0], args.n)?;
    let scenario = Scenario::new(
        config.mechanisms[0],
        size_spec,
        args.k,
        args.theta,
        args.tau2,
        args.pc,
        args.sigma2,
    )?;
    let started = epoch_seconds();
    let record = run_scenario(&scenario, config.reps, config.master_seed, config.settings())?;

    match &args.out {
        Some(out) => write_outputs(&[record], &config, out, started),
        None => {
            print_record(&record);
            Ok(())
        }
    }
}

fn print_record(r: &metasim::PerformanceRecord) {
    println!(
        "mechanism {}  size {}  K {}  n {}  theta {}  tau2 {}  pC {}{}  M {}",
        r.mechanism.label(),
        r.size_kind.label(),
        r.k,
        r.center,
        csv::fmt_g6(r.theta),
        csv::fmt_g6(r.tau2),
        csv::fmt_g6(r.p_c),
        r.sigma2.map(|s| format!("  sigma2 {}", csv::fmt_g6(s))).unwrap_or_default(),
        r.m,
    );
    println!(
        "{:<6} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "method", "mean_tau2", "bias_tau2", "mean_theta", "bias_theta", "coverage"
    );
    for (i, method) in ["dl", "mp", "reml", "ssw"].iter().enumerate() {
        let (mean_tau2, bias_tau2) = if i < 3 {
            (csv::fmt_g6(r.mean_tau2[i]), csv::fmt_g6(r.bias_tau2(i)))
        } else {
            ("-".to_string(), "-".to_string())
        };
        println!(
            "{:<6} {:>12} {:>12} {:>12} {:>12} {:>10}",
            method,
            mean_tau2,
            bias_tau2,
            csv::fmt_g6(r.mean_theta[i]),
            csv::fmt_g6(r.bias_theta(i)),
            csv::fmt_g6(r.coverage[i]),
        );
    }
    println!("reml nonconverged: {}", r.reml_nonconv);
}

fn cmd_check_moments(args: CheckMomentsArgs) -> Result<(), AppError> {
    if args.reps < 2 {
        return Err(AppError::Config("--reps must be at least 2".to_string()));
    }
    let checks = moments::moment_battery(args.reps, args.seed);
    let stdout = std::io::stdout();
    moments::render_report(&checks, &mut stdout.lock())
        .map_err(|e| io_err("cannot write report", e))?;
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), AppError> {
    let rows = csv::read_results(&args.input)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| io_err(&format!("cannot create {}", args.out_dir.display()), e))?;
    let written = svg::plot_summary(&rows, &args.out_dir)
        .map_err(|e| io_err("cannot write panel", e))?;
    println!("wrote {} panel{}", written.len(), if written.len() == 1 { "" } else { "s" });
    Ok(())
}
