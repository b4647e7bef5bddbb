mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use ardfuse::{Date, ErrorClass, KernelFamily};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "ardfuse",
    version,
    about = "ARD Gaussian Process forecasting over fused market data"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature matrix and, for 120+ days, a synthetic
    /// four-domain market with a ready-to-run config.
    Gen(GenArgs),
    /// Compute features from raw CSVs.
    Features(FeaturesArgs),
    /// Fit an ARD GP with an injected noise column and rank features.
    Relevance(RelevanceArgs),
    /// Fit a GP on the training rows and save a JSON model snapshot.
    Train(TrainArgs),
    /// Rolling-window one-step forecasts over the test rows.
    Forecast(ForecastArgs),
    /// Rolling forecasts for a range of window lengths.
    Sweep(SweepArgs),
    /// AR or Kalman-filter AR baseline forecasts of a return series.
    Benchmark(BenchmarkArgs),
    /// Correlation, MAD and NRMSE of forecasts against observations.
    Report(ReportArgs),
    /// Grid of predictive means over two features of a saved model.
    Surface(SurfaceArgs),
    /// Every stage end to end from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 628)]
    days: usize,
    #[arg(long, default_value_t = 3)]
    relevant: usize,
    #[arg(long, default_value_t = 3)]
    irrelevant: usize,
    #[arg(long, default_value_t = 4.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Domain {
    Technical,
    Sentiment,
    Options,
    Broker,
    /// Every domain given, plus the combined matrix.
    All,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long, value_enum, default_value_t = Domain::All)]
    domain: Domain,
    /// Take data paths and the split from a run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    sentiment: Option<PathBuf>,
    #[arg(long)]
    options: Option<PathBuf>,
    #[arg(long)]
    brokers: Option<PathBuf>,
    /// Calibrate option decay parameters on dates up to --train-end.
    #[arg(long)]
    fit: bool,
    #[arg(long)]
    gamma_d: Option<f64>,
    #[arg(long)]
    lambda_v: Option<f64>,
    #[arg(long)]
    gamma_v: Option<f64>,
    #[arg(long)]
    train_end: Option<Date>,
    /// A CSV path for a single domain, a directory for `all`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Combined feature matrix (`date,<features>,target`).
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "matern32")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, value_enum, default_value_t = DistanceArg::Euclidean)]
    distance: DistanceArg,
    /// Last training date; every row when absent.
    #[arg(long)]
    train_end: Option<Date>,
    /// Columns to use; all when absent.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistanceArg {
    Euclidean,
    Manhattan,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Serial,
    Parallel,
}

#[derive(Args)]
struct RelevanceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Refit on the salient features this many times.
    #[arg(long, default_value_t = 1)]
    prune_iterations: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Append the noise baseline column before fitting.
    #[arg(long)]
    noise_baseline: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 250)]
    window: usize,
    /// Last test date; the end of the data when absent.
    #[arg(long)]
    test_end: Option<Date>,
    #[arg(long, value_enum, default_value_t = ModeArg::Serial)]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `lo:hi:step` or a comma-separated list.
    #[arg(long, default_value = "150:500:25")]
    windows: String,
    #[arg(long)]
    test_end: Option<Date>,
    #[arg(long, value_enum, default_value_t = ModeArg::Serial)]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineModel {
    Ar,
    Kf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    model: BaselineModel,
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Rolling refit window for `ar`; without it the AR is fitted once on
    /// the rows up to --train-end.
    #[arg(long)]
    window: Option<usize>,
    /// `date,<value>` CSV of returns.
    #[arg(long)]
    returns: PathBuf,
    /// Value column; the first after `date` when absent.
    #[arg(long)]
    column: Option<String>,
    #[arg(long)]
    train_end: Option<Date>,
    /// Kalman state noise; grid-tuned on the training rows when absent.
    #[arg(long)]
    q: Option<f64>,
    /// Kalman observation noise; grid-tuned on the training rows when absent.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    forecasts: PathBuf,
    #[arg(long)]
    observed: PathBuf,
    #[arg(long, default_value = "forecast")]
    forecast_column: String,
    #[arg(long, default_value = "observed")]
    observed_column: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SurfaceArgs {
    /// Model snapshot written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long, default_value_t = 20)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    train_end: Option<Date>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Features(a) => commands::features(a),
        Command::Relevance(a) => commands::relevance(a),
        Command::Train(a) => commands::train(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Report(a) => commands::report(a),
        Command::Surface(a) => commands::surface(a),
        Command::Run(a) => commands::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Numerical => 3,
                ErrorClass::Io => 4,
            })
        }
    }
}
