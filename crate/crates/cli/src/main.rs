use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfl_cli::{PipelineError, RunConfig};

/// Member-flow analytics over daily buy/sell inventory panels.
#[derive(Parser)]
#[command(name = "mfl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Input directory with the CSV bundle (not needed by `synth`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// One-way flow ratio threshold for directionality.
    #[arg(long, default_value_t = 0.2)]
    theta: f64,
    /// Herding significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Correlation threshold for network edges.
    #[arg(long = "edge-threshold", default_value_t = 0.015)]
    edge_threshold: f64,
    /// Members trading under this fraction of the mean volume are excluded.
    #[arg(long = "min-volume-ratio", default_value_t = 0.1)]
    min_volume_ratio: f64,
    /// Seed for community detection and synthesis.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Restrict to one market-cap decile (subcommand default otherwise).
    #[arg(long)]
    decile: Option<u8>,
    /// Restrict to one calendar year.
    #[arg(long)]
    year: Option<i32>,
    /// External market index CSV (date,return) for the regression.
    #[arg(long = "market-index")]
    market_index: Option<PathBuf>,
    /// Risk-free CSV (date,annual_yield); daily rate is yield/247.
    #[arg(long)]
    riskfree: Option<PathBuf>,
    /// Use log returns instead of simple returns.
    #[arg(long = "log-returns")]
    log_returns: bool,
    /// Use the two-sided binomial tail test instead of the point-mass rule.
    #[arg(long = "two-sided-herding")]
    two_sided_herding: bool,
    /// Project raw net flows (not standardized ones) onto the eigenvector.
    #[arg(long = "raw-factor")]
    raw_factor: bool,
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Market spec file (plain-text key = value); defaults baked in.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Validate a CSV bundle and emit panel_summary.json.
    Ingest(CommonArgs),
    /// Generate a synthetic market bundle with planted behaviors.
    Synth(SynthArgs),
    /// Classify members against investor types (member_profiles.csv).
    Classify(CommonArgs),
    /// Directionality and trend per entity (behavior_scores.csv).
    Measures(CommonArgs),
    /// Herding flags and herding direction per group.
    Herding(CommonArgs),
    /// Member correlation network with communities (network.json).
    Network(CommonArgs),
    /// Eigenvalue spectra, factors and decile summary.
    Rmt(CommonArgs),
    /// Pooled excess-return regression (regression.json/.txt).
    Regress(CommonArgs),
    /// Collate everything into summary.json.
    Report(CommonArgs),
    /// Run the full pipeline.
    All(CommonArgs),
}

fn to_config(args: &CommonArgs, needs_input: bool) -> Result<RunConfig, PipelineError> {
    let input = match (&args.input, needs_input) {
        (Some(p), _) => p.clone(),
        (None, false) => PathBuf::new(),
        (None, true) => {
            return Err(PipelineError::Config(
                "--input is required for this subcommand".into(),
            ))
        }
    };
    let mut cfg = RunConfig::new(input, args.out.clone());
    cfg.theta = args.theta;
    cfg.alpha = args.alpha;
    cfg.edge_threshold = args.edge_threshold;
    cfg.min_volume_ratio = args.min_volume_ratio;
    cfg.seed = args.seed;
    cfg.decile = args.decile;
    cfg.year = args.year;
    cfg.market_index = args.market_index.clone();
    cfg.riskfree = args.riskfree.clone();
    cfg.log_returns = args.log_returns;
    cfg.two_sided_herding = args.two_sided_herding;
    cfg.raw_factor = args.raw_factor;
    Ok(cfg)
}

fn dispatch(command: &Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest(a) => mfl_cli::run_ingest(&to_config(a, true)?),
        Command::Synth(a) => mfl_cli::run_synth(&to_config(&a.common, false)?, a.spec.as_deref()),
        Command::Classify(a) => mfl_cli::run_classify(&to_config(a, true)?),
        Command::Measures(a) => mfl_cli::run_measures(&to_config(a, true)?),
        Command::Herding(a) => mfl_cli::run_herding(&to_config(a, true)?),
        Command::Network(a) => mfl_cli::run_network(&to_config(a, true)?),
        Command::Rmt(a) => mfl_cli::run_rmt(&to_config(a, true)?),
        Command::Regress(a) => mfl_cli::run_regress(&to_config(a, true)?),
        Command::Report(a) => mfl_cli::run_report(&to_config(a, true)?),
        Command::All(a) => mfl_cli::run_all(&to_config(a, true)?),
    }
}

fn main() -> ExitCode {
    // MFL_THREADS caps the worker pool; unset uses all cores. Results do
    // not depend on the thread count.
    if let Ok(threads) = std::env::var("MFL_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "module": e.module(), "error": e.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}
