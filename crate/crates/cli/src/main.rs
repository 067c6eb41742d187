mod commands;
mod config;
mod error;
mod selfcheck;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use ffm::evaluate::ModelKind;
use ffm::forecast::DemandStrategy;
use log::error;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "ffm",
    version,
    about = "Functional factor model for electricity spot prices"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Directory with prices.csv, demand.csv and optionally holidays.txt.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// First day of the forecast sample.
    #[arg(long, global = true)]
    forecast_start: Option<NaiveDate>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Ar,
    Mr,
}

impl From<Baseline> for ModelKind {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::Ar => ModelKind::Ar,
            Baseline::Mr => ModelKind::Mr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Persistence,
    Ideal,
}

impl From<Strategy> for DemandStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Persistence => DemandStrategy::Persistence,
            Strategy::Ideal => DemandStrategy::Ideal,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its ground truth.
    Simulate {
        #[arg(long)]
        days: Option<usize>,
    },
    /// Fit curves, basis and scores on the learning sample.
    Fit {
        /// Number of factors (selected by AIC when absent).
        #[arg(long)]
        k: Option<usize>,
        /// Also fit and write a classical baseline.
        #[arg(long, value_enum)]
        baseline: Vec<Baseline>,
    },
    /// Hourly price forecasts from fitted artifacts.
    Forecast {
        /// Directory of `fit` artifacts (default: the output directory).
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Forecast origin (default: the last fitted day).
        #[arg(long)]
        origin: Option<NaiveDate>,
        #[arg(long, value_enum)]
        strategy: Vec<Strategy>,
        #[arg(long)]
        max_horizon: Option<usize>,
    },
    /// Rolling-origin forecast study.
    Evaluate {
        /// Run the embedded invariant checks; exit 1 if any fails.
        #[arg(long)]
        self_check: bool,
        /// Baselines to compare against (default: from the configuration).
        #[arg(long, value_enum)]
        baseline: Vec<Baseline>,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
    },
    /// Cross-regress bases fitted on subsets (`lo:hi` as indices or dates).
    ValidateSpan {
        #[arg(long = "subset", required = true)]
        subsets: Vec<String>,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Granger tests of the score ratio against an exogenous series.
    Granger {
        /// CSV with `day_index,value` or `date,value` columns.
        #[arg(long)]
        exog: PathBuf,
        #[arg(long, default_value_t = 10)]
        max_lag: usize,
        /// Score artifact (default: scores.json in the output directory).
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, r| writeln!(buf, "[{}] {}", r.level(), r.args()))
        .init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(d) = cli.data {
        cfg.data.dir = Some(d);
    }
    if let Some(d) = cli.forecast_start {
        cfg.data.forecast_start = Some(d);
    }
    match &cli.command {
        Command::Simulate { days: Some(n) } => cfg.simulate.days = *n,
        Command::Fit { k, .. } => {
            if k.is_some() {
                cfg.model.k = *k;
            }
        }
        Command::Forecast {
            max_horizon: Some(h),
            ..
        } => cfg.forecast.max_horizon = *h,
        Command::Evaluate {
            baseline, horizons, ..
        } => {
            if !baseline.is_empty() {
                cfg.study.models = std::iter::once(ModelKind::Ffm)
                    .chain(baseline.iter().map(|&b| b.into()))
                    .collect();
            }
            if !horizons.is_empty() {
                cfg.study.horizons = horizons.clone();
            }
        }
        _ => {}
    }
    cfg.validate()?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Compute(format!("worker pool: {e}")))?;
    }
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg, out),
        Command::Fit { baseline, .. } => {
            let kinds: Vec<ModelKind> = baseline.into_iter().map(Into::into).collect();
            commands::fit(&cfg, out, &kinds)
        }
        Command::Forecast {
            artifacts,
            origin,
            strategy,
            ..
        } => {
            let strategies: Vec<DemandStrategy> = if strategy.is_empty() {
                vec![DemandStrategy::Persistence, DemandStrategy::Ideal]
            } else {
                strategy.into_iter().map(Into::into).collect()
            };
            let artifacts = artifacts.unwrap_or_else(|| out.to_path_buf());
            commands::forecast(&cfg, out, &artifacts, origin, &strategies)
        }
        Command::Evaluate { self_check, .. } => commands::evaluate(&cfg, out, self_check),
        Command::ValidateSpan { subsets, k } => commands::validate_span(&cfg, out, &subsets, k),
        Command::Granger {
            exog,
            max_lag,
            scores,
        } => {
            let scores = scores.unwrap_or_else(|| out.join(commands::SCORES_FILE));
            commands::granger(&cfg, out, &scores, &exog, max_lag)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
