//! `foodcast`: the batch pipeline as subcommands.
//!
//! Exit status: 0 success, 1 usage, 2 data or validation, 3 numerical.
//! Failures print one line `error[<class>]: <reason>` on stderr.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use foodcast_core::ErrorKind;

use crate::config::{RunConfig, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] foodcast_core::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn class(&self) -> (&'static str, u8) {
        match self {
            CliError::Usage(_) => ("usage", 1),
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => ("usage", 1),
                ErrorKind::Data => ("data", 2),
                ErrorKind::Numerical => ("numerical", 3),
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "foodcast",
    version,
    about = "Risk-ranked food inspection scheduling and audits"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Flat key = value file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Seed for every random draw [default: 7]
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Inspections per simulated day [default: test size / distinct dates]
    #[arg(long, global = true)]
    capacity: Option<String>,
    /// KDE bandwidth h in meters [default: 1000]
    #[arg(long, global = true)]
    bandwidth_meters: Option<String>,
    /// KDE trailing window in days [default: 90]
    #[arg(long, global = true)]
    window_days: Option<String>,
    /// Pre/post comparison split [default: 2015-01-01]
    #[arg(long, global = true, value_name = "DATE")]
    split_date: Option<String>,
    /// Inspections on or after this date are dropped [default: 2018-07-01]
    #[arg(long, global = true, value_name = "DATE")]
    cutoff_date: Option<String>,
    /// Default age/alcohol/tobacco to 0 for establishments without a license row
    #[arg(long, global = true)]
    allow_missing_license: bool,
    /// usual | random | best | worst | model [default: model]
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Counterfactual mode: zero_out | reference_mean [default: zero_out]
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Directory holding inspections.csv, licenses.csv, weather.csv, events.csv
    #[arg(long, global = true, value_name = "DIR")]
    input: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    inspections: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    licenses: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    weather: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    events: Option<String>,
    /// features.csv from `featurize`
    #[arg(long, global = true, value_name = "FILE")]
    features: Option<String>,
    /// A model.json
    #[arg(long, global = true, value_name = "FILE")]
    model: Option<String>,
    /// sanitarian_clusters.csv from `cluster-sanitarians`
    #[arg(long, global = true, value_name = "FILE")]
    clusters: Option<String>,
    /// scores.csv from `score`
    #[arg(long, global = true, value_name = "FILE")]
    scores: Option<String>,
    #[arg(long, global = true, value_name = "DATE")]
    train_start: Option<String>,
    #[arg(long, global = true, value_name = "DATE")]
    train_end: Option<String>,
    #[arg(long, global = true, value_name = "DATE")]
    test_start: Option<String>,
    #[arg(long, global = true, value_name = "DATE")]
    test_end: Option<String>,
}

impl GlobalArgs {
    fn overlay(&self, s: &mut Settings) {
        let pairs = [
            ("out", &self.out),
            ("seed", &self.seed),
            ("capacity", &self.capacity),
            ("bandwidth_meters", &self.bandwidth_meters),
            ("window_days", &self.window_days),
            ("split_date", &self.split_date),
            ("cutoff_date", &self.cutoff_date),
            ("strategy", &self.strategy),
            ("mode", &self.mode),
            ("input", &self.input),
            ("inspections", &self.inspections),
            ("licenses", &self.licenses),
            ("weather", &self.weather),
            ("events", &self.events),
            ("features", &self.features),
            ("model", &self.model),
            ("clusters", &self.clusters),
            ("scores", &self.scores),
            ("train_start", &self.train_start),
            ("train_end", &self.train_end),
            ("test_start", &self.test_start),
            ("test_end", &self.test_end),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                s.set(k, v.clone());
            }
        }
        if self.allow_missing_license {
            s.set("allow_missing_license", "true");
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the four inputs and write them back in canonical form
    Ingest {
        /// Convert a portal "Food Inspections" export instead
        #[arg(long, value_name = "FILE")]
        portal: Option<PathBuf>,
    },
    /// Build features.csv for the train and test windows
    Featurize,
    /// Fit the logistic model on the training rows of features.csv
    Train,
    /// Fit per-sanitarian indicators, cluster them and refit with cluster indicators
    ClusterSanitarians {
        #[arg(long, default_value_t = 6)]
        k: usize,
    },
    /// Score a split of features.csv with a model
    Score {
        /// train | test | all
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Simulate the inspection schedule for scored instances
    Simulate {
        /// Seeds averaged for the random baseline
        #[arg(long, default_value_t = 100)]
        replicates: usize,
    },
    /// Audits of hit rates and of the sanitarian feature
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Generate a synthetic city with planted effects
    Synth {
        #[arg(long)]
        n_inspections: Option<usize>,
        #[arg(long)]
        n_establishments: Option<usize>,
    },
    /// Run featurize through simulate plus every audit into one directory
    Report {
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Hit rate per sanitarian cluster
    HitRates {
        /// Inspection type or "all"
        #[arg(long, default_value = "canvass")]
        kind: String,
    },
    /// Rate of each critical code per cluster
    CodesByCluster {
        #[arg(long, default_value = "canvass")]
        kind: String,
    },
    /// Calendar-month hit rates
    Monthly {
        /// One critical code; any critical code when absent
        #[arg(long)]
        code: Option<i64>,
        #[arg(long, default_value = "canvass")]
        kind: String,
    },
    /// Monthly rate distributions before and after --split-date
    Prepost,
    /// Chain-controlled association of code citations with monthly temperature
    Seasonal {
        /// Number of largest chains kept
        #[arg(long, default_value_t = 51)]
        chains: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3])]
        codes: Vec<i64>,
    },
    /// Rescore the test split without the sanitarian cluster contribution
    Counterfactual {
        /// Extra schedule position for crossing counts
        #[arg(long)]
        threshold: Option<usize>,
    },
}

fn fail(e: &CliError) -> ExitCode {
    let (class, code) = e.class();
    let msg = e.to_string().replace(['\n', '\r'], " ");
    eprintln!("error[{class}]: {msg}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut settings = match &cli.global.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    cli.global.overlay(&mut settings);
    let cfg = RunConfig::resolve(settings)?;
    commands::run(&cli.command, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail(&CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
