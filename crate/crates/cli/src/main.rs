mod commands;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "stcif",
    version = concat!(env!("CARGO_PKG_VERSION"), " (file format 1)"),
    about = "Fit, simulate and diagnose endemic/epidemic spatio-temporal point process models",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    /// Print the JSON schema of an input format and exit.
    #[arg(long, value_name = "FORMAT", num_args = 0..=1, default_missing_value = "all")]
    schema: Option<SchemaFormat>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemaFormat {
    All,
    Events,
    Grid,
    Config,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Configuration file (model, parameters, search lattice, simulation).
    #[arg(long)]
    pub config: PathBuf,
    /// Grid file (tiles, intervals, offset, covariates).
    #[arg(long)]
    pub grid: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Random seed; defaults to the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for likelihood evaluation and replicate simulation.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Maximum-likelihood fit; writes fit.json and table.txt.
    Fit {
        #[arg(long)]
        events: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulates from the configured parameters; writes events.json, or
    /// events_<r>.json for several replicates.
    Simulate {
        /// Observed events, used for empirical mark resampling.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Simulation horizon; defaults to the configuration, then the grid end.
        #[arg(long)]
        end: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Residuals, KS test and incidence envelope; writes residuals.csv,
    /// cdf.csv, ks.json, envelope.csv and envelope.json.
    Diagnose {
        #[arg(long)]
        events: PathBuf,
        /// Simulations for the incidence envelope.
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Two-stage AIC model search; writes ranking.csv and models/<id>/fit.json.
    Search {
        #[arg(long)]
        events: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduction numbers with parametric bootstrap intervals; writes mu.json.
    Repro {
        #[arg(long)]
        events: PathBuf,
        /// Parameter draws for the intervals.
        #[arg(long, default_value_t = stcif_core::diagnostics::DEFAULT_DRAWS)]
        draws: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic events with source attribution; writes events.json.
    Synth {
        #[arg(long)]
        end: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(format) = cli.schema {
        let all = stcif_core::io::schemas();
        let value = match format {
            SchemaFormat::All => all,
            SchemaFormat::Events => all["events"].clone(),
            SchemaFormat::Grid => all["grid"].clone(),
            SchemaFormat::Config => all["config"].clone(),
        };
        print!("{}", stcif_core::io::to_json_string(&value));
        return Ok(());
    }
    match cli.command {
        Some(command) => commands::dispatch(command),
        None => Err(CliError::Usage("no subcommand given; see --help".into())),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
