//! `skyconst`: design, analyze and simulate spatial constellations.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or input,
//! 3 scenario ended without recovery, 4 numerical guard tripped.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skyconst::scenario::ScenarioStatus;

use crate::config::RunConfig;
use crate::output::{emit, Provenance};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] skyconst::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use skyconst::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::SearchBudgetExceeded { .. } | E::ThresholdViolated { .. } | E::NotSettled { .. } => 4,
                E::Io(_) => 1,
                _ => 2,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "skyconst", version, about = "Spatial constellations for UAV channel signaling")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set hover.sigma_rho_m=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a constellation and write its JSON document.
    Design,
    /// Analytic symbol error probability over lattices and spacings.
    Pe,
    /// Monte Carlo symbol error rate next to the analytic value.
    Montecarlo,
    /// Localize UAVs in a point-cloud CSV.
    Localize {
        #[arg(long, short)]
        input: PathBuf,
    },
    /// Synthesize a point-cloud CSV.
    Synth,
    /// Mean travel time over N and spacing sweeps.
    Traveltime,
    /// Exhaustive against heuristic search per grid.
    CompareSearch,
    /// Jamming recovery timeline.
    Scenario {
        /// Constellation document; overrides `scenario.constellation_file`.
        #[arg(long)]
        constellation: Option<PathBuf>,
        /// Where to write the JSON run report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let (text, origin) = match &cli.config {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => ("{}".to_string(), "defaults".to_string()),
    };
    let mut cfg = config::load(&text, &origin, &cli.overrides)?;
    cfg.validate()?;
    if cfg.seed.is_none() {
        cfg.seed = Some(rand::random());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let cfg = load_config(cli)?;
    let prov = Provenance {
        config_sha256: cfg.sha256(),
        seed: cfg.seed.expect("seed resolved"),
    };
    let out = cli.out.as_deref();
    let body = match &cli.command {
        Command::Design => commands::design_cmd(&cfg, &prov)?,
        Command::Pe => commands::pe_cmd(&cfg, &prov)?,
        Command::Montecarlo => commands::montecarlo_cmd(&cfg, &prov)?,
        Command::Localize { input } => commands::localize_cmd(&cfg, &prov, input)?,
        Command::Synth => commands::synth_cmd(&cfg, &prov)?,
        Command::Traveltime => commands::traveltime_cmd(&cfg, &prov)?,
        Command::CompareSearch => commands::compare_cmd(&cfg, &prov)?,
        Command::Scenario { constellation, report } => {
            let res = commands::scenario_cmd(&cfg, &prov, constellation.as_deref())?;
            if let Some(path) = report {
                emit(Some(path), &res.report)?;
            }
            emit(out, &res.timeline)?;
            eprint!("{}", res.summary);
            return Ok(if res.status == ScenarioStatus::Completed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            });
        }
    };
    emit(out, &body)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
