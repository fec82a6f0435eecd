//! `hbt`: reproduces the intensity-correlation precision studies from a
//! TOML configuration, writing CSV and optional SVG.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] hbt_core::error::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn section(section: &str, e: hbt_core::error::Error) -> Self {
        CliError::Config(format!("{section}: {e}"))
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hbt", version, about = "Source-size precision from higher-order intensity correlations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: table1, table2, fig3, fig4, fig5, fig6 or fig7.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Master seed, overriding run.seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory, overriding run.output; created when missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
    /// Also render SVG plots.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one frame set and write it with its metadata sidecar.
    Simulate,
    /// Monte Carlo maximum-likelihood study.
    Study,
    /// Bound on the spread of â against reference separation d.
    ScanD,
    /// Bound on var(â) against detector noise ς for each ν.
    ScanSigma,
    /// Analytic correlation curves along the scan axis.
    Curves,
    /// Maximum-likelihood estimate from one frame file.
    Estimate {
        /// Frame file written by `simulate`.
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = match (&common.config, &common.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
            ExperimentConfig::parse(&text).map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("{}: {}", path.display(), msg.trim_end())),
                other => other,
            })?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    if let Some(out) = &common.out {
        config.run.output = out.clone();
    }
    config.run.svg |= common.svg;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.common.threads {
        if k == 0 {
            return Err(CliError::Config("--threads: need at least one thread".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config = load(&cli.common)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let out = &config.run.output;
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let written = match &cli.command {
        Command::Simulate => commands::simulate(&config)?,
        Command::Study => commands::study(&config)?,
        Command::ScanD => commands::scan_d(&config)?,
        Command::ScanSigma => commands::scan_sigma(&config)?,
        Command::Curves => commands::curves(&config)?,
        Command::Estimate { data } => commands::estimate(&config, data)?,
        Command::ShowConfig => unreachable!(),
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
