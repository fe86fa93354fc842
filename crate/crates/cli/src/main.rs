use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use mkdvlab::config::{ExperimentConfig, Kind, Overrides, SnapshotFormat};
use mkdvlab::{execute, Status};

/// Runs one experiment of the mKdV double-soliton laboratory.
///
/// Exit status: 0 when the run completes and all checks pass, 2 when a
/// check fails, 1 on an execution error.
#[derive(Debug, Parser)]
#[command(name = "mkdvlab", version)]
struct Cli {
    kind: Kind,
    /// JSON experiment config; the built-in default for KIND when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scale parameter; replaces any h_list from the config.
    #[arg(long)]
    h: Option<f64>,
    /// Catalogue potential, listex1 to listex4.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Snapshot file format for simulate.
    #[arg(long, value_enum)]
    format: Option<SnapshotFormat>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            anyhow::ensure!(
                cfg.kind == cli.kind,
                "config kind {:?} does not match the requested {:?}",
                cfg.kind.name(),
                cli.kind.name()
            );
            cfg
        }
        None => ExperimentConfig::default_for(cli.kind),
    };
    Overrides {
        h: cli.h,
        potential: cli.potential.clone(),
        grid_n: cli.grid_n,
        out: cli.out.clone(),
        seed: cli.seed,
        format: cli.format,
    }
    .apply(&mut cfg);
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| {
        if cli.print_config {
            let _ = writeln!(std::io::stdout(), "{}", cfg.to_json());
            return Ok(Status::Ok);
        }
        let status = execute(&cfg)?;
        let _ = writeln!(std::io::stdout(), "{} run written to {} ({status:?})", cfg.kind.name(), cfg.out.display());
        Ok(status)
    });
    match result {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
