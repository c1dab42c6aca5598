//! Batch entry points behind `simulate`, `analyze` and `synth`.

use std::path::{Path, PathBuf};

use csi_core::analytics::{build_report, AnalyticsError, AnalyticsReport, ReportOptions};
use csi_core::io::files::{load_dataset, load_scenario, write_dataset, write_report, write_simulation, FileError};
use csi_core::sim::{run_scenario, synthetic_dataset, SimError, SimulationReport};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("{path}: {source}")]
    Sim {
        path: PathBuf,
        #[source]
        source: SimError,
    },
    #[error("simulation failed: {0}")]
    Synth(#[source] SimError),
    #[error("{path}: {source}")]
    Analytics {
        path: PathBuf,
        #[source]
        source: AnalyticsError,
    },
}

/// Runs a scenario with its seed replaced by `seed` and writes
/// `<out>/events.ndjson` and `<out>/report.json`.
pub fn simulate(scenario: &Path, seed: Option<u64>, out: &Path) -> Result<SimulationReport, CommandError> {
    let mut config = load_scenario(scenario)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let sim_err = |source| CommandError::Sim {
        path: scenario.to_owned(),
        source,
    };
    let (log, report) = run_scenario(&config).map_err(sim_err)?;
    write_simulation(out, &log, &report)?;
    Ok(report)
}

/// Builds the report for every session under `data` and writes `out` plus
/// a `.txt` table beside it.
pub fn analyze(data: &Path, out: &Path, options: ReportOptions) -> Result<AnalyticsReport, CommandError> {
    let datasets = load_dataset(data)?;
    let report = build_report(&datasets, options).map_err(|source| CommandError::Analytics {
        path: data.to_owned(),
        source,
    })?;
    write_report(out, &report)?;
    Ok(report)
}

/// Writes a synthetic dataset of simulated sessions in the `analyze` layout.
pub fn synth(out: &Path, sessions: usize, bots: usize, seed: u64) -> Result<(), CommandError> {
    let datasets = synthetic_dataset(sessions, bots, seed).map_err(CommandError::Synth)?;
    std::fs::create_dir_all(out).map_err(|source| FileError::Io {
        path: out.to_owned(),
        source,
    })?;
    write_dataset(out, &datasets)?;
    Ok(())
}
