use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csi_core::analytics::{ReportOptions, Sides};
use csi_gateway::commands;
use csi_gateway::{Overrides, ServeConfig, Server};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "csi", version, about = "Networked small-group deliberation sessions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a live session over websockets and host the web client.
    Serve {
        /// Server configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Listen address, e.g. 127.0.0.1:8080. Overrides the config file.
        #[arg(long, env = "CSI_LISTEN")]
        listen: Option<String>,
        /// Remote distiller endpoint. Switches the relay to the remote distiller.
        #[arg(long, env = "CSI_DISTILLER_URL")]
        distiller_url: Option<String>,
    },
    /// Run a bot scenario and write events.ndjson and report.json.
    Simulate {
        /// Scenario configuration (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Replaces the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score group, crowd and individual rosters over a dataset directory.
    Analyze {
        /// Dataset directory with one subdirectory per session.
        #[arg(long)]
        data: PathBuf,
        /// Report path (JSON); a rendered table is written beside it as .txt.
        #[arg(long)]
        out: PathBuf,
        /// Bootstrap resamples.
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        /// Bootstrap confidence level.
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        /// Bootstrap seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use one-sided (greater) paired t-tests.
        #[arg(long)]
        one_sided: bool,
    },
    /// Write a synthetic dataset of simulated sessions for `analyze`.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of sessions.
        #[arg(long, default_value_t = 11)]
        sessions: usize,
        /// Bots per session.
        #[arg(long, default_value_t = 25)]
        bots: usize,
        /// Base seed; session i uses seed + i.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Box<dyn std::error::Error>> {
    match cmd {
        Cmd::Serve {
            config,
            listen,
            distiller_url,
        } => {
            let config = ServeConfig::load(&config, &Overrides { listen, distiller_url })?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let server = Server::bind(&config).await?;
                tracing::info!("listening on {}", server.local_addr()?);
                let session = server
                    .run(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                tracing::info!("stopped after {} events", session.log().len());
                Ok::<_, Box<dyn std::error::Error>>(())
            })?;
        }
        Cmd::Simulate { scenario, seed, out } => {
            let report = commands::simulate(&scenario, seed, &out)?;
            println!(
                "{}: finished={} agent_messages={} relay_deliveries={}",
                report.session_id, report.finished, report.agent_messages, report.relay_deliveries
            );
        }
        Cmd::Analyze {
            data,
            out,
            resamples,
            confidence,
            seed,
            one_sided,
        } => {
            let options = ReportOptions {
                resamples,
                confidence,
                seed,
                sides: if one_sided { Sides::Greater } else { Sides::TwoSided },
            };
            let report = commands::analyze(&data, &out, options)?;
            print!("{}", report.render_table());
        }
        Cmd::Synth {
            out,
            sessions,
            bots,
            seed,
        } => commands::synth(&out, sessions, bots, seed)?,
    }
    Ok(())
}
