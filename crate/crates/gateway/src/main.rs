use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Result;
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use smartcity_core::incident::DEFAULT_SMOOTHING_ALPHA;
use smartcity_core::config::PlatformConfig;
use smartcity_gateway::commands;

#[derive(Parser)]
#[command(name = "smartcity", version, about = "Smart-city mobility platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Write simulated meter events, reports and a labeled corpus.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        corpus_size: usize,
    },
    /// Train the incident classifier from a labeled corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SMOOTHING_ALPHA)]
        alpha: f64,
    },
    /// Run a scenario file and write its report.
    Scenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { config, listen } => {
            let cfg = PlatformConfig::load(&config)?;
            let platform = Arc::new(commands::load_platform(&config)?);
            for w in platform.graph().warnings() {
                tracing::warn!("map: {w}");
            }
            let addr = listen.unwrap_or_else(|| cfg.listen.clone());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = smartcity_gateway::bind(&addr).await?;
                tracing::info!("listening on {}", listener.local_addr()?);
                smartcity_gateway::serve(
                    listener,
                    platform,
                    &cfg.cors_origins,
                    smartcity_gateway::shutdown_signal(),
                )
                .await
            })
        }
        Command::Simulate {
            config,
            out,
            corpus_size,
        } => {
            let s = commands::simulate(&config, &out, corpus_size)?;
            println!(
                "wrote {} parking events, {} reports, {} corpus documents to {}",
                s.parking_events,
                s.reports,
                s.corpus,
                out.display()
            );
            Ok(())
        }
        Command::Train { corpus, out, alpha } => {
            let (labels, vocab) = commands::train(&corpus, &out, alpha)?;
            println!("model with {labels} labels and {vocab} tokens written to {}", out.display());
            Ok(())
        }
        Command::Scenario {
            config,
            scenario,
            report,
        } => {
            let r = commands::scenario(&config, &scenario, &report)?;
            println!("{} queries answered; report written to {}", r.queries.len(), report.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
