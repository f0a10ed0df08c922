use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use commex_harness::commands::{read_jsonl, ScriptedCommand};
use commex_harness::config::{parse_override, ExperimentConfig};
use commex_harness::serve::{self, ServeOptions};
use commex_harness::{export, oracle, replay, run_experiment, RunOptions};

#[derive(Parser)]
#[command(name = "commex", version, about = "Run, replay, steer and export cultural-evolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Override a config key, e.g. `--set world.width=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replace an existing run directory.
    #[arg(long)]
    force: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let overrides = self.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(ExperimentConfig::load(&self.config, &overrides)?)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute an experiment and write its run directory.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Line-delimited `{"seed"?, "at", "command"}` records applied at
        /// their boundaries.
        #[arg(long)]
        commands: Option<PathBuf>,
    },
    /// Re-execute a run directory and compare it record by record.
    Replay { run: PathBuf },
    /// Run an experiment live behind the HTTP steering endpoints.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        /// Minimum wall time per iteration, in milliseconds.
        #[arg(long, default_value_t = 50)]
        tick_ms: u64,
        #[arg(long)]
        start_paused: bool,
    },
    /// Write `iteration,value` CSV files for metric series.
    Export {
        run: PathBuf,
        /// Series names; lists the available ones when omitted.
        series: Vec<String>,
        /// Output directory; defaults to `<run>/plots`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print reference values from exhaustive enumeration.
    Oracle {
        /// Concept seed file; the shipped one when omitted.
        #[arg(long)]
        concepts: Option<PathBuf>,
        /// Recycling spec; the shipped one when omitted.
        #[arg(long)]
        recycling: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Cmd::Run { config, commands } => {
            let cfg = config.load()?;
            let script: Vec<ScriptedCommand> = match &commands {
                Some(p) => read_jsonl(p)?,
                None => Vec::new(),
            };
            let dir = run_experiment(&cfg, &RunOptions { force: config.force, script })?;
            println!("{}", dir.display());
        }
        Cmd::Replay { run } => {
            let report = replay(&run)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.identical {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Serve {
            config,
            addr,
            tick_ms,
            start_paused,
        } => {
            let cfg = config.load()?;
            let served = serve::start(
                cfg,
                &ServeOptions {
                    tick: Duration::from_millis(tick_ms),
                    start_paused,
                    force: config.force,
                },
            )?;
            let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            rt.block_on(serve::serve_forever(served, addr))?;
        }
        Cmd::Export { run, series, out } => {
            if series.is_empty() {
                for s in export::available_series(&run)? {
                    println!("{s}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let out = out.unwrap_or_else(|| run.join("plots"));
            for f in export::export(&run, &series, &out)? {
                println!("{}", f.display());
            }
        }
        Cmd::Oracle { concepts, recycling } => {
            let v = oracle::oracle(concepts.as_deref(), recycling.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

