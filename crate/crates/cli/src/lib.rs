//! Command-line entry point and console gateway for the holonic cell.

pub mod engine;
pub mod gateway;

use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use holocell::cell::Scenario;
use holocell::config::SystemConfig;
use holocell::messaging::Transport;
use holocell::runner::{run_scenario, RunOptions, RunReport};
use holocell::system::System;
use holocell::trace::write_jsonl;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ORDERS_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "holocell",
    version,
    about = "Holonic control of a robotic assembly cell"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Boot the system and run a scenario or serve the console API.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportArg {
    Inproc,
    Udp,
}

impl From<TransportArg> for Transport {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::Inproc => Transport::InProc,
            TransportArg::Udp => Transport::Udp,
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Run the scenario to completion without serving HTTP.
    #[arg(long)]
    pub headless: bool,
    /// Simulated seconds per wall second; 0 runs as fast as possible.
    /// Defaults to 0 headless and 1 when serving.
    #[arg(long)]
    pub speed: Option<f64>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub http: SocketAddr,
    #[arg(long, value_enum, default_value_t = TransportArg::Inproc)]
    pub transport: TransportArg,
    /// Where a headless run writes its event trace.
    #[arg(long, default_value = "trace.jsonl")]
    pub trace: PathBuf,
}

/// A run that could not finish, with its exit code.
#[derive(Debug, thiserror::Error)]
#[error("{error:#}")]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn fail<T, E: Into<anyhow::Error>>(
    code: i32,
    r: Result<T, E>,
    what: impl FnOnce() -> String,
) -> Result<T, Failure> {
    r.map_err(|e| Failure {
        code,
        error: e.into().context(what()),
    })
}

fn startup<T, E: Into<anyhow::Error>>(
    r: Result<T, E>,
    what: impl FnOnce() -> String,
) -> Result<T, Failure> {
    fail(EXIT_CONFIG, r, what)
}

fn load_config(args: &RunArgs) -> Result<SystemConfig, Failure> {
    let mut cfg = startup(SystemConfig::load(&args.config), || {
        format!("loading {}", args.config.display())
    })?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = startup(std::fs::read_to_string(path), || {
        format!("reading {}", path.display())
    })?;
    startup(text.parse::<Scenario>(), || {
        format!("parsing {}", path.display())
    })
}

/// Runs the scenario to quiescence and writes the trace.
pub fn run_headless(args: &RunArgs) -> Result<RunReport, Failure> {
    let cfg = load_config(args)?;
    let Some(path) = &args.scenario else {
        return Err(Failure {
            code: EXIT_CONFIG,
            error: anyhow::anyhow!("--headless needs --scenario"),
        });
    };
    let scenario = load_scenario(path)?;
    let mut system = startup(System::boot(cfg, args.transport.into()), || {
        "booting".into()
    })?;
    let opts = RunOptions {
        speed: args.speed.unwrap_or(0.0),
        ..RunOptions::default()
    };
    let report = fail(
        EXIT_ORDERS_FAILED,
        run_scenario(&mut system, &scenario, opts),
        || "running scenario".into(),
    )?;
    let out = fail(EXIT_ORDERS_FAILED, File::create(&args.trace), || {
        format!("creating {}", args.trace.display())
    })?;
    fail(
        EXIT_ORDERS_FAILED,
        write_jsonl(BufWriter::new(out), system.frames()),
        || format!("writing {}", args.trace.display()),
    )?;
    Ok(report)
}

/// Serves the console API until interrupted.
pub fn serve(args: &RunArgs) -> anyhow::Result<i32> {
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    let scenario = match args.scenario.as_deref().map(load_scenario).transpose() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    let pacing = engine::Pacing {
        speed: args.speed.unwrap_or(1.0),
    };
    let (handle, _thread) = match engine::spawn(cfg, args.transport.into(), scenario, pacing) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: booting: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async {
        let listener = match tokio::net::TcpListener::bind(args.http).await {
            Ok(l) => l,
            Err(e) => {
                eprintln!("error: cannot bind {}: {e}", args.http);
                return Ok(EXIT_CONFIG);
            }
        };
        tracing::info!(addr = %args.http, "serving");
        axum::serve(listener, gateway::router(handle))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")?;
        Ok(EXIT_OK)
    })
}

/// Runs the command line and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) if args.headless => match run_headless(&args) {
            Ok(report) => {
                for o in &report.orders {
                    println!("{} {} {:?} {}%", o.id, o.product, o.state, o.percent);
                }
                for f in report.failures() {
                    eprintln!("failed: {f}");
                }
                println!("end {} trace {}", report.end_time, args.trace.display());
                report.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.code
            }
        },
        Command::Run(args) => match serve(&args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_ORDERS_FAILED
            }
        },
    }
}
