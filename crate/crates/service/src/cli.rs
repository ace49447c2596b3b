//! The `cpcfc` command line. Exit codes: 0 on success, 1 on validation
//! errors (including unknown flags), 2 on internal errors.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use cpc_core::clustering::ClusterMethod;

use crate::api::{router, AppState};
use crate::error::{Result, ServiceError};
use crate::ops::{self, GridSpec};
use crate::store::{RunConfig, RunStore};

#[derive(Debug, Parser)]
#[command(name = "cpcfc", version, about = "Daily CPC forecasting with competitor clusters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a market into a new run directory.
    Simulate {
        /// Run config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ingest and clean a panel CSV into a new run directory.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Cluster the advertisers of a run.
    Cluster {
        #[arg(long)]
        run: PathBuf,
        /// cat, extr or dist.
        #[arg(long)]
        method: ClusterMethod,
    },
    /// Train the grid on data before the backtest origin.
    Train {
        #[arg(long)]
        run: PathBuf,
        /// Config tags (JSON); the full sixteen-config grid when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Score the trained models and write the backtest reports.
    Backtest {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
    },
    /// Run the demand-shock robustness experiment.
    Robustness {
        #[arg(long)]
        run: PathBuf,
    },
    /// Forecast an advertiser under a budget plan.
    Whatif {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        advertiser: String,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "TFT.multivar.comp.dist")]
        config: String,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Serve the scenario-planner HTTP API over a run.
    Serve {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn config_or_default(path: Option<&PathBuf>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), |p| RunConfig::from_file(p))
}

pub fn execute<W: Write>(command: Command, out: &mut W) -> Result<()> {
    let io = |e: std::io::Error| ServiceError::Io {
        path: "stdout".into(),
        source: e,
    };
    match command {
        Command::Simulate { config, out: dir } => {
            let store = ops::simulate_run(config_or_default(config.as_ref())?, &dir)?;
            writeln!(
                out,
                "simulated {} advertisers over {} days into {} (run {})",
                store.panel().advertisers.len(),
                store.panel().len_days(),
                dir.display(),
                store.manifest().run_id
            )
            .map_err(io)?;
        }
        Command::Ingest { csv, out: dir, config } => {
            let store = ops::ingest_run(&csv, config_or_default(config.as_ref())?, &dir)?;
            writeln!(
                out,
                "ingested {} advertisers over {} days into {} (run {})",
                store.panel().advertisers.len(),
                store.panel().len_days(),
                dir.display(),
                store.manifest().run_id
            )
            .map_err(io)?;
        }
        Command::Cluster { run, method } => {
            let store = RunStore::open(&run)?;
            let c = ops::cluster_run(&store, method)?;
            writeln!(out, "{} clustering: k = {}", c.method.as_str(), c.k).map_err(io)?;
        }
        Command::Train { run, grid } => {
            let store = RunStore::open(&run)?;
            let grid = match grid {
                Some(p) => GridSpec::from_file(&p)?,
                None => GridSpec::paper(),
            };
            let s = ops::train_run(&store, &grid)?;
            writeln!(out, "trained {} models in {} bundles at origin {}", s.models, s.bundles, s.origin).map_err(io)?;
        }
        Command::Backtest { run, horizons } => {
            let store = RunStore::open(&run)?;
            let report = ops::backtest_run(&store, &horizons)?;
            writeln!(out, "{:<26} {:>7} {:>8} {:>8}", "config", "horizon", "mae", "smape").map_err(io)?;
            for s in report.summary() {
                writeln!(out, "{:<26} {:>7} {:>8.4} {:>8.4}", s.config, s.horizon, s.mae_mean, s.smape_mean)
                    .map_err(io)?;
            }
        }
        Command::Robustness { run } => {
            let store = RunStore::open(&run)?;
            let table = ops::robustness_run(&store)?;
            write!(out, "{}", table.render()).map_err(io)?;
        }
        Command::Whatif {
            run,
            advertiser,
            plan,
            config,
            horizon,
        } => {
            let store = RunStore::open(&run)?;
            let plan = ops::read_plan(&plan, &store)?;
            let response = ops::whatif_run(&store, &advertiser, &config, horizon, plan)?;
            let text = serde_json::to_string_pretty(&response).map_err(|e| ServiceError::Json {
                path: "stdout".into(),
                source: e,
            })?;
            writeln!(out, "{text}").map_err(io)?;
        }
        Command::Serve { run, port, host } => {
            let state = Arc::new(AppState::new(RunStore::open(&run)?)?);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ServiceError::io(&run, e))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(SocketAddr::new(host, port))
                    .await
                    .map_err(|e| ServiceError::validation(format!("cannot bind {host}:{port}: {e}")))?;
                let addr = listener.local_addr().map_err(|e| ServiceError::io(&run, e))?;
                writeln!(out, "serving {} on http://{addr}", run.display()).map_err(io)?;
                out.flush().map_err(io)?;
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| ServiceError::io(&run, e))
            })?;
        }
    }
    Ok(())
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
