//! `tandem` command-line interface.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! runtime failures.

mod bench;
mod convert;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tandem::sim::metrics::Summary;
use tandem::sim::ScenarioConfig;
use tandem::{run_scenario, SimTrace};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<tandem::Error> for CliError {
    fn from(e: tandem::Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Output file errors are runtime failures, input errors are config errors.
pub fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("writing {}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "tandem", version, about = "Shared-autonomy motion generation and control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace.
    Run(RunArgs),
    /// Integrate the motion field from perturbed starts and write convergence metrics.
    Bench(bench::BenchArgs),
    /// Convert demonstrations between CSV and JSON, or average a directory of them.
    Convert(convert::ConvertArgs),
    /// Recompute a run summary from a saved trace.
    Replay(ReplayArgs),
    /// Serve live sessions over websockets.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the time step, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the duration, s.
    #[arg(long)]
    duration: Option<f64>,
}

impl Overrides {
    fn load(&self, path: &Path) -> CliResult<ScenarioConfig> {
        if !path.is_file() {
            return Err(CliError::Config(format!("config {} not found", path.display())));
        }
        let mut cfg = ScenarioConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Trace output; `.bin` or `.trace` selects the binary encoding.
    #[arg(short, long, default_value = "trace.csv")]
    output: PathBuf,
    /// Also write the summary to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace written by `run` (CSV or binary).
    trace: PathBuf,
    /// Scenario the trace was produced from; supplies the goal and obstacles.
    #[arg(short, long)]
    config: PathBuf,
    /// Re-run the scenario and check the trace is reproduced bit for bit.
    #[arg(long)]
    verify: bool,
    /// Also write the summary to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum PaceArg {
    Real,
    Max,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Scenario new sessions start from; its directory provides the ids usable in `reset`.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "real")]
    pace: PaceArg,
    /// Save session traces here on reset and shutdown.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

fn summarize(cfg: &ScenarioConfig, trace: &SimTrace, out: Option<&Path>) -> CliResult {
    let text = Summary::from_trace(trace, &cfg.goal, &cfg.obstacles).to_text();
    print!("{text}");
    if let Some(p) = out {
        std::fs::write(p, &text).map_err(|e| write_err(p, e))?;
    }
    Ok(())
}

fn run(args: RunArgs) -> CliResult {
    let cfg = args.overrides.load(&args.config)?;
    let out = run_scenario(&cfg, None)?;
    out.trace.save(&args.output).map_err(|e| write_err(&args.output, e))?;
    summarize(&cfg, &out.trace, args.summary.as_deref())
}

fn replay(args: ReplayArgs) -> CliResult {
    let cfg = args.overrides.load(&args.config)?;
    let trace = SimTrace::load(&args.trace)?;
    if args.verify {
        let fresh = run_scenario(&cfg, None)?;
        if fresh.trace.rows != trace.rows {
            let first = fresh.trace.rows.iter().zip(&trace.rows).position(|(a, b)| a != b);
            return Err(CliError::Runtime(format!(
                "trace differs from a fresh run ({} vs {} rows, first difference at row {:?})",
                trace.len(),
                fresh.trace.len(),
                first
            )));
        }
        eprintln!("verified: {} rows reproduced", trace.len());
    }
    summarize(&cfg, &trace, args.summary.as_deref())
}

fn serve(args: ServeArgs) -> CliResult {
    let mut config = tandem_session::ServerConfig::from_scenario_path(&args.scenario)
        .map_err(|e| CliError::Config(e.to_string()))?;
    config.pace = match args.pace {
        PaceArg::Real => tandem_session::Pace::Real,
        PaceArg::Max => tandem_session::Pace::Max,
    };
    config.trace_dir = args.trace_dir;
    // surface scenario problems as config errors before binding
    tandem_session::AppState::new(config.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| CliError::Runtime(format!("binding {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("listening on ws://{addr}/session/{{id}}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        tandem_session::serve(listener, config, shutdown)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench::bench(a),
        Command::Convert(a) => convert::convert(a),
        Command::Replay(a) => replay(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
