//! Command-line harness for the critical catalytic branching random walk
//! library: eight tasks, one configuration format, deterministic artifacts.
//!
//! Every run resolves its configuration (TOML file, then the `CBRW_OUT`
//! environment override for the output directory, then flags), computes
//! through the library and writes CSV/JSON artifacts plus a manifest with
//! per-file checksums.  Rerunning any task with the same configuration and
//! seed reproduces every artifact byte for byte.
//!
//! Exit codes: 0 success, 1 computation error or failed validation
//! criterion, 2 configuration error (unparsable config, unknown key,
//! missing kernel file).

mod artifacts;
mod config;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cbrw",
    version,
    about = "Critical catalytic branching random walk: simulation, convolution solvers, \
             asymptotics and validation"
)]
struct Cli {
    /// TOML configuration file ([model]/[task]/[run] sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every stochastic task (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides CBRW_OUT and run.out).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Worker threads; 0 lets the pool pick (overrides run.threads).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Time-grid step for solvers and c.d.f. binning (overrides run.grid_step).
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Time horizon for grids and simulations (overrides run.horizon).
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Monte Carlo replica count (overrides run.replicas).
    #[arg(long, global = true)]
    replicas: Option<u64>,
    #[command(subcommand)]
    task: Task,
}

#[derive(Subcommand)]
enum Task {
    /// Transition probabilities of the driving walk on the time grid.
    Walk,
    /// Event-driven Monte Carlo estimates at the configured times.
    Simulate,
    /// Hitting / taboo-hitting time c.d.f. by Monte Carlo.
    Taboo,
    /// Convolution-equation solutions m(t;x,y) and q(t;x,y) on the grid.
    Solve,
    /// Six-type decomposition report (masses, mean matrix, eigen algebra).
    #[command(name = "bellman-harris")]
    BellmanHarris,
    /// Asymptotic constants bundle and row values as JSON.
    Asym,
    /// Observed-to-asymptote ratio ladder as CSV.
    Ratio,
    /// Run a validation suite (oracle | algebra | crossroute | trend | all).
    Validate {
        /// Suite to run; defaults to task.suite from the config, then "all".
        suite: Option<String>,
    },
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let over = config::Overrides {
        config: cli.config.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
        grid_step: cli.grid_step,
        horizon: cli.horizon,
        replicas: cli.replicas,
    };
    let mut cfg = config::resolve(&over)?;
    if let Task::Validate { suite: Some(s) } = &cli.task {
        cfg.task.suite = s.clone();
    }
    if cfg.run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot size the thread pool: {}", e))?;
    }
    match cli.task {
        Task::Walk => tasks::walk(&cfg),
        Task::Simulate => tasks::simulate(&cfg),
        Task::Taboo => tasks::taboo(&cfg),
        Task::Solve => tasks::solve(&cfg),
        Task::BellmanHarris => tasks::bellman_harris(&cfg),
        Task::Asym => tasks::asym(&cfg),
        Task::Ratio => tasks::ratio(&cfg),
        Task::Validate { .. } => tasks::validate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {:#}", err);
            let config_stage = err.downcast_ref::<config::ConfigError>().is_some()
                || err.chain().any(|c| c.is::<config::ConfigError>());
            ExitCode::from(if config_stage { 2 } else { 1 })
        }
    }
}
