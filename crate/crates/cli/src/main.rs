//! `sipvol`: simulate noisy high-frequency prices, estimate spot variance
//! curves, predict the unobserved remainder of the current day from a
//! low-rank day × intraday panel, and backtest the predictions.
//!
//! Settings resolve in four layers, later ones winning: built-in defaults,
//! a `--config` file, the `SIPVOL_OUT_DIR`/`SIPVOL_THREADS` environment
//! variables, and command-line flags. Exit codes: 0 success, 2 usage or
//! configuration error, 3 data error, 4 numerical error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sipvol_core::error::ErrorCategory;
use sipvol_core::lowrank::Method;
use sipvol_core::spot_vol::{KernelShape, WeightShape};
use sipvol_core::{Error, Result};

use config::{RankPolicyKind, RunConfig};

#[derive(Parser)]
#[command(
    name = "sipvol",
    version,
    about = "Intraday volatility toolkit: simulation, spot estimation, \
             remaining-day prediction, and backtesting"
)]
struct Cli {
    /// Config file with [output]/[simulate]/[spot]/[predict]/[backtest] sections
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for output artifacts [env: SIPVOL_OUT_DIR]
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Worker threads, 0 = one per core [env: SIPVOL_THREADS]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel of noisy high-frequency log prices with jumps
    Simulate(SimulateArgs),
    /// Estimate per-day spot variance curves from a tick CSV
    Spot(SpotArgs),
    /// Predict the unobserved remainder of the last day of a variance panel
    Predict(PredictArgs),
    /// Rolling-window backtest of a panel, or a Monte Carlo sweep
    Backtest(BacktestArgs),
    /// Print the resolved configuration as a reloadable config file
    Config,
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of days
    #[arg(long)]
    days: Option<usize>,

    /// Ticks per day
    #[arg(long)]
    ticks: Option<usize>,

    /// Intraday grid points in the true-variance matrix
    #[arg(long)]
    grid: Option<usize>,

    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,

    /// Independent RNG stream under the master seed
    #[arg(long, default_value_t = 0)]
    replication: u64,

    /// Microstructure noise standard deviation
    #[arg(long)]
    noise_sd: Option<f64>,

    /// Expected jumps per day
    #[arg(long)]
    jump_intensity: Option<f64>,
}

impl SimulateArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.days {
            cfg.simulate.d_total = v;
        }
        if let Some(v) = self.ticks {
            cfg.simulate.m = v;
        }
        if let Some(v) = self.grid {
            cfg.simulate.n = v;
        }
        if let Some(v) = self.seed {
            cfg.simulate.seed = v;
        }
        if let Some(v) = self.noise_sd {
            cfg.simulate.noise_sd = v;
        }
        if let Some(v) = self.jump_intensity {
            cfg.simulate.jump_intensity = v;
        }
    }
}

#[derive(Args)]
struct SpotArgs {
    /// Input tick CSV (day,s,t,y)
    #[arg(long, value_name = "FILE")]
    input: PathBuf,

    /// Grid points per day in the output matrix
    #[arg(long)]
    grid: Option<usize>,

    /// Pre-averaging window length, 0 = automatic
    #[arg(long)]
    k: Option<usize>,

    /// Kernel bandwidth as a fraction of the day, 0 = automatic
    #[arg(long)]
    bandwidth: Option<f64>,

    /// Kernel anchoring: symmetric or left
    #[arg(long, value_parser = config::kernel_from_str)]
    kernel: Option<KernelShape>,

    /// Pre-averaging weight: asymmetric_tent or symmetric_tent
    #[arg(long, value_parser = config::weight_from_str)]
    weight: Option<WeightShape>,
}

impl SpotArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.grid {
            cfg.spot.grid = v;
        }
        if let Some(v) = self.k {
            cfg.spot.k = v;
        }
        if let Some(v) = self.bandwidth {
            cfg.spot.bandwidth = v;
        }
        if let Some(v) = self.kernel {
            cfg.spot.kernel = v;
        }
        if let Some(v) = self.weight {
            cfg.spot.weight = v;
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    /// Input variance-matrix CSV (grid-time header, one row per day)
    #[arg(long, value_name = "FILE")]
    input: PathBuf,

    /// Observed fraction of the target (last) day
    #[arg(long)]
    omega: Option<f64>,

    /// Methods to run: sip, ave, ar1, pc, har_d
    #[arg(long, value_delimiter = ',', value_parser = config::method_from_str)]
    methods: Option<Vec<Method>>,

    /// Rank selection: fixed, ratio, or gap
    #[arg(long, value_parser = config::rank_policy_from_str)]
    rank_policy: Option<RankPolicyKind>,

    /// Rank for the fixed policy
    #[arg(long)]
    rank: Option<usize>,

    /// Rank cap for the ratio and gap policies
    #[arg(long)]
    rank_max: Option<usize>,

    /// Ridge added to the core matrix before inversion
    #[arg(long)]
    ridge: Option<f64>,
}

impl PredictArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.omega {
            cfg.predict.omega = v;
        }
        if let Some(v) = &self.methods {
            cfg.predict.methods = v.clone();
        }
        if let Some(v) = self.rank_policy {
            cfg.predict.rank_policy = v;
        }
        if let Some(v) = self.rank {
            cfg.predict.rank = v;
        }
        if let Some(v) = self.rank_max {
            cfg.predict.rank_max = v;
        }
        if let Some(v) = self.ridge {
            cfg.predict.ridge = v;
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Evaluate an existing variance panel day by day
    Rolling,
    /// Monte Carlo study over history lengths and observed fractions
    Sweep,
}

#[derive(Args)]
struct BacktestArgs {
    #[arg(long, value_enum, default_value_t = Mode::Rolling)]
    mode: Mode,

    /// Variance-matrix CSV to evaluate (rolling mode)
    #[arg(long, value_name = "FILE")]
    volmatrix: Option<PathBuf>,

    /// Per-interval returns CSV in the same layout; enables VaR tests
    #[arg(long, value_name = "FILE")]
    returns: Option<PathBuf>,

    /// In-sample window length in days (rolling mode)
    #[arg(long)]
    window: Option<usize>,

    /// Observed fractions ω to evaluate (rolling mode)
    #[arg(long, value_delimiter = ',')]
    omegas: Option<Vec<f64>>,

    /// VaR levels; pass an empty string to skip coverage tests
    #[arg(long, value_delimiter = ',')]
    q0: Option<Vec<f64>>,

    /// Methods to evaluate: sip, ave, ar1, pc, har_d
    #[arg(long, value_delimiter = ',', value_parser = config::method_from_str)]
    methods: Option<Vec<Method>>,

    /// Benjamini-Hochberg rejection level
    #[arg(long)]
    alpha: Option<f64>,

    /// Monte Carlo replications (sweep mode)
    #[arg(long)]
    reps: Option<usize>,

    /// Ticks per simulated day (sweep mode)
    #[arg(long)]
    sweep_ticks: Option<usize>,

    /// History lengths D to sweep
    #[arg(long, value_delimiter = ',')]
    window_grid: Option<Vec<usize>>,

    /// Observed fractions ω to sweep
    #[arg(long, value_delimiter = ',')]
    omega_grid: Option<Vec<f64>>,

    /// Master RNG seed (sweep mode)
    #[arg(long)]
    seed: Option<u64>,

    /// Rank selection: fixed, ratio, or gap
    #[arg(long, value_parser = config::rank_policy_from_str)]
    rank_policy: Option<RankPolicyKind>,

    /// Rank for the fixed policy
    #[arg(long)]
    rank: Option<usize>,

    /// Rank cap for the ratio and gap policies
    #[arg(long)]
    rank_max: Option<usize>,

    /// Ridge added to the core matrix before inversion
    #[arg(long)]
    ridge: Option<f64>,
}

impl BacktestArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.window {
            cfg.backtest.window = v;
        }
        if let Some(v) = &self.omegas {
            cfg.backtest.omegas = v.clone();
        }
        if let Some(v) = &self.q0 {
            cfg.backtest.q0_levels = v.clone();
        }
        if let Some(v) = &self.methods {
            cfg.predict.methods = v.clone();
        }
        if let Some(v) = self.alpha {
            cfg.backtest.alpha = v;
        }
        if let Some(v) = self.reps {
            cfg.backtest.reps = v;
        }
        if let Some(v) = self.sweep_ticks {
            cfg.backtest.sweep_ticks = v;
        }
        if let Some(v) = &self.window_grid {
            cfg.backtest.window_grid = v.clone();
        }
        if let Some(v) = &self.omega_grid {
            cfg.backtest.omega_grid = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.simulate.seed = v;
        }
        if let Some(v) = self.rank_policy {
            cfg.predict.rank_policy = v;
        }
        if let Some(v) = self.rank {
            cfg.predict.rank = v;
        }
        if let Some(v) = self.rank_max {
            cfg.predict.rank_max = v;
        }
        if let Some(v) = self.ridge {
            cfg.predict.ridge = v;
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(dir) = cli.out_dir {
        cfg.output.dir = dir;
    }
    if let Some(threads) = cli.threads {
        cfg.output.threads = threads;
    }
    match &cli.command {
        Command::Simulate(a) => a.apply(&mut cfg),
        Command::Spot(a) => a.apply(&mut cfg),
        Command::Predict(a) => a.apply(&mut cfg),
        Command::Backtest(a) => a.apply(&mut cfg),
        Command::Config => {}
    }
    cfg.validate()?;

    if let Command::Config = cli.command {
        print!("{}", config::to_text(&cfg));
        return Ok(());
    }

    if cfg.output.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.output.threads)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cfg.output.dir)?;

    match cli.command {
        Command::Simulate(a) => commands::cmd_simulate(&cfg, a.replication),
        Command::Spot(a) => commands::cmd_spot(&cfg, &a.input),
        Command::Predict(a) => commands::cmd_predict(&cfg, &a.input),
        Command::Backtest(a) => match a.mode {
            Mode::Rolling => {
                let volmatrix = a.volmatrix.ok_or_else(|| {
                    Error::InvalidParameter("--volmatrix is required in rolling mode".into())
                })?;
                commands::cmd_backtest_rolling(&cfg, &volmatrix, a.returns.as_deref())
            }
            Mode::Sweep => commands::cmd_backtest_sweep(&cfg),
        },
        Command::Config => unreachable!("handled before the thread pool"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sipvol: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Usage => 2u8,
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
            })
        }
    }
}
