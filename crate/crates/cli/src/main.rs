//! `stablesim`: run ensembles, sweeps, scenario replays and steady-state
//! curves from the command line.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 when a run fails.

mod config;
mod outputs;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stablesim_core::analytics::{heatmap, relative_msd, steady_state_curve, EnsembleSummary, Metric};
use stablesim_core::attacks::{liquidation_scenario, optimize_attack, run_attack, run_spiral, AttackPlan};
use stablesim_core::output;
use stablesim_core::simulate::run_ensemble_with_threads;
use stablesim_core::{Error, PathRecord, RiskConfig, SimConfig, SteadyStateOracle};

use crate::config::{emit_config, load_config, load_price_script, strategy};
use crate::outputs::Staging;

const TABLE1_SCRIPT: [f64; 4] = [85.0, 83.0, 82.0, 81.0];
const TABLE2_SCRIPT: [f64; 4] = [85.0, 85.0, 82.0, 82.0];

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::InvalidQuantile(_)
            | Error::InvalidPlan(_)
            | Error::NonPositivePrice(_)
            | Error::OversoldExit { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "stablesim", version, about = "Stablecoin market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Steps per path.
    #[arg(long)]
    horizon: Option<usize>,
    /// Roster strategy: VaRN.1, VaRN.01, VaRM.1, VaRM.01, AC1, AC2 or RN.
    #[arg(long)]
    strategy: Option<String>,
    /// Keep per-path traces.
    #[arg(long)]
    trace: bool,
    /// Output directory. Replays print CSV to stdout without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ether prices, the first being the starting price.
    #[arg(long)]
    price_script: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Grid {
    Strategies,
    Memory,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write per-path summaries.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run an ensemble per grid value and write heatmap and percentile tables.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "strategies")]
        grid: Grid,
        /// Memory values for the memory grid; sets both gamma and delta.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.3")]
        memory: Vec<f64>,
        /// Histogram bins per grid value.
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
    /// Replay a deleveraging spiral on a price script.
    ReplayTable1 {
        #[command(flatten)]
        common: Common,
    },
    /// Replay a liquidation bet.
    ReplayTable2 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        entry: usize,
        #[arg(long, default_value_t = 3)]
        exit: usize,
        /// Dollars spent at entry.
        #[arg(long, default_value_t = 1.0)]
        entry_dollars: f64,
        /// Dollars taken out at exit.
        #[arg(long, default_value_t = 1.083)]
        exit_dollars: f64,
    },
    /// Find the most profitable liquidation bet on a price script.
    AttackOptimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        entry: usize,
        #[arg(long, default_value_t = 3)]
        exit: usize,
    },
    /// Closed-form steady-state supply, price and estimator curves.
    SteadyState {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100.0)]
        demand: f64,
        #[arg(long, default_value_t = 1.00583)]
        r_hat: f64,
        /// Estimator memory.
        #[arg(long, default_value_t = 0.5)]
        memory: f64,
        #[arg(long, default_value_t = 0.0)]
        mu0: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma0_sq: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stablesim: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { common } => simulate(&common),
        Command::Sweep {
            common,
            grid,
            memory,
            bins,
        } => sweep(&common, grid, &memory, bins),
        Command::ReplayTable1 { common } => replay_table1(&common),
        Command::ReplayTable2 {
            common,
            entry,
            exit,
            entry_dollars,
            exit_dollars,
        } => replay_table2(&common, entry, exit, entry_dollars, exit_dollars),
        Command::AttackOptimize { common, entry, exit } => attack_optimize(&common, entry, exit),
        Command::SteadyState {
            common,
            demand,
            r_hat,
            memory,
            mu0,
            sigma0_sq,
        } => steady_state(&common, demand, r_hat, memory, mu0, sigma0_sq),
    }
}

/// Config file plus flag overrides.
fn resolve(common: &Common, base: SimConfig) -> Result<SimConfig, CliError> {
    let mut config = match &common.config {
        Some(p) => load_config(Some(p))?,
        None => base,
    };
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    if let Some(paths) = common.paths {
        config.n_paths = paths;
    }
    if let Some(h) = common.horizon {
        config.horizon = h;
    }
    if let Some(name) = &common.strategy {
        config.risk = strategy(name)?;
    }
    config.validate()?;
    Ok(config)
}

fn threads() -> Result<usize, CliError> {
    match std::env::var("STABLESIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Validation(format!("STABLESIM_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn require_out(common: &Common) -> Result<&Path, CliError> {
    common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Validation("--out is required for this command".into()))
}

fn csv_err(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn simulate(common: &Common) -> Result<(), CliError> {
    let start = Instant::now();
    let config = resolve(common, SimConfig::default())?;
    let out = require_out(common)?;
    let workers = threads()?;
    let mut staging = Staging::new(out)?;
    let records = run_ensemble_with_threads(&config, workers, common.trace)?;

    staging.write("summary.csv", |w| output::write_summary(w, &records).map_err(csv_err))?;
    let label = common.strategy.clone().unwrap_or_else(|| "run".into());
    let sweep = vec![(label, EnsembleSummary::from_records(&records))];
    write_tables(&mut staging, &sweep, 40, "")?;
    if common.trace {
        for rec in &records {
            staging.write(&format!("traces/path_{:06}.csv", rec.path_index), |w| {
                output::write_trace(w, &rec.steps).map_err(csv_err)
            })?;
        }
    }
    let failures = records.iter().filter(|r| r.failed()).count();
    staging.commit("simulate", Some(config.master_seed), emit_config(&config), start.elapsed())?;
    eprintln!("{} paths, {failures} failed; results in {}", records.len(), out.display());
    Ok(())
}

fn write_tables(
    staging: &mut Staging,
    sweep: &[(String, EnsembleSummary)],
    bins: usize,
    suffix: &str,
) -> Result<(), CliError> {
    for metric in [Metric::Volatility, Metric::StoppingTime] {
        let map = heatmap(sweep, metric, bins)?;
        staging.write(&format!("histogram_{}{suffix}.csv", metric.as_str()), |w| {
            output::write_histogram(w, &map).map_err(csv_err)
        })?;
        staging.write(&format!("percentiles_{}{suffix}.csv", metric.as_str()), |w| {
            output::write_percentiles(w, &map).map_err(csv_err)
        })?;
    }
    Ok(())
}

fn sweep(common: &Common, grid: Grid, memory: &[f64], bins: usize) -> Result<(), CliError> {
    let start = Instant::now();
    let base = resolve(common, SimConfig::default())?;
    let out = require_out(common)?;
    let workers = threads()?;
    let mut staging = Staging::new(out)?;

    let runs: Vec<(String, SimConfig)> = match grid {
        Grid::Strategies => RiskConfig::roster()
            .into_iter()
            .map(|(name, risk)| (name.to_string(), SimConfig { risk, ..base.clone() }))
            .collect(),
        Grid::Memory => {
            if memory.is_empty() {
                return Err(CliError::Validation("--memory needs at least one value".into()));
            }
            memory
                .iter()
                .map(|&m| {
                    let mut cfg = base.clone();
                    cfg.params.gamma = m;
                    cfg.params.delta = m;
                    (m.to_string(), cfg)
                })
                .collect()
        }
    };

    let mut sweep = Vec::with_capacity(runs.len());
    for (label, cfg) in &runs {
        cfg.validate()?;
        let records: Vec<PathRecord> = run_ensemble_with_threads(cfg, workers, false)?;
        staging.write(&format!("summary_{label}.csv"), |w| output::write_summary(w, &records).map_err(csv_err))?;
        sweep.push((label.clone(), EnsembleSummary::from_records(&records)));
    }
    write_tables(&mut staging, &sweep, bins, "")?;

    if grid == Grid::Strategies {
        let rn = &sweep.iter().find(|(n, _)| n == "RN").expect("roster has RN").1;
        let mut rows = Vec::new();
        for (name, s) in sweep.iter().filter(|(n, _)| n != "RN") {
            for metric in [Metric::Volatility, Metric::StoppingTime] {
                rows.push((name.clone(), metric, relative_msd(s, rn, metric).ok()));
            }
        }
        staging.write("msd.csv", |w| output::write_msd(w, &rows).map_err(csv_err))?;
    }
    staging.commit("sweep", Some(base.master_seed), emit_config(&base), start.elapsed())?;
    eprintln!("{} ensembles; results in {}", sweep.len(), out.display());
    Ok(())
}

/// Writes one CSV either into `--out` (with a manifest) or to stdout.
fn emit<F>(common: &Common, command: &str, name: &str, config: serde_json::Value, start: Instant, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match &common.out {
        Some(out) => {
            let mut staging = Staging::new(out)?;
            staging.write(name, fill)?;
            staging.commit(command, None, config, start.elapsed())?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            fill(&mut lock)?;
            lock.flush().map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn replay_table1(common: &Common) -> Result<(), CliError> {
    let start = Instant::now();
    let config = resolve(common, liquidation_scenario())?;
    let script = load_price_script(common.price_script.as_deref(), &TABLE1_SCRIPT)?;
    let rows = run_spiral(&config, &script)?;
    emit(common, "replay-table1", "table1.csv", emit_config(&config), start, |w| {
        output::write_spiral(w, &config, script[0], &rows).map_err(csv_err)
    })
}

fn replay_table2(common: &Common, entry: usize, exit: usize, entry_dollars: f64, exit_dollars: f64) -> Result<(), CliError> {
    let start = Instant::now();
    let config = resolve(common, liquidation_scenario())?;
    let script = load_price_script(common.price_script.as_deref(), &TABLE2_SCRIPT)?;
    let plan = AttackPlan {
        entry_time: entry,
        entry_dollars,
        exit_time: exit,
        exit_dollars,
        price_script: script,
    };
    let result = run_attack(&plan, &config)?;
    emit(common, "replay-table2", "table2.csv", emit_config(&config), start, |w| {
        output::write_attack(w, &config, &result).map_err(csv_err)
    })?;
    eprintln!(
        "coins acquired {}, profit {}, return {}%",
        output::fmt_num(result.coins_acquired),
        output::fmt_num(result.profit_usd),
        output::fmt_num(result.return_pct)
    );
    Ok(())
}

fn attack_optimize(common: &Common, entry: usize, exit: usize) -> Result<(), CliError> {
    let start = Instant::now();
    let config = resolve(common, liquidation_scenario())?;
    let script = load_price_script(common.price_script.as_deref(), &TABLE2_SCRIPT)?;
    let result = optimize_attack(&config, &script, entry, exit)?;
    let plan = serde_json::json!({
        "entry_time": result.plan.entry_time,
        "entry_dollars": result.plan.entry_dollars,
        "exit_time": result.plan.exit_time,
        "exit_dollars": result.plan.exit_dollars,
        "price_script": result.plan.price_script,
        "coins_acquired": result.coins_acquired,
        "profit_usd": result.profit_usd,
        "return_pct": result.return_pct,
    });
    match &common.out {
        Some(out) => {
            let mut staging = Staging::new(out)?;
            staging.write("attack.json", |w| {
                serde_json::to_writer_pretty(&mut *w, &plan).map_err(|e| CliError::Runtime(e.to_string()))?;
                writeln!(w).map_err(|e| CliError::Runtime(e.to_string()))
            })?;
            staging.write("attack.csv", |w| output::write_attack(w, &config, &result).map_err(csv_err))?;
            staging.commit("attack-optimize", None, emit_config(&config), start.elapsed())?;
        }
        None => println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes")),
    }
    Ok(())
}

fn steady_state(common: &Common, demand: f64, r_hat: f64, memory: f64, mu0: f64, sigma0_sq: f64) -> Result<(), CliError> {
    let start = Instant::now();
    let oracle = SteadyStateOracle {
        demand,
        r_hat,
        delta: memory,
        mu0,
        sigma0_sq,
    };
    let horizon = common.horizon.unwrap_or(60);
    let rows = steady_state_curve(&oracle, horizon)?;
    let echo = serde_json::json!({
        "demand": demand,
        "r_hat": r_hat,
        "memory": memory,
        "mu0": mu0,
        "sigma0_sq": sigma0_sq,
        "horizon": horizon,
    });
    emit(common, "steady-state", "steady_state.csv", echo, start, |w| {
        output::write_steady_state(w, &rows).map_err(csv_err)
    })
}
