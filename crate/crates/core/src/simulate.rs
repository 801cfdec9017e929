//! Period loop and Monte Carlo driver.
//!
//! Each period runs, in order: Ether price reveal, expectation update,
//! demand formation, the speculator's decision, then clearing and settlement.
//! Ether returns are i.i.d. and exogenous.
//!
//! Path `i` of an ensemble draws its returns from a ChaCha8 stream keyed by
//! `(master_seed, i)`, so every path is reproducible on its own and the
//! ensemble does not depend on scheduling. Paths that share a seed and index
//! see the same Ether prices regardless of the speculator's strategy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::realized_volatility;
use crate::decision::{decide, settle, Regime};
use crate::error::{invalid, Error, Result};
use crate::expectations::EwmaEstimator;
use crate::model::{
    leverage, DemandMode, FailureReason, HolderState, MarketParams, PortfolioWeights,
    SpeculatorState, SystemStatus,
};
use crate::risk::RiskConfig;

/// Historical daily Ether log-return volatility, 2017-2018.
pub const ETH_DAILY_VOL: f64 = 0.027925;
/// Historical daily Ether gross return, 2017-2018.
pub const ETH_DAILY_GROSS_RETURN: f64 = 1.00583;
/// Historical daily Ether log return, 2017-2018.
pub const ETH_DAILY_LOG_RETURN: f64 = 0.00162;

/// Distribution of daily Ether returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReturnModel {
    /// Student-t log returns rescaled so their standard deviation is `scale`,
    /// shifted by `drift`.
    StudentT { df: f64, drift: f64, scale: f64 },
    Normal { mu: f64, sigma: f64 },
    /// Deterministic gross return every period.
    Constant { gross: f64 },
}

impl Default for ReturnModel {
    fn default() -> Self {
        ReturnModel::StudentT {
            df: 3.0,
            drift: 0.0,
            scale: ETH_DAILY_VOL,
        }
    }
}

impl ReturnModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ReturnModel::StudentT { df, drift, scale } => {
                if !(df > 2.0 && df.is_finite()) {
                    return Err(invalid("returns.df", format!("must exceed 2, got {df}")));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(invalid("returns.scale", format!("must be positive, got {scale}")));
                }
                if !drift.is_finite() {
                    return Err(invalid("returns.drift", "must be finite"));
                }
            }
            ReturnModel::Normal { mu, sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(invalid("returns.sigma", format!("must be positive, got {sigma}")));
                }
                if !mu.is_finite() {
                    return Err(invalid("returns.mu", "must be finite"));
                }
            }
            ReturnModel::Constant { gross } => {
                if !(gross > 0.0 && gross.is_finite()) {
                    return Err(invalid("returns.gross", format!("must be positive, got {gross}")));
                }
            }
        }
        Ok(())
    }

    /// Draws one log return.
    pub fn sample_log_return<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ReturnModel::StudentT { df, drift, scale } => {
                let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
                drift + scale * t / (df / (df - 2.0)).sqrt()
            }
            ReturnModel::Normal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            ReturnModel::Constant { gross } => gross.ln(),
        }
    }

    /// Draws one gross return multiplier.
    pub fn sample_return<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ReturnModel::Constant { gross } => gross,
            _ => self.sample_log_return(rng).exp(),
        }
    }
}

/// Starting endowments and beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    /// Speculator Ether.
    pub n: f64,
    /// Stablecoins outstanding.
    pub liabilities: f64,
    pub eth_price: f64,
    pub r: f64,
    pub mu: f64,
    /// Log-return volatility (standard deviation, not variance).
    pub sigma: f64,
    /// Holder Ether; only drives demand under holder-weight demand.
    pub holder_eth: f64,
    /// Holder's stablecoin weight under holder-weight demand.
    pub stable_weight: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState {
            n: 400.0,
            liabilities: 100.0,
            eth_price: 1.0,
            r: ETH_DAILY_GROSS_RETURN,
            mu: ETH_DAILY_LOG_RETURN,
            sigma: ETH_DAILY_VOL,
            holder_eth: 100.0,
            stable_weight: 0.5,
        }
    }
}

impl InitialState {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("initial.n", self.n)?;
        positive("initial.liabilities", self.liabilities)?;
        positive("initial.eth_price", self.eth_price)?;
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(invalid("initial.r", format!("must be non-negative, got {}", self.r)));
        }
        if !self.mu.is_finite() {
            return Err(invalid("initial.mu", "must be finite"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("initial.sigma", format!("must be non-negative, got {}", self.sigma)));
        }
        if !(self.holder_eth >= 0.0) {
            return Err(invalid("initial.holder_eth", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.stable_weight) {
            return Err(invalid(
                "initial.stable_weight",
                format!("must lie in [0, 1), got {}", self.stable_weight),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub params: MarketParams,
    pub risk: RiskConfig,
    pub initial: InitialState,
    /// Steps per path.
    pub horizon: usize,
    pub n_paths: usize,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            params: MarketParams::default(),
            risk: RiskConfig::default(),
            initial: InitialState::default(),
            horizon: 1000,
            n_paths: 10_000,
            master_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.risk.validate()?;
        self.initial.validate()?;
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be at least 1"));
        }
        Ok(())
    }
}

/// Full market state between periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: usize,
    pub spec: SpeculatorState,
    pub holder: HolderState,
    pub eth_price: f64,
    pub stable_price: f64,
    pub status: SystemStatus,
    /// Consecutive periods spent below the price floor.
    pub below_floor: u32,
}

impl SimState {
    pub fn initial(initial: &InitialState, params: &MarketParams) -> Result<Self> {
        initial.validate()?;
        let weights = PortfolioWeights::with_stable(initial.stable_weight)?;
        let holder = HolderState {
            n_bar: initial.holder_eth,
            m_bar: initial.liabilities,
            weights,
        };
        let stable_price = match params.demand {
            DemandMode::FixedDollar { amount } => amount / initial.liabilities,
            DemandMode::HolderWeights => {
                weights.stable * holder.n_bar * initial.eth_price / (weights.eth * initial.liabilities)
            }
        };
        Ok(SimState {
            t: 0,
            spec: SpeculatorState {
                n: initial.n,
                liabilities: initial.liabilities,
                r: initial.r,
                mu: initial.mu,
                sigma2: initial.sigma * initial.sigma,
            },
            holder,
            eth_price: initial.eth_price,
            stable_price,
            status: SystemStatus::Normal,
            below_floor: 0,
        })
    }
}

/// One row of a path trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub t: usize,
    pub eth_price: f64,
    pub stable_price: f64,
    pub delta: f64,
    pub liabilities: f64,
    pub n: f64,
    pub leverage: f64,
    /// Enforced risk threshold; NaN when it could not be evaluated.
    pub lambda_tilde: f64,
    pub regime: Regime,
}

/// Advances the market by one period at the revealed Ether price.
///
/// A failed state is returned unchanged. A period that fails inside the
/// speculator's decision produces no row.
pub fn step(
    state: &SimState,
    eth_price: f64,
    params: &MarketParams,
    risk: &RiskConfig,
) -> (SimState, Option<StepRow>) {
    if state.status.is_failed() {
        return (*state, None);
    }
    let t = state.t + 1;
    let fail = |reason| {
        (
            SimState {
                t,
                eth_price,
                status: SystemStatus::Failed(reason),
                ..*state
            },
            None,
        )
    };
    if !(eth_price > 0.0 && eth_price.is_finite()) {
        return fail(FailureReason::InfeasibleLiquidation);
    }

    let beliefs = EwmaEstimator {
        return_memory: params.gamma,
        memory: params.delta,
        mean_return: state.spec.r,
        mean_log: state.spec.mu,
        variance: state.spec.sigma2,
    };
    let Ok(beliefs) = beliefs.update(state.eth_price, eth_price) else {
        return fail(FailureReason::InfeasibleLiquidation);
    };
    let spec = SpeculatorState {
        r: beliefs.mean_return,
        mu: beliefs.mean_log,
        sigma2: beliefs.variance,
        ..state.spec
    };

    let Ok(inputs) = crate::model::derive_clearing_inputs(&spec, &state.holder, eth_price, params)
    else {
        return fail(FailureReason::InfeasibleLiquidation);
    };
    let outcome = decide(&inputs, &spec, risk, params.beta);
    let Some(decision) = outcome.decision else {
        let (mut next, _) = fail(FailureReason::InfeasibleLiquidation);
        next.spec = spec;
        return (next, None);
    };
    let Ok((spec, holder)) = settle(&spec, &state.holder, &decision, eth_price) else {
        return fail(FailureReason::InfeasibleLiquidation);
    };

    let below_floor = if decision.price < params.price_floor {
        state.below_floor + 1
    } else {
        0
    };
    let status = if below_floor >= params.floor_steps {
        SystemStatus::Failed(FailureReason::PriceFloor)
    } else {
        outcome.status
    };
    let row = StepRow {
        t,
        eth_price,
        stable_price: decision.price,
        delta: decision.delta,
        liabilities: spec.liabilities,
        n: spec.n,
        leverage: leverage(&spec, eth_price, params.beta).unwrap_or(f64::INFINITY),
        lambda_tilde: outcome.lambda_tilde.map_or(f64::NAN, |l| l.value),
        regime: decision.regime,
    };
    let next = SimState {
        t,
        spec,
        holder,
        eth_price,
        stable_price: decision.price,
        status,
        below_floor,
    };
    (next, Some(row))
}

/// Per-step trace plus per-path summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub path_index: u64,
    pub initial_stable_price: f64,
    /// Empty when traces were not retained.
    pub steps: Vec<StepRow>,
    /// Periods completed, including a failing period that produced a row.
    pub steps_run: usize,
    /// Period at which the path failed.
    pub stop_time: Option<usize>,
    pub stop_reason: Option<FailureReason>,
    /// Sample standard deviation of daily stablecoin log returns; `None`
    /// when the path has fewer than two price moves.
    pub realized_vol: Option<f64>,
    pub min_stable_price: f64,
    pub max_stable_price: f64,
}

impl PathRecord {
    fn finish(path_index: u64, initial: &SimState, steps: Vec<StepRow>, last: &SimState) -> Self {
        let (stop_time, stop_reason) = match last.status {
            SystemStatus::Failed(reason) => (Some(last.t), Some(reason)),
            _ => (None, None),
        };
        let mut record = PathRecord {
            path_index,
            initial_stable_price: initial.stable_price,
            steps_run: steps.len(),
            stop_time,
            stop_reason,
            realized_vol: None,
            min_stable_price: initial.stable_price,
            max_stable_price: initial.stable_price,
            steps,
        };
        for row in &record.steps {
            record.min_stable_price = record.min_stable_price.min(row.stable_price);
            record.max_stable_price = record.max_stable_price.max(row.stable_price);
        }
        record.realized_vol = realized_volatility(&record).ok();
        record
    }

    /// Stablecoin prices from the initial state through the last executed step.
    pub fn stable_prices(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.initial_stable_price).chain(self.steps.iter().map(|r| r.stable_price))
    }

    pub fn failed(&self) -> bool {
        self.stop_time.is_some()
    }
}

/// Random stream for path `path_index` under `master_seed`.
pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Runs one path to its horizon or first failure.
pub fn run_path(config: &SimConfig, path_index: u64) -> Result<PathRecord> {
    let mut rng = path_rng(config.master_seed, path_index);
    let model = config.params.eth_returns;
    model.validate()?;
    let start = SimState::initial(&config.initial, &config.params)?;
    let mut state = start;
    let mut steps = Vec::with_capacity(config.horizon);
    for _ in 0..config.horizon {
        let price = state.eth_price * model.sample_return(&mut rng);
        let (next, row) = step(&state, price, &config.params, &config.risk);
        state = next;
        steps.extend(row);
        if state.status.is_failed() {
            break;
        }
    }
    Ok(PathRecord::finish(path_index, &start, steps, &state))
}

/// Replays a scripted Ether price sequence. The first price is the starting
/// price; each further price drives one period. The horizon is ignored.
pub fn run_scripted(config: &SimConfig, prices: &[f64]) -> Result<PathRecord> {
    let (&first, rest) = prices
        .split_first()
        .ok_or_else(|| invalid("price_script", "needs at least one price"))?;
    if let Some(&bad) = prices.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::NonPositivePrice(bad));
    }
    let initial = InitialState {
        eth_price: first,
        ..config.initial
    };
    let start = SimState::initial(&initial, &config.params)?;
    let mut state = start;
    let mut steps = Vec::with_capacity(rest.len());
    for &price in rest {
        let (next, row) = step(&state, price, &config.params, &config.risk);
        state = next;
        steps.extend(row);
        if state.status.is_failed() {
            break;
        }
    }
    Ok(PathRecord::finish(0, &start, steps, &state))
}

/// Runs `config.n_paths` independent paths on the current rayon pool.
/// Output order follows path index. Traces are dropped unless `keep_traces`.
pub fn run_ensemble(config: &SimConfig, keep_traces: bool) -> Result<Vec<PathRecord>> {
    config.validate()?;
    (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut record = run_path(config, i)?;
            if !keep_traces {
                record.steps = Vec::new();
            }
            Ok(record)
        })
        .collect()
}

/// [`run_ensemble`] on a dedicated pool of `threads` workers.
pub fn run_ensemble_with_threads(
    config: &SimConfig,
    threads: usize,
    keep_traces: bool,
) -> Result<Vec<PathRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    pool.install(|| run_ensemble(config, keep_traces))
}
