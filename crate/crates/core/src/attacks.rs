//! Liquidation bets: an outside attacker buys stablecoins ahead of an
//! anticipated Ether decline and sells them back after forced deleveraging
//! has pushed the stablecoin price up.
//!
//! The attacker's `δ` dollars join outside demand at the entry period and
//! stay in it while the coins are held. At the exit period demand drops by
//! the `δ + ε` dollars the attacker withdraws, and the speculator does not
//! trade. The exit is sized against the clearing price of the period just
//! before exit, which is the last price the attacker can observe.

use crate::decision::Regime;
use crate::error::{invalid, Error, Result};
use crate::expectations::EwmaEstimator;
use crate::model::{leverage, DemandMode, MarketParams};
use crate::risk::{lambda_tilde, RiskConfig};
use crate::simulate::{run_scripted, step, InitialState, SimConfig, SimState, StepRow};

/// Relative slack allowed when an exit spends exactly the coins held.
const EXIT_SLACK: f64 = 1e-12;
/// Profits below this fraction of the stake are rounding noise. A large
/// entry that saturates the constraint at once leaves the price flat and the
/// profit at zero up to a few ulps.
const PROFIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    /// Period at which the attacker buys.
    pub entry_time: usize,
    /// Dollars spent at entry (`δ`).
    pub entry_dollars: f64,
    /// Period at which the attacker sells; after `entry_time`.
    pub exit_time: usize,
    /// Dollars received at exit (`δ + ε`).
    pub exit_dollars: f64,
    /// Ether prices; the first is the starting price, then one per period.
    pub price_script: Vec<f64>,
}

impl AttackPlan {
    pub fn validate(&self) -> Result<()> {
        if self.entry_time == 0 {
            return Err(Error::InvalidPlan("entry_time must be at least 1".into()));
        }
        if self.exit_time <= self.entry_time {
            return Err(Error::InvalidPlan(format!(
                "exit_time {} must come after entry_time {}",
                self.exit_time, self.entry_time
            )));
        }
        if self.price_script.len() <= self.exit_time {
            return Err(Error::InvalidPlan(format!(
                "price script has {} prices, needs {}",
                self.price_script.len(),
                self.exit_time + 1
            )));
        }
        if !(self.entry_dollars >= 0.0 && self.entry_dollars.is_finite()) {
            return Err(Error::InvalidPlan("entry_dollars must be non-negative".into()));
        }
        if !(self.exit_dollars >= 0.0 && self.exit_dollars.is_finite()) {
            return Err(Error::InvalidPlan("exit_dollars must be non-negative".into()));
        }
        if let Some(&bad) = self.price_script.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::NonPositivePrice(bad));
        }
        Ok(())
    }

    pub fn profit(&self) -> f64 {
        self.exit_dollars - self.entry_dollars
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub plan: AttackPlan,
    pub coins_acquired: f64,
    /// `ε`, in dollars.
    pub profit_usd: f64,
    /// `100 ε / δ`; zero when nothing was invested.
    pub return_pct: f64,
    pub rows: Vec<StepRow>,
    /// Outside demand in effect at each row.
    pub demand: Vec<f64>,
}

/// Starting point of the liquidation examples: a risk-neutral speculator at
/// steady state with 1.8 Ether, 100.583 coins outstanding and fixed demand
/// of 100 dollars, with frozen expectations.
pub fn liquidation_scenario() -> SimConfig {
    SimConfig {
        params: MarketParams {
            gamma: 0.0,
            delta: 0.0,
            demand: DemandMode::FixedDollar { amount: 100.0 },
            ..Default::default()
        },
        risk: RiskConfig::RiskNeutral,
        initial: InitialState {
            n: 1.8,
            liabilities: 100.583,
            eth_price: 85.0,
            r: 1.00583,
            ..Default::default()
        },
        horizon: 3,
        n_paths: 1,
        master_seed: 0,
    }
}

/// Replays a price script with no attacker.
pub fn run_spiral(config: &SimConfig, price_script: &[f64]) -> Result<Vec<StepRow>> {
    let record = run_scripted(config, price_script)?;
    if let Some(t) = record.stop_time {
        return Err(Error::InvalidPlan(format!("system failed at period {t}")));
    }
    Ok(record.steps)
}

fn base_demand(config: &SimConfig) -> Result<f64> {
    match config.params.demand {
        DemandMode::FixedDollar { amount } => Ok(amount),
        DemandMode::HolderWeights => Err(invalid("demand", "attacks need fixed-dollar demand")),
    }
}

fn with_demand(params: &MarketParams, amount: f64) -> MarketParams {
    MarketParams {
        demand: DemandMode::FixedDollar { amount },
        ..*params
    }
}

/// State just before the exit period.
struct Holding {
    state: SimState,
    coins: f64,
    rows: Vec<StepRow>,
    demand: Vec<f64>,
}

fn hold(config: &SimConfig, script: &[f64], entry: usize, exit: usize, delta: f64) -> Result<Holding> {
    let base = base_demand(config)?;
    let initial = InitialState {
        eth_price: script[0],
        ..config.initial
    };
    let mut state = SimState::initial(&initial, &config.params)?;
    let mut rows = Vec::with_capacity(exit);
    let mut demand = Vec::with_capacity(exit);
    let mut coins = 0.0;
    for t in 1..exit {
        let amount = if t >= entry { base + delta } else { base };
        let params = with_demand(&config.params, amount);
        let (next, row) = step(&state, script[t], &params, &config.risk);
        state = next;
        let Some(row) = row.filter(|_| !state.status.is_failed()) else {
            return Err(Error::InvalidPlan(format!("system failed at period {t}")));
        };
        if t == entry {
            coins = delta / row.stable_price;
        }
        rows.push(row);
        demand.push(amount);
    }
    Ok(Holding {
        state,
        coins,
        rows,
        demand,
    })
}

/// Exit period: beliefs update and the market clears against the existing
/// supply while the speculator stands still.
fn exit_step(state: &SimState, eth_price: f64, amount: f64, params: &MarketParams, risk: &RiskConfig) -> Result<StepRow> {
    let beliefs = EwmaEstimator {
        return_memory: params.gamma,
        memory: params.delta,
        mean_return: state.spec.r,
        mean_log: state.spec.mu,
        variance: state.spec.sigma2,
    }
    .update(state.eth_price, eth_price)?;
    let price = amount / state.spec.liabilities;
    if !(price > 0.0) {
        return Err(Error::InvalidPlan(format!("exit leaves demand at {amount}")));
    }
    Ok(StepRow {
        t: state.t + 1,
        eth_price,
        stable_price: price,
        delta: 0.0,
        liabilities: state.spec.liabilities,
        n: state.spec.n,
        leverage: leverage(&state.spec, eth_price, params.beta)?,
        lambda_tilde: lambda_tilde(risk, beliefs.mean_log, beliefs.variance.sqrt()).map_or(f64::NAN, |l| l.value),
        regime: Regime::Settlement,
    })
}

/// Simulates the attack. Fails with `OversoldExit` if the exit needs more
/// coins than were bought at the price observed just before exit.
pub fn run_attack(plan: &AttackPlan, config: &SimConfig) -> Result<AttackResult> {
    plan.validate()?;
    let base = base_demand(config)?;
    let script = &plan.price_script;
    let delta = plan.entry_dollars;
    let Holding {
        state,
        coins,
        mut rows,
        mut demand,
    } = hold(config, script, plan.entry_time, plan.exit_time, delta)?;

    let last_price = state.stable_price;
    let needed = plan.exit_dollars / last_price;
    if needed > coins * (1.0 + EXIT_SLACK) {
        return Err(Error::OversoldExit { needed, held: coins });
    }
    let amount = base + delta - plan.exit_dollars;
    rows.push(exit_step(&state, script[plan.exit_time], amount, &config.params, &config.risk)?);
    demand.push(amount);

    let profit_usd = plan.profit();
    Ok(AttackResult {
        plan: plan.clone(),
        coins_acquired: coins,
        profit_usd,
        return_pct: if delta > 0.0 { 100.0 * profit_usd / delta } else { 0.0 },
        rows,
        demand,
    })
}

/// Largest profit for a given entry size: the whole position sold at the
/// last observed price.
fn best_profit(config: &SimConfig, script: &[f64], entry: usize, exit: usize, delta: f64) -> Result<f64> {
    let h = hold(config, script, entry, exit, delta)?;
    Ok(h.coins * h.state.stable_price - delta)
}

/// Searches `δ ∈ (0, D/2]` for the largest profit with the exit at its coin
/// bound. A coarse grid picks the bracket, golden-section search refines it.
pub fn optimize_attack(config: &SimConfig, price_script: &[f64], entry_time: usize, exit_time: usize) -> Result<AttackResult> {
    let probe = AttackPlan {
        entry_time,
        entry_dollars: 0.0,
        exit_time,
        exit_dollars: 0.0,
        price_script: price_script.to_vec(),
    };
    probe.validate()?;
    let upper = base_demand(config)? / 2.0;
    let eps = |d: f64| best_profit(config, price_script, entry_time, exit_time, d).unwrap_or(f64::NEG_INFINITY);

    const GRID: usize = 100;
    let grid: Vec<f64> = (1..=GRID).map(|i| upper * i as f64 / GRID as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&d| eps(d)).collect();
    let best = (0..GRID).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);

    let mut lo = if best == 0 { upper * 1e-6 } else { grid[best - 1] };
    let mut hi = grid[(best + 1).min(GRID - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (eps(a), eps(b));
    for _ in 0..80 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = eps(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = eps(a);
        }
    }
    let (delta, profit) = [(grid[best], values[best]), (a, fa), (b, fb)]
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    if !(profit > PROFIT_TOLERANCE * delta.max(1.0)) {
        return Err(Error::NoProfitableAttack(profit));
    }
    let plan = AttackPlan {
        entry_time,
        entry_dollars: delta,
        exit_time,
        exit_dollars: delta + profit,
        price_script: price_script.to_vec(),
    };
    run_attack(&plan, config)
}

/// Profit at the coin bound for each entry size, for inspecting the shape of
/// the objective. `None` where the entry is large enough that the
/// speculator cannot meet the liquidation constraint before exit.
pub fn profit_curve(config: &SimConfig, price_script: &[f64], entry_time: usize, exit_time: usize, deltas: &[f64]) -> Vec<Option<f64>> {
    deltas
        .iter()
        .map(|&d| best_profit(config, price_script, entry_time, exit_time, d).ok())
        .collect()
}
