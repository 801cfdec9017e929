//! The speculator's per-period supply decision and its settlement.

use crate::error::{Error, Result};
use crate::model::{ClearingInputs, FailureReason, HolderState, SpeculatorState, SystemStatus};
use crate::risk::{constraint_interval, lambda_tilde, FeasibleInterval, LambdaTilde, RiskConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// The expected-equity optimum lies inside the risk-constrained interval.
    UnconstrainedOptimum,
    /// Optimum below the interval; the lower bound binds.
    ClampedLow,
    /// Optimum above the interval; the upper bound binds (forced deleveraging).
    ClampedHigh,
    /// Risk constraint unattainable; decided under the liquidation constraint alone.
    Recovery,
    /// No trade was possible or needed (zero demand, attacker exit bookkeeping).
    Settlement,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::UnconstrainedOptimum => "unconstrained",
            Regime::ClampedLow => "clamped_low",
            Regime::ClampedHigh => "clamped_high",
            Regime::Recovery => "recovery",
            Regime::Settlement => "settlement",
        }
    }

    pub fn is_binding(self) -> bool {
        matches!(self, Regime::ClampedLow | Regime::ClampedHigh | Regime::Recovery)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    /// Change in stablecoin supply.
    pub delta: f64,
    /// Clearing price of the stablecoin.
    pub price: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecideOutcome {
    /// `None` when the period fails.
    pub decision: Option<StepDecision>,
    pub status: SystemStatus,
    pub lambda_tilde: Option<LambdaTilde>,
    /// Unconstrained optimum, for diagnostics.
    pub optimum: f64,
}

/// `x / (delta - y)`.
pub fn clearing_price(x: f64, delta: f64, y: f64) -> Result<f64> {
    if !(delta > y) {
        return Err(Error::PriceUndefined { delta, y });
    }
    Ok(x / (delta - y))
}

/// Critical point `y + sqrt(-y r x)` of the expected-equity objective.
pub fn unconstrained_optimum(inp: &ClearingInputs, r: f64) -> f64 {
    inp.y + (-inp.y * r * inp.x).max(0.0).sqrt()
}

fn clamp_into(optimum: f64, lo: f64, hi: f64) -> (f64, Regime) {
    if optimum < lo {
        (lo, Regime::ClampedLow)
    } else if optimum > hi {
        (hi, Regime::ClampedHigh)
    } else {
        (optimum, Regime::UnconstrainedOptimum)
    }
}

/// Picks the supply change for one period.
///
/// The optimum is clamped into the risk-constrained interval. If that
/// interval is empty the speculator falls back to the liquidation constraint
/// alone (recovery mode); if that is empty too, the period fails.
pub fn decide(
    inp: &ClearingInputs,
    spec: &SpeculatorState,
    cfg: &RiskConfig,
    beta: f64,
) -> DecideOutcome {
    let optimum = unconstrained_optimum(inp, spec.r);
    // A counter-cyclic bound with zero perceived volatility is unattainable.
    let lt = lambda_tilde(cfg, spec.mu, spec.sigma2.sqrt()).ok();

    let risk = match lt {
        Some(lt) => constraint_interval(inp, spec.liabilities, lt.value, beta),
        None => FeasibleInterval::Infeasible,
    };
    let (interval, recovery) = match risk {
        FeasibleInterval::Interval { .. } => (risk, false),
        FeasibleInterval::Infeasible => (constraint_interval(inp, spec.liabilities, 1.0, beta), true),
    };
    let failed = DecideOutcome {
        decision: None,
        status: SystemStatus::Failed(FailureReason::InfeasibleLiquidation),
        lambda_tilde: lt,
        optimum,
    };
    let Some((lo, hi)) = interval.bounds() else {
        return failed;
    };
    let status = if recovery {
        SystemStatus::Recovery
    } else {
        SystemStatus::Normal
    };

    if inp.x <= 0.0 {
        // Without demand there is no counterparty to repurchase from.
        if 0.0 > inp.y && lo <= 0.0 && 0.0 <= hi {
            return DecideOutcome {
                decision: Some(StepDecision {
                    delta: 0.0,
                    price: 0.0,
                    regime: Regime::Settlement,
                }),
                status,
                lambda_tilde: lt,
                optimum,
            };
        }
        return failed;
    }

    let (delta, regime) = clamp_into(optimum, lo, hi);
    let Ok(price) = clearing_price(inp.x, delta, inp.y) else {
        return failed;
    };
    let regime = if recovery { Regime::Recovery } else { regime };
    DecideOutcome {
        decision: Some(StepDecision {
            delta,
            price,
            regime,
        }),
        status,
        lambda_tilde: lt,
        optimum,
    }
}

/// Applies a decision: the speculator's supply change is paid for (or funded)
/// in Ether at the period's Ether price, and the holder ends up owning the
/// whole outstanding supply.
///
/// The holder's Ether moves by the opposite amount in both demand modes, so
/// total Ether is conserved; under fixed-dollar demand that balance is
/// bookkeeping only and may go negative.
pub fn settle(
    spec: &SpeculatorState,
    holder: &HolderState,
    decision: &StepDecision,
    eth_price: f64,
) -> Result<(SpeculatorState, HolderState)> {
    if !(eth_price > 0.0) {
        return Err(Error::NonPositivePrice(eth_price));
    }
    let eth_flow = decision.delta * decision.price / eth_price;
    let mut n = spec.n + eth_flow;
    if n < 0.0 {
        // Repurchasing at the exact capital bound can round a hair below zero.
        if n > -1e-12 * spec.n.max(1.0) {
            n = 0.0;
        } else {
            return Err(Error::InsolventSettlement(n));
        }
    }
    let liabilities = spec.liabilities + decision.delta;
    let next_spec = SpeculatorState {
        n,
        liabilities,
        ..*spec
    };
    let next_holder = HolderState {
        n_bar: holder.n_bar - eth_flow,
        m_bar: liabilities,
        weights: holder.weights,
    };
    Ok((next_spec, next_holder))
}
