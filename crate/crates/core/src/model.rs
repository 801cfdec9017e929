//! Domain state for the two-agent stablecoin market and the reduced clearing
//! quantities every closed form is written in.
//!
//! Within a period the market is summarized by three numbers:
//!
//! * `x`: dollar value of new stablecoin demand (`x >= 0`),
//! * `y`: minus the free supply of coins available to trade (`y <= 0`),
//! * `z`: dollar value of the speculator's Ether (`z >= 0`).
//!
//! The clearing price for a supply change `delta > y` is then `x / (delta - y)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::simulate::ReturnModel;

/// How stablecoin demand enters the market each period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandMode {
    /// Holder keeps a constant dollar amount in the stablecoin (unit-elastic demand).
    FixedDollar { amount: f64 },
    /// Holder rebalances to fixed portfolio weights.
    HolderWeights,
}

impl Default for DemandMode {
    fn default() -> Self {
        DemandMode::FixedDollar { amount: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    /// Collateral liquidation threshold.
    pub beta: f64,
    /// Memory parameter for the expected gross return.
    pub gamma: f64,
    /// Memory parameter for the log-return mean and variance.
    pub delta: f64,
    pub demand: DemandMode,
    pub eth_returns: ReturnModel,
    /// Stablecoin price (USD) below which the system counts as failed.
    pub price_floor: f64,
    /// Number of consecutive sub-floor steps before failure is declared.
    pub floor_steps: u32,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            beta: 1.5,
            gamma: 0.1,
            delta: 0.1,
            demand: DemandMode::default(),
            eth_returns: ReturnModel::default(),
            price_floor: 0.5,
            floor_steps: 1,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("gamma", format!("must lie in [0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(invalid("delta", format!("must lie in [0, 1], got {}", self.delta)));
        }
        if let DemandMode::FixedDollar { amount } = self.demand {
            if !(amount > 0.0 && amount.is_finite()) {
                return Err(invalid("demand.amount", format!("must be positive, got {amount}")));
            }
        }
        if !(self.price_floor >= 0.0 && self.price_floor.is_finite()) {
            return Err(invalid(
                "price_floor",
                format!("must be non-negative, got {}", self.price_floor),
            ));
        }
        if self.floor_steps == 0 {
            return Err(invalid("floor_steps", "must be at least 1"));
        }
        self.eth_returns.validate()
    }
}

/// The aggregate speculator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeculatorState {
    /// Ether held.
    pub n: f64,
    /// Stablecoins outstanding (the speculator's liabilities).
    pub liabilities: f64,
    /// Expected gross Ether return.
    pub r: f64,
    /// Expected Ether log return.
    pub mu: f64,
    /// Expected Ether log-return variance.
    pub sigma2: f64,
}

impl SpeculatorState {
    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 0.0) {
            return Err(invalid("n", format!("must be non-negative, got {}", self.n)));
        }
        if !(self.liabilities >= 0.0) {
            return Err(invalid(
                "liabilities",
                format!("must be non-negative, got {}", self.liabilities),
            ));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(invalid("sigma2", format!("must be non-negative, got {}", self.sigma2)));
        }
        Ok(())
    }
}

/// Holder portfolio weights on Ether and the stablecoin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub eth: f64,
    pub stable: f64,
}

impl PortfolioWeights {
    /// Weights with `stable` in the stablecoin and the remainder in Ether.
    pub fn with_stable(stable: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&stable) {
            return Err(invalid("w_d", format!("must lie in [0, 1], got {stable}")));
        }
        Ok(PortfolioWeights {
            eth: 1.0 - stable,
            stable,
        })
    }
}

impl Default for PortfolioWeights {
    fn default() -> Self {
        PortfolioWeights { eth: 0.5, stable: 0.5 }
    }
}

/// The stablecoin holder. After every settled step the holder owns the
/// entire outstanding supply, so `m_bar` equals the speculator's liabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderState {
    pub n_bar: f64,
    pub m_bar: f64,
    pub weights: PortfolioWeights,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingInputs {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// Even the protocol's liquidation constraint has no feasible supply change.
    InfeasibleLiquidation,
    /// The stablecoin price fell below the configured floor.
    PriceFloor,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::InfeasibleLiquidation => "infeasible_liquidation",
            FailureReason::PriceFloor => "price_floor",
        }
    }
}

/// Once `Failed`, a path never steps again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SystemStatus {
    #[default]
    Normal,
    /// The speculator's own risk constraint is unattainable; only the
    /// liquidation constraint is enforced.
    Recovery,
    Failed(FailureReason),
}

impl SystemStatus {
    pub fn is_failed(self) -> bool {
        matches!(self, SystemStatus::Failed(_))
    }
}

/// Computes `(x, y, z)` for the current period at Ether price `eth_price`.
pub fn derive_clearing_inputs(
    spec: &SpeculatorState,
    holder: &HolderState,
    eth_price: f64,
    params: &MarketParams,
) -> Result<ClearingInputs> {
    if !(eth_price > 0.0) {
        return Err(Error::NonPositivePrice(eth_price));
    }
    let z = spec.n * eth_price;
    let inputs = match params.demand {
        DemandMode::FixedDollar { amount } => ClearingInputs {
            x: amount,
            y: -spec.liabilities,
            z,
        },
        DemandMode::HolderWeights => {
            let w_d = holder.weights.stable;
            ClearingInputs {
                x: w_d * holder.n_bar * eth_price,
                y: w_d * holder.m_bar - spec.liabilities,
                z,
            }
        }
    };
    Ok(inputs)
}

/// `beta * L / (n * pE)`.
pub fn leverage(spec: &SpeculatorState, eth_price: f64, beta: f64) -> Result<f64> {
    if spec.liabilities == 0.0 {
        return Ok(0.0);
    }
    let assets = spec.n * eth_price;
    if !(assets > 0.0) {
        return Err(Error::UnboundedLeverage {
            liabilities: spec.liabilities,
        });
    }
    Ok(beta * spec.liabilities / assets)
}

pub fn holder_value(holder: &HolderState, eth_price: f64, stable_price: f64) -> f64 {
    holder.n_bar * eth_price + holder.m_bar * stable_price
}
