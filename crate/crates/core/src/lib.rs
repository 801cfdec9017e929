//! Agent-based simulator of a collateral-backed stablecoin market.
//!
//! A leveraged speculator issues stablecoins against Ether collateral and
//! chooses each period how much supply to add or repurchase, subject to a
//! liquidation constraint and a self-imposed risk threshold. Outside holders
//! buy the coins, and the market clears at a single price per period.
//!
//! The crate covers the one-period decision in closed form ([`decision`],
//! [`risk`]), the belief updates ([`expectations`]), seeded Monte Carlo paths
//! ([`simulate`]), ensemble statistics and steady-state oracles
//! ([`analytics`]), and liquidation-bet scenarios ([`attacks`]).

pub mod analytics;
pub mod attacks;
pub mod decision;
pub mod error;
pub mod expectations;
pub mod model;
pub mod output;
pub mod risk;
pub mod simulate;

pub use analytics::{EnsembleSummary, Heatmap, Metric, PathMetrics, SteadyStateOracle};
pub use attacks::{AttackPlan, AttackResult};
pub use decision::{decide, settle, DecideOutcome, Regime, StepDecision};
pub use error::{Error, Result};
pub use expectations::EwmaEstimator;
pub use model::{
    ClearingInputs, DemandMode, FailureReason, HolderState, MarketParams, PortfolioWeights,
    SpeculatorState, SystemStatus,
};
pub use risk::{FeasibleInterval, LambdaTilde, RiskConfig};
pub use simulate::{InitialState, PathRecord, ReturnModel, SimConfig, SimState, StepRow};
