use thiserror::Error;

/// Errors raised by the market model. Path failures (infeasible liquidation,
/// price floor breaches) are not errors; they are reported through
/// [`SystemStatus`](crate::model::SystemStatus).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("price must be strictly positive, got {0}")]
    NonPositivePrice(f64),

    #[error("speculator has liabilities {liabilities} but no assets; leverage is unbounded")]
    UnboundedLeverage { liabilities: f64 },

    #[error("quantile {0} outside the open interval (0, 0.5)")]
    InvalidQuantile(f64),

    #[error("negative cyclicality exponent requires strictly positive volatility")]
    DegenerateSigma,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("speculator value plus demand is zero; deleveraging bound undefined")]
    NoCapital,

    #[error("clearing price undefined for supply change {delta} at or below free-supply bound {y}")]
    PriceUndefined { delta: f64, y: f64 },

    #[error("settlement leaves speculator with negative Ether balance {0}")]
    InsolventSettlement(f64),

    #[error("need at least two returns to estimate volatility, got {0}")]
    TooShort(usize),

    #[error("no path failed under both strategies; stopping-time comparison is empty")]
    NoCommonFailures,

    #[error("attacker exit needs {needed} coins but holds only {held}")]
    OversoldExit { needed: f64, held: f64 },

    #[error("no profitable attack: best profit {0}")]
    NoProfitableAttack(f64),

    #[error("invalid attack plan: {0}")]
    InvalidPlan(String),

    #[error("csv output failed: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
