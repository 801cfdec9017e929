//! Exponentially weighted return, log-return, and variance estimates.
//!
//! The speculator's beliefs follow RiskMetrics-style recursions with memory
//! parameters `gamma` (gross return) and `delta` (log-return mean and
//! variance). A memory parameter of zero freezes the estimate.
//!
//! The variance update uses the mean *after* it has been updated for the
//! current observation, so the order of the two updates matters.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaEstimator {
    /// Memory parameter for `mean_return` (gamma).
    pub return_memory: f64,
    /// Memory parameter for `mean_log` and `variance` (delta).
    pub memory: f64,
    pub mean_return: f64,
    pub mean_log: f64,
    pub variance: f64,
}

impl EwmaEstimator {
    pub fn new(
        return_memory: f64,
        memory: f64,
        mean_return: f64,
        mean_log: f64,
        variance: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&return_memory) {
            return Err(invalid("gamma", format!("must lie in [0, 1], got {return_memory}")));
        }
        if !(0.0..=1.0).contains(&memory) {
            return Err(invalid("delta", format!("must lie in [0, 1], got {memory}")));
        }
        if !(variance >= 0.0) {
            return Err(invalid("variance", format!("must be non-negative, got {variance}")));
        }
        Ok(EwmaEstimator {
            return_memory,
            memory,
            mean_return,
            mean_log,
            variance,
        })
    }

    /// Folds in one observed price move.
    pub fn update(&self, price_prev: f64, price_new: f64) -> Result<Self> {
        if !(price_prev > 0.0) {
            return Err(Error::NonPositivePrice(price_prev));
        }
        if !(price_new > 0.0) {
            return Err(Error::NonPositivePrice(price_new));
        }
        let ratio = price_new / price_prev;
        Ok(self.update_with_ratio(ratio, ratio.ln()))
    }

    pub(crate) fn update_with_ratio(&self, ratio: f64, log_ratio: f64) -> Self {
        let g = self.return_memory;
        let d = self.memory;
        let mean_return = (1.0 - g) * self.mean_return + g * ratio;
        let mean_log = (1.0 - d) * self.mean_log + d * log_ratio;
        let dev = log_ratio - mean_log;
        let variance = (1.0 - d) * self.variance + d * dev * dev;
        EwmaEstimator {
            mean_return,
            mean_log,
            variance,
            ..*self
        }
    }
}

/// Runs the log-return mean and variance recursion over a stablecoin price
/// series. Returns one `(mean, variance)` pair per price move, so the output
/// is one shorter than `prices`.
pub fn stablecoin_estimators(
    prices: &[f64],
    mu0: f64,
    sigma0_sq: f64,
    delta: f64,
) -> Result<Vec<(f64, f64)>> {
    if let Some(&bad) = prices.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::NonPositivePrice(bad));
    }
    let mut est = EwmaEstimator::new(0.0, delta, 1.0, mu0, sigma0_sq)?;
    let out = prices
        .windows(2)
        .map(|w| {
            let ratio = w[1] / w[0];
            est = est.update_with_ratio(ratio, ratio.ln());
            (est.mean_log, est.variance)
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_memory_freezes_estimates() {
        let est = EwmaEstimator::new(0.0, 0.0, 1.00583, 0.00162, 7.8e-4).unwrap();
        let next = est.update(85.0, 60.0).unwrap();
        assert_eq!(next, est);
    }

    #[test]
    fn gross_return_step() {
        let est = EwmaEstimator::new(0.1, 0.0, 1.0, 0.0, 0.0).unwrap();
        let next = est.update(10.0, 11.0).unwrap();
        assert!((next.mean_return - 1.01).abs() < 1e-15);
    }

    #[test]
    fn variance_uses_updated_mean() {
        let est = EwmaEstimator::new(0.0, 0.5, 1.0, 0.0, 0.0).unwrap();
        let next = est.update(1.0, 0.1f64.exp()).unwrap();
        assert!((next.mean_log - 0.05).abs() < 1e-15);
        assert!((next.variance - 0.00125).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_prices() {
        let est = EwmaEstimator::new(0.1, 0.1, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(est.update(0.0, 1.0).unwrap_err(), Error::NonPositivePrice(0.0));
        assert_eq!(est.update(1.0, -2.0).unwrap_err(), Error::NonPositivePrice(-2.0));
        assert!(stablecoin_estimators(&[1.0, 0.0], 0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn constant_prices_decay_geometrically() {
        let delta = 0.3;
        let (mu0, s0) = (0.02, 0.001);
        let out = stablecoin_estimators(&[1.0; 12], mu0, s0, delta).unwrap();
        let mut mu = mu0;
        let mut var = s0;
        for (t, &(m, v)) in out.iter().enumerate() {
            assert!((m - (1.0f64 - delta).powi(t as i32 + 1) * mu0).abs() < 1e-15);
            mu *= 1.0 - delta;
            var = (1.0 - delta) * var + delta * mu * mu;
            assert!((v - var).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_prices_with_zero_mean_decay_at_memory_rate() {
        let out = stablecoin_estimators(&[0.99; 6], 0.0, 0.004, 0.25).unwrap();
        for (t, &(_, v)) in out.iter().enumerate() {
            assert!((v - 0.004 * 0.75f64.powi(t as i32 + 1)).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn variance_stays_nonnegative(
            memory in 0.0f64..=1.0,
            prices in proptest::collection::vec(1e-3f64..1e3, 2..50),
        ) {
            let out = stablecoin_estimators(&prices, 0.0, 0.0, memory).unwrap();
            prop_assert_eq!(out.len(), prices.len() - 1);
            prop_assert!(out.iter().all(|&(_, v)| v >= 0.0));
        }
    }
}
