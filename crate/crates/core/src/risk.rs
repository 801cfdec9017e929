//! Speculator risk thresholds and the leverage-constraint geometry.
//!
//! A leverage bound `lambda_tilde` on `beta * L / assets`, combined with the
//! clearing price `x / (delta - y)`, turns into a downward-opening quadratic
//! in the supply change `delta`:
//!
//! ```text
//! q(delta) = -beta delta^2 + delta (lt (z + x) - beta (L - y)) - lt z y + beta L y
//! ```
//!
//! The constraint holds where `q >= 0`, intersected with `delta > y`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf_inv;

use crate::error::{Error, Result};
use crate::model::ClearingInputs;

/// Relative size of a discriminant treated as exactly zero (tangent root).
pub const TANGENT_TOLERANCE: f64 = 1e-12;

/// Family of self-imposed leverage bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskConfig {
    /// Value-at-Risk at quantile `a` assuming normal log returns.
    VarNormal { a: f64 },
    /// Value-at-Risk at quantile `a` under the maximally heavy-tailed
    /// symmetric distribution with finite variance (Chebyshev bound).
    VarHeavyTail { a: f64 },
    /// `ln lt = mu - alpha * sigma^b`; `b > 0` is pro-cyclical, `b < 0` counter-cyclical.
    Generalized { alpha: f64, b: f64 },
    /// Only the protocol's liquidation constraint applies.
    RiskNeutral,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig::VarNormal { a: 0.1 }
    }
}

/// The seven named speculator behaviours compared in the strategy sweeps.
pub const STRATEGY_NAMES: [&str; 7] = ["VaRN.1", "VaRN.01", "VaRM.1", "VaRM.01", "AC1", "AC2", "RN"];

impl RiskConfig {
    /// Looks up a roster strategy by name, e.g. `VaRN.01` or `AC2`.
    pub fn from_name(name: &str) -> Option<Self> {
        let cfg = match name {
            "VaRN.1" => RiskConfig::VarNormal { a: 0.1 },
            "VaRN.01" => RiskConfig::VarNormal { a: 0.01 },
            "VaRM.1" => RiskConfig::VarHeavyTail { a: 0.1 },
            "VaRM.01" => RiskConfig::VarHeavyTail { a: 0.01 },
            "AC1" => RiskConfig::Generalized { alpha: 0.01, b: -0.5 },
            "AC2" => RiskConfig::Generalized { alpha: 0.02, b: -0.5 },
            "RN" => RiskConfig::RiskNeutral,
            _ => return None,
        };
        Some(cfg)
    }

    pub fn roster() -> Vec<(&'static str, RiskConfig)> {
        STRATEGY_NAMES
            .iter()
            .map(|&name| (name, RiskConfig::from_name(name).expect("roster name")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RiskConfig::VarNormal { a } => alpha_from_quantile_normal(a).map(|_| ()),
            RiskConfig::VarHeavyTail { a } => alpha_from_quantile_heavytail(a).map(|_| ()),
            RiskConfig::Generalized { alpha, b } => {
                if alpha.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(crate::error::invalid("risk", "alpha and b must be finite"))
                }
            }
            RiskConfig::RiskNeutral => Ok(()),
        }
    }
}

/// `-sqrt(2) * erfinv(2a - 1)`: the number of standard deviations below the
/// mean at which a normal distribution puts mass `a`.
pub fn alpha_from_quantile_normal(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::InvalidQuantile(a));
    }
    Ok(-std::f64::consts::SQRT_2 * erf_inv(2.0 * a - 1.0))
}

/// Inverts `a = 1 / (2 alpha^2)`. `a = 0.5` is accepted and gives `alpha = 1`,
/// the edge of the bound's validity.
pub fn alpha_from_quantile_heavytail(a: f64) -> Result<f64> {
    if !(a > 0.0 && a <= 0.5) {
        return Err(Error::InvalidQuantile(a));
    }
    Ok((1.0 / (2.0 * a)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaTilde {
    /// Threshold actually enforced, capped at 1.
    pub value: f64,
    /// `exp(mu - alpha sigma^b)` before the cap.
    pub uncapped: f64,
}

pub fn lambda_tilde(cfg: &RiskConfig, mu: f64, sigma: f64) -> Result<LambdaTilde> {
    let uncapped = match *cfg {
        RiskConfig::RiskNeutral => 1.0,
        RiskConfig::VarNormal { a } => (mu - alpha_from_quantile_normal(a)? * sigma).exp(),
        RiskConfig::VarHeavyTail { a } => (mu - alpha_from_quantile_heavytail(a)? * sigma).exp(),
        RiskConfig::Generalized { alpha, b } => {
            if b < 0.0 && !(sigma > 0.0) {
                return Err(Error::DegenerateSigma);
            }
            (mu - alpha * sigma.powf(b)).exp()
        }
    };
    Ok(LambdaTilde {
        value: uncapped.min(1.0),
        uncapped,
    })
}

/// Feasible supply changes for a leverage bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleInterval {
    /// `[lo, hi]` with `hi > y`. When `lo == y` the lower end is open.
    Interval { lo: f64, hi: f64 },
    Infeasible,
}

impl FeasibleInterval {
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            FeasibleInterval::Interval { lo, hi } => Some((lo, hi)),
            FeasibleInterval::Infeasible => None,
        }
    }

    pub fn contains(&self, delta: f64) -> bool {
        self.bounds().is_some_and(|(lo, hi)| lo <= delta && delta <= hi)
    }
}

/// Coefficients `(a, b, c)` of `a delta^2 + b delta + c`.
pub fn constraint_quadratic(inp: &ClearingInputs, liabilities: f64, lt: f64, beta: f64) -> (f64, f64, f64) {
    let ClearingInputs { x, y, z } = *inp;
    (
        -beta,
        lt * (z + x) - beta * (liabilities - y),
        -lt * z * y + beta * liabilities * y,
    )
}

/// Discriminant of the constraint quadratic together with the magnitude used
/// to judge whether it is numerically zero.
fn discriminant(a: f64, b: f64, c: f64) -> (f64, f64) {
    let four_ac = 4.0 * a * c;
    (b * b - four_ac, b * b + four_ac.abs())
}

pub fn constraint_interval(inp: &ClearingInputs, liabilities: f64, lt: f64, beta: f64) -> FeasibleInterval {
    let (a, b, c) = constraint_quadratic(inp, liabilities, lt, beta);
    let (disc, scale) = discriminant(a, b, c);
    let (lo, hi) = if disc.abs() <= TANGENT_TOLERANCE * scale {
        let root = -b / (2.0 * a);
        (root, root)
    } else if disc < 0.0 {
        return FeasibleInterval::Infeasible;
    } else {
        // Cancellation-free pair of roots.
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        let r1 = q / a;
        let r2 = if q != 0.0 { c / q } else { r1 };
        (r1.min(r2), r1.max(r2))
    };
    let y = inp.y;
    if hi <= y {
        return FeasibleInterval::Infeasible;
    }
    FeasibleInterval::Interval { lo: lo.max(y), hi }
}

/// False exactly when `(lt (x + z) - beta L w_d)^2 < 4 beta lt L x w_e`,
/// i.e. the constraint quadratic has no real roots. Assumes the holder owns
/// the whole supply, so that `y = -w_e L`.
pub fn is_maintainable(
    inp: &ClearingInputs,
    liabilities: f64,
    lt: f64,
    beta: f64,
    w_d: f64,
    w_e: f64,
) -> bool {
    let gap = lt * (inp.x + inp.z) - beta * liabilities * w_d;
    let lhs = gap * gap;
    let rhs = 4.0 * beta * lt * liabilities * inp.x * w_e;
    let diff = lhs - rhs;
    !(diff < 0.0 && diff.abs() > TANGENT_TOLERANCE * (lhs + rhs))
}

/// Largest repurchase the speculator can fund from its own Ether value:
/// `z y / (z + x)`. Always strictly above `y` when `x > 0`.
pub fn max_deleverage(inp: &ClearingInputs) -> Result<f64> {
    let total = inp.z + inp.x;
    if !(total > 0.0) {
        return Err(Error::NoCapital);
    }
    Ok(inp.z * inp.y / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(inp: &ClearingInputs, l: f64, lt: f64, beta: f64, d: f64) -> f64 {
        let (a, b, c) = constraint_quadratic(inp, l, lt, beta);
        a * d * d + b * d + c
    }

    #[test]
    fn normal_alpha_values() {
        assert!((alpha_from_quantile_normal(0.1).unwrap() - 1.281_551_566).abs() < 1e-8);
        assert!((alpha_from_quantile_normal(0.01).unwrap() - 2.326_347_874).abs() < 1e-8);
        let near_median = alpha_from_quantile_normal(0.5 - 1e-9).unwrap();
        assert!(near_median > 0.0 && near_median < 1e-8);
        assert!(alpha_from_quantile_normal(0.5).is_err());
        assert!(alpha_from_quantile_normal(0.0).is_err());
    }

    #[test]
    fn heavytail_alpha_values() {
        assert_eq!(alpha_from_quantile_heavytail(0.5).unwrap(), 1.0);
        assert!((alpha_from_quantile_heavytail(0.1).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!((alpha_from_quantile_heavytail(0.01).unwrap() - 50f64.sqrt()).abs() < 1e-14);
        assert!(alpha_from_quantile_heavytail(0.6).is_err());
        assert!(alpha_from_quantile_heavytail(-0.1).is_err());
    }

    #[test]
    fn lambda_tilde_examples() {
        let rn = lambda_tilde(&RiskConfig::RiskNeutral, 0.3, 0.9).unwrap();
        assert_eq!(rn.value, 1.0);

        let var = lambda_tilde(&RiskConfig::VarNormal { a: 0.1 }, 0.00162, 0.027925).unwrap();
        let expect = (0.00162 - 1.281_551_565_5 * 0.027925f64).exp();
        assert!((var.value - expect).abs() < 1e-10);
        assert!((var.value - 0.96641).abs() < 1e-5);

        let ac = lambda_tilde(&RiskConfig::Generalized { alpha: 0.01, b: -0.5 }, 0.0, 0.04).unwrap();
        assert!((ac.value - (-0.05f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn lambda_tilde_is_capped_but_keeps_raw_value() {
        let lt = lambda_tilde(&RiskConfig::VarNormal { a: 0.1 }, 0.2, 0.01).unwrap();
        assert_eq!(lt.value, 1.0);
        assert!(lt.uncapped > 1.0);
    }

    #[test]
    fn counter_cyclic_needs_positive_sigma() {
        let cfg = RiskConfig::Generalized { alpha: 0.01, b: -0.5 };
        assert_eq!(lambda_tilde(&cfg, 0.0, 0.0).unwrap_err(), Error::DegenerateSigma);
    }

    #[test]
    fn roster_round_trips_names() {
        let roster = RiskConfig::roster();
        assert_eq!(roster.len(), 7);
        assert_eq!(roster[6].1, RiskConfig::RiskNeutral);
        assert!(RiskConfig::from_name("VaRX").is_none());
    }

    #[test]
    fn spiral_first_step_upper_root() {
        let inp = ClearingInputs {
            x: 100.0,
            y: -100.583,
            z: 1.8 * 83.0,
        };
        let (lo, hi) = constraint_interval(&inp, 100.583, 1.0, 1.5).bounds().unwrap();
        assert!((hi + 3.115).abs() < 0.006, "{hi}");
        assert!(lo < hi);
        assert!(q(&inp, 100.583, 1.0, 1.5, hi).abs() < 1e-8 * 1e4);
        assert!(is_maintainable(&inp, 100.583, 1.0, 1.5, 0.0, 1.0));
    }

    #[test]
    fn well_collateralized_interval_contains_zero() {
        let inp = ClearingInputs {
            x: 100.0,
            y: -100.0,
            z: 400.0,
        };
        assert!(constraint_interval(&inp, 100.0, 0.95, 1.5).contains(0.0));
    }

    #[test]
    fn interval_matches_grid_scan_of_sign() {
        // Brute-force sign scan over (y, y + K] on small instances.
        let cases = [
            (ClearingInputs { x: 5.0, y: -4.0, z: 8.0 }, 4.0, 0.9, 1.5),
            (ClearingInputs { x: 2.0, y: -3.0, z: 3.5 }, 3.0, 1.0, 1.2),
            (ClearingInputs { x: 7.0, y: -1.5, z: 2.0 }, 2.5, 0.7, 1.8),
        ];
        for (inp, l, lt, beta) in cases {
            let step = 1e-4;
            let mut first = None;
            let mut last = None;
            let mut d = inp.y + step;
            while d <= inp.y + 20.0 {
                if q(&inp, l, lt, beta, d) >= 0.0 {
                    first.get_or_insert(d);
                    last = Some(d);
                }
                d += step;
            }
            match constraint_interval(&inp, l, lt, beta) {
                FeasibleInterval::Interval { lo, hi } => {
                    assert!((first.unwrap() - lo).abs() <= 2.0 * step, "{lo} vs {first:?}");
                    assert!((last.unwrap() - hi).abs() <= 2.0 * step, "{hi} vs {last:?}");
                }
                FeasibleInterval::Infeasible => assert!(first.is_none()),
            }
        }
    }

    #[test]
    fn deleverage_bound_examples() {
        let none = ClearingInputs { x: 100.0, y: -100.0, z: 0.0 };
        assert_eq!(max_deleverage(&none).unwrap(), 0.0);

        let inp = ClearingInputs { x: 100.0, y: -100.0, z: 300.0 };
        let d = max_deleverage(&inp).unwrap();
        assert_eq!(d, -75.0);
        let price = inp.x / (d - inp.y);
        assert_eq!(price, 4.0);
        assert_eq!(-d * price, inp.z);

        assert_eq!(
            max_deleverage(&ClearingInputs { x: 0.0, y: -1.0, z: 0.0 }).unwrap_err(),
            Error::NoCapital
        );
    }

    #[test]
    fn zero_demand_maintainability() {
        let inp = ClearingInputs { x: 0.0, y: -50.0, z: 90.0 };
        assert!(is_maintainable(&inp, 50.0, 1.0, 1.5, 0.0, 1.0));
    }

    fn instance() -> impl Strategy<Value = (ClearingInputs, f64, f64, f64)> {
        (1.0f64..200.0, 0.0f64..1.0, 0.01f64..200.0, 0.0f64..500.0, 0.5f64..1.0, 1.0f64..2.0)
            .prop_map(|(l, w_e, x, z, lt, beta)| (ClearingInputs { x, y: -w_e * l, z }, l, lt, beta))
    }

    proptest! {
        #[test]
        fn endpoints_are_roots_and_midpoint_positive((inp, l, lt, beta) in instance()) {
            if let FeasibleInterval::Interval { lo, hi } = constraint_interval(&inp, l, lt, beta) {
                let scale = beta * l * l + lt * (inp.z + inp.x) * l + 1.0;
                prop_assert!(q(&inp, l, lt, beta, hi).abs() <= 1e-8 * scale);
                if lo > inp.y {
                    prop_assert!(q(&inp, l, lt, beta, lo).abs() <= 1e-8 * scale);
                }
                if hi > lo {
                    prop_assert!(q(&inp, l, lt, beta, 0.5 * (lo + hi)) > 0.0);
                }
            }
        }

        #[test]
        fn tighter_bound_never_enlarges_interval(
            (inp, l, lt, beta) in instance(), shrink in 0.0f64..1.0
        ) {
            let lower = lt * shrink.max(0.01);
            let wide = constraint_interval(&inp, l, lt, beta);
            let narrow = constraint_interval(&inp, l, lower, beta);
            if let Some((nlo, nhi)) = narrow.bounds() {
                let (wlo, whi) = wide.bounds().expect("narrow feasible implies wide feasible");
                prop_assert!(wlo <= nlo + 1e-9 * (1.0 + nlo.abs()));
                prop_assert!(nhi <= whi + 1e-9 * (1.0 + whi.abs()));
            }
        }

        #[test]
        fn maintainability_matches_discriminant(
            (inp, l, lt, beta) in instance()
        ) {
            let w_e = -inp.y / l;
            let (a, b, c) = constraint_quadratic(&inp, l, lt, beta);
            let disc = b * b - 4.0 * a * c;
            let maintainable = is_maintainable(&inp, l, lt, beta, 1.0 - w_e, w_e);
            if disc.abs() > 1e-9 * (b * b + (4.0 * a * c).abs()) {
                prop_assert_eq!(maintainable, disc >= 0.0);
            }
        }

        #[test]
        fn deleverage_bound_exceeds_free_supply(inp in instance().prop_map(|t| t.0)) {
            let d = max_deleverage(&inp).unwrap();
            prop_assert!(d > inp.y);
            let cost = -d * inp.x / (d - inp.y);
            prop_assert!((cost - inp.z).abs() <= 1e-9 * inp.z.max(1.0));
        }

        #[test]
        fn generalized_cyclicality(
            mu in -0.01f64..0.01, alpha in 0.01f64..3.0, s1 in 0.001f64..0.2, ds in 0.001f64..0.2
        ) {
            let s2 = s1 + ds;
            let pro = RiskConfig::Generalized { alpha, b: 1.0 };
            let counter = RiskConfig::Generalized { alpha, b: -0.5 };
            let u = |cfg: &RiskConfig, s: f64| lambda_tilde(cfg, mu, s).unwrap().uncapped;
            prop_assert!(u(&pro, s2) < u(&pro, s1));
            prop_assert!(u(&counter, s2) > u(&counter, s1));
        }
    }
}
