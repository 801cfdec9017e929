//! Closed-form steady-state dynamics and ensemble statistics.
//!
//! With fixed dollar demand `D`, constant expected return `r_hat` and a
//! non-binding constraint, supply follows `L_t = sqrt(L_{t-1} D r_hat)` from
//! `L_0 = D`, so `L_t = D r_hat^(1 - 2^-t)` and each stablecoin log return is
//! `-2^-t ln r_hat`. The oracle below evaluates the resulting closed forms
//! for the stablecoin's EWMA log-return mean and variance.
//!
//! Volatility everywhere is the sample standard deviation (n - 1
//! denominator) of daily log returns, not annualized. Percentiles use linear
//! interpolation between order statistics.

use crate::error::{invalid, Error, Result};
use crate::simulate::PathRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOracle {
    pub demand: f64,
    pub r_hat: f64,
    pub delta: f64,
    pub mu0: f64,
    pub sigma0_sq: f64,
}

/// `D r_hat^((2^t - 1) / 2^t)`.
pub fn oracle_supply(t: usize, demand: f64, r_hat: f64) -> f64 {
    demand * r_hat.powf(1.0 - half_pow(t))
}

fn half_pow(t: usize) -> f64 {
    0.5f64.powi(t.min(2000) as i32)
}

/// Stablecoin gross return in period `t >= 1`: `r_hat^(-2^-t)`.
pub fn oracle_return(t: usize, r_hat: f64) -> f64 {
    r_hat.powf(-half_pow(t))
}

/// EWMA mean and variance of stablecoin log returns after `t` periods.
pub fn oracle_mu_sigma(t: usize, oracle: &SteadyStateOracle) -> Result<(f64, f64)> {
    let SteadyStateOracle {
        delta,
        mu0,
        sigma0_sq,
        r_hat,
        ..
    } = *oracle;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let ln_r = r_hat.ln();
    let ti = t.min(i32::MAX as usize) as i32;

    if delta == 0.5 {
        let scale = half_pow(t);
        let mu = scale * (mu0 - 0.5 * t as f64 * ln_r);
        let sum: f64 = (1..=t)
            .map(|k| {
                let term = (k as f64 / 2.0 - 1.0) * ln_r - mu0;
                half_pow(k + 1) * term * term
            })
            .sum();
        return Ok((mu, scale * sum + scale * sigma0_sq));
    }

    let keep = 1.0 - delta;
    let denom = 2.0 * keep - 1.0;
    let mu = keep.powi(ti) * mu0 - delta * (keep.powi(ti) - half_pow(t)) / denom * ln_r;
    // Deviation of period k's log return from the updated mean.
    let deviation = |k: usize| {
        let kk = k as i32;
        -keep.powi(kk) * mu0 + (delta * keep.powi(kk) - half_pow(k) * keep) / denom * ln_r
    };
    let sum: f64 = (1..=t)
        .map(|k| {
            let dev = deviation(k);
            keep.powi(ti - k as i32) * delta * dev * dev
        })
        .sum();
    Ok((mu, sum + keep.powi(ti) * sigma0_sq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateRow {
    pub t: usize,
    pub supply: f64,
    pub stable_price: f64,
    pub mu_bar: f64,
    pub sigma_bar_sq: f64,
}

/// Oracle curves for `t = 0..=horizon`.
pub fn steady_state_curve(oracle: &SteadyStateOracle, horizon: usize) -> Result<Vec<SteadyStateRow>> {
    if !(oracle.demand > 0.0) {
        return Err(invalid("demand", "must be positive"));
    }
    if !(oracle.r_hat > 0.0) {
        return Err(invalid("r_hat", "must be positive"));
    }
    (0..=horizon)
        .map(|t| {
            let supply = oracle_supply(t, oracle.demand, oracle.r_hat);
            let (mu_bar, sigma_bar_sq) = if t == 0 {
                (oracle.mu0, oracle.sigma0_sq)
            } else {
                oracle_mu_sigma(t, oracle)?
            };
            Ok(SteadyStateRow {
                t,
                supply,
                stable_price: oracle.demand / supply,
                mu_bar,
                sigma_bar_sq,
            })
        })
        .collect()
}

/// Sample standard deviation with `n - 1` denominator.
pub fn sample_std(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooShort(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Realized volatility of the stablecoin over a path.
pub fn realized_volatility(path: &PathRecord) -> Result<f64> {
    if path.steps.len() < 2 {
        return Err(Error::TooShort(path.steps.len()));
    }
    let prices: Vec<f64> = path.stable_prices().collect();
    let log_returns: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    sample_std(&log_returns)
}

/// Linear interpolation between order statistics; `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    match sorted.len() {
        0 => None,
        1 => Some(sorted[0]),
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Volatility,
    StoppingTime,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Volatility => "volatility",
            Metric::StoppingTime => "stopping_time",
        }
    }
}

/// Per-path numbers kept from an ensemble run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMetrics {
    pub stop_time: Option<usize>,
    pub realized_vol: Option<f64>,
    pub min_stable_price: f64,
    pub max_stable_price: f64,
}

impl PathMetrics {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Volatility => self.realized_vol,
            Metric::StoppingTime => self.stop_time.map(|t| t as f64),
        }
    }
}

impl From<&PathRecord> for PathMetrics {
    fn from(p: &PathRecord) -> Self {
        PathMetrics {
            stop_time: p.stop_time,
            realized_vol: p.realized_vol,
            min_stable_price: p.min_stable_price,
            max_stable_price: p.max_stable_price,
        }
    }
}

/// Per-path metrics of one ensemble, indexed by path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleSummary {
    pub paths: Vec<PathMetrics>,
}

impl EnsembleSummary {
    pub fn from_records(records: &[PathRecord]) -> Self {
        EnsembleSummary {
            paths: records.iter().map(PathMetrics::from).collect(),
        }
    }

    /// Defined values of `metric`, sorted ascending.
    pub fn sorted(&self, metric: Metric) -> Vec<f64> {
        let mut v: Vec<f64> = self.paths.iter().filter_map(|p| p.get(metric)).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn percentile(&self, metric: Metric, q: f64) -> Option<f64> {
        percentile(&self.sorted(metric), q)
    }

    pub fn failure_count(&self) -> usize {
        self.paths.iter().filter(|p| p.stop_time.is_some()).count()
    }
}

/// Mean squared difference between paired paths, as a percentage of the
/// baseline's mean square. Paths pair by index; only pairs where both sides
/// have the metric count, so stopping times compare paths that failed under
/// both strategies.
pub fn relative_msd(a: &EnsembleSummary, baseline: &EnsembleSummary, metric: Metric) -> Result<f64> {
    let (mut sq_diff, mut sq_base, mut n) = (0.0, 0.0, 0usize);
    for (pa, pb) in a.paths.iter().zip(&baseline.paths) {
        if let (Some(va), Some(vb)) = (pa.get(metric), pb.get(metric)) {
            sq_diff += (va - vb) * (va - vb);
            sq_base += vb * vb;
            n += 1;
        }
    }
    if n == 0 {
        return match metric {
            Metric::StoppingTime => Err(Error::NoCommonFailures),
            Metric::Volatility => Err(Error::TooShort(0)),
        };
    }
    if sq_base == 0.0 {
        return Ok(if sq_diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(100.0 * sq_diff / sq_base)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// One x-value of a heatmap: a histogram over the metric plus percentiles.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapColumn {
    pub x_value: String,
    pub bins: Vec<Bin>,
    /// Paths where the metric is undefined (too short, or never failed).
    pub undefined: usize,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub p99: Option<f64>,
}

impl HeatmapColumn {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum::<usize>() + self.undefined
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub metric: Metric,
    pub columns: Vec<HeatmapColumn>,
}

/// Bins the metric for every swept x-value over a shared range. Values
/// outside the range land in the edge bins.
pub fn heatmap(sweep: &[(String, EnsembleSummary)], metric: Metric, bins: usize) -> Result<Heatmap> {
    if sweep.is_empty() {
        return Err(invalid("sweep", "needs at least one value"));
    }
    if bins == 0 {
        return Err(invalid("bins", "must be at least 1"));
    }
    let (lo, hi) = sweep
        .iter()
        .flat_map(|(_, s)| s.paths.iter().filter_map(|p| p.get(metric)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let n_bins = if hi > lo { bins } else { 1 };

    let columns = sweep
        .iter()
        .map(|(x, summary)| {
            let mut counts = vec![0usize; n_bins];
            let mut undefined = 0;
            for p in &summary.paths {
                match p.get(metric) {
                    Some(v) => {
                        let idx = (((v - lo) / width).floor().max(0.0) as usize).min(n_bins - 1);
                        counts[idx] += 1;
                    }
                    None => undefined += 1,
                }
            }
            let sorted = summary.sorted(metric);
            HeatmapColumn {
                x_value: x.clone(),
                bins: counts
                    .into_iter()
                    .enumerate()
                    .map(|(i, count)| Bin {
                        lo: lo + width * i as f64,
                        hi: if n_bins == 1 && hi == lo { hi } else { lo + width * (i + 1) as f64 },
                        count,
                    })
                    .collect(),
                undefined,
                p50: percentile(&sorted, 0.5),
                p90: percentile(&sorted, 0.9),
                p99: percentile(&sorted, 0.99),
            }
        })
        .collect();
    Ok(Heatmap { metric, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Regime;
    use crate::expectations::stablecoin_estimators;
    use crate::simulate::StepRow;
    use proptest::prelude::*;

    const R_HAT: f64 = 1.00583;

    fn record(prices: &[f64]) -> PathRecord {
        let steps = prices[1..]
            .iter()
            .enumerate()
            .map(|(i, &p)| StepRow {
                t: i + 1,
                eth_price: 1.0,
                stable_price: p,
                delta: 0.0,
                liabilities: 100.0,
                n: 400.0,
                leverage: 0.375,
                lambda_tilde: 1.0,
                regime: Regime::UnconstrainedOptimum,
            })
            .collect();
        PathRecord {
            path_index: 0,
            initial_stable_price: prices[0],
            steps,
            steps_run: prices.len() - 1,
            stop_time: None,
            stop_reason: None,
            realized_vol: None,
            min_stable_price: 0.0,
            max_stable_price: 0.0,
        }
    }

    #[test]
    fn supply_examples() {
        assert_eq!(oracle_supply(0, 100.0, R_HAT), 100.0);
        assert!((oracle_supply(200, 100.0, R_HAT) - 100.583).abs() < 1e-12);
        let one = oracle_supply(1, 100.0, R_HAT);
        assert!((one - 100.0 * R_HAT.sqrt()).abs() < 1e-12);
        assert!((one - 100.2911).abs() < 1e-4);
    }

    #[test]
    fn supply_follows_square_root_recursion() {
        let mut prev = 100.0;
        for t in 1..60 {
            let next = oracle_supply(t, 100.0, R_HAT);
            assert!((next - (prev * 100.0 * R_HAT).sqrt()).abs() <= 1e-12 * next);
            // Price ratio agrees with the per-step return.
            let ratio = (100.0 / next) / (100.0 / prev);
            assert!((ratio - oracle_return(t, R_HAT)).abs() < 1e-13);
            prev = next;
        }
    }

    #[test]
    fn unit_return_keeps_mean_and_decays_variance() {
        for delta in [0.5, 0.2] {
            let o = SteadyStateOracle { demand: 100.0, r_hat: 1.0, delta, mu0: 0.0, sigma0_sq: 0.01 };
            for t in 1..20 {
                let (mu, s2) = oracle_mu_sigma(t, &o).unwrap();
                assert_eq!(mu, 0.0);
                assert!((s2 - (1.0 - delta).powi(t as i32) * 0.01).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn half_memory_mean_formula() {
        let o = SteadyStateOracle { demand: 100.0, r_hat: R_HAT, delta: 0.5, mu0: 0.0, sigma0_sq: 0.0 };
        for t in 1..10 {
            let (mu, _) = oracle_mu_sigma(t, &o).unwrap();
            let expect = -(0.5f64).powi(t as i32) * (t as f64 / 2.0) * R_HAT.ln();
            assert!((mu - expect).abs() < 1e-18);
        }
    }

    /// Estimator recursion on the exact analytic return series, built from
    /// log returns directly so no price rounding enters.
    fn recursion(o: &SteadyStateOracle, horizon: usize) -> Vec<(f64, f64)> {
        let (mut mu, mut s2) = (o.mu0, o.sigma0_sq);
        (1..=horizon)
            .map(|t| {
                let ell = -(0.5f64).powi(t as i32) * o.r_hat.ln();
                mu = (1.0 - o.delta) * mu + o.delta * ell;
                s2 = (1.0 - o.delta) * s2 + o.delta * (ell - mu) * (ell - mu);
                (mu, s2)
            })
            .collect()
    }

    #[test]
    fn closed_forms_match_recursion() {
        for delta in [0.1, 0.3, 0.5, 0.7] {
            let o = SteadyStateOracle { demand: 100.0, r_hat: R_HAT, delta, mu0: 0.004, sigma0_sq: 2e-4 };
            for (i, (mu_r, s2_r)) in recursion(&o, 50).into_iter().enumerate() {
                let (mu, s2) = oracle_mu_sigma(i + 1, &o).unwrap();
                assert!((mu - mu_r).abs() <= 1e-9 * mu_r.abs().max(1e-300), "delta {delta} t {}", i + 1);
                assert!((s2 - s2_r).abs() <= 1e-9 * s2_r, "delta {delta} t {}", i + 1);
            }
        }
    }

    #[test]
    fn closed_forms_match_price_path_estimators_early_on() {
        let o = SteadyStateOracle { demand: 100.0, r_hat: R_HAT, delta: 0.1, mu0: 0.0, sigma0_sq: 0.0 };
        let prices: Vec<f64> = (0..=12).map(|t| 100.0 / oracle_supply(t, 100.0, R_HAT)).collect();
        let est = stablecoin_estimators(&prices, o.mu0, o.sigma0_sq, o.delta).unwrap();
        for (i, (mu, s2)) in est.into_iter().enumerate() {
            let (mu_c, s2_c) = oracle_mu_sigma(i + 1, &o).unwrap();
            assert!((mu - mu_c).abs() <= 1e-9 * mu_c.abs());
            assert!((s2 - s2_c).abs() <= 1e-8 * s2_c);
        }
    }

    #[test]
    fn oracle_rejects_degenerate_memory() {
        let o = SteadyStateOracle { demand: 100.0, r_hat: R_HAT, delta: 1.0, mu0: 0.0, sigma0_sq: 0.0 };
        assert!(oracle_mu_sigma(3, &o).is_err());
    }

    #[test]
    fn curve_with_unit_return_is_flat() {
        let o = SteadyStateOracle { demand: 100.0, r_hat: 1.0, delta: 0.1, mu0: 0.0, sigma0_sq: 0.0 };
        let curve = steady_state_curve(&o, 30).unwrap();
        assert_eq!(curve.len(), 31);
        assert!(curve.iter().all(|r| r.supply == 100.0 && r.stable_price == 1.0 && r.mu_bar == 0.0));
    }

    #[test]
    fn volatility_examples() {
        assert_eq!(realized_volatility(&record(&[1.0; 10])).unwrap(), 0.0);

        let alternating: Vec<f64> = (0..11).map(|i| if i % 2 == 0 { 1.0 } else { 1.1 }).collect();
        let vol = realized_volatility(&record(&alternating)).unwrap();
        // Ten returns of +-ln 1.1 with zero mean: population std ln 1.1, sample std scaled by sqrt(10/9).
        let expect = 1.1f64.ln() * (10.0f64 / 9.0).sqrt();
        assert!((vol - expect).abs() < 1e-14, "{vol}");
        assert!((1.1f64.ln() - 0.0953).abs() < 1e-4);

        assert_eq!(realized_volatility(&record(&[1.0, 1.0])).unwrap_err(), Error::TooShort(1));
    }

    #[test]
    fn steady_path_volatility_shrinks() {
        let vol = |h: usize| {
            let prices: Vec<f64> = (0..=h).map(|t| 100.0 / oracle_supply(t, 100.0, R_HAT)).collect();
            realized_volatility(&record(&prices)).unwrap()
        };
        assert!(vol(400) < vol(100) && vol(100) < vol(10));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), Some(2.5));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(4.0));
        assert_eq!(percentile(&[7.0], 0.9), Some(7.0));
        assert_eq!(percentile(&[], 0.5), None);
    }

    fn summary(vals: &[(Option<usize>, Option<f64>)]) -> EnsembleSummary {
        EnsembleSummary {
            paths: vals
                .iter()
                .map(|&(stop_time, realized_vol)| PathMetrics {
                    stop_time,
                    realized_vol,
                    min_stable_price: 1.0,
                    max_stable_price: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn msd_examples() {
        let a = summary(&[(Some(10), Some(0.01)), (None, Some(0.02)), (Some(30), None)]);
        assert_eq!(relative_msd(&a, &a, Metric::Volatility).unwrap(), 0.0);
        assert_eq!(relative_msd(&a, &a, Metric::StoppingTime).unwrap(), 0.0);

        let b = summary(&[(Some(12), Some(0.02)), (Some(5), Some(0.02)), (None, None)]);
        // Only path 0 failed under both.
        let st = relative_msd(&a, &b, Metric::StoppingTime).unwrap();
        assert!((st - 100.0 * 4.0 / 144.0).abs() < 1e-12);
        let vol = relative_msd(&a, &b, Metric::Volatility).unwrap();
        assert!((vol - 100.0 * 1e-4 / 8e-4).abs() < 1e-9);

        let never = summary(&[(None, Some(0.01))]);
        assert_eq!(relative_msd(&never, &never, Metric::StoppingTime).unwrap_err(), Error::NoCommonFailures);
    }

    #[test]
    fn single_path_heatmap_has_one_bin() {
        let s = summary(&[(None, Some(0.01))]);
        let h = heatmap(&[("RN".into(), s)], Metric::Volatility, 20).unwrap();
        assert_eq!(h.columns[0].bins.len(), 1);
        assert_eq!(h.columns[0].bins[0].count, 1);
    }

    proptest! {
        #[test]
        fn heatmap_conserves_mass(
            cols in proptest::collection::vec(
                proptest::collection::vec((proptest::option::of(0usize..1000), proptest::option::of(0.0f64..0.5)), 1..40),
                1..5),
            bins in 1usize..30,
        ) {
            let sweep: Vec<(String, EnsembleSummary)> =
                cols.iter().enumerate().map(|(i, c)| (i.to_string(), summary(c))).collect();
            for metric in [Metric::Volatility, Metric::StoppingTime] {
                let h = heatmap(&sweep, metric, bins).unwrap();
                for (col, (_, s)) in h.columns.iter().zip(&sweep) {
                    prop_assert_eq!(col.total(), s.paths.len());
                }
            }
        }

        #[test]
        fn msd_is_zero_on_identical_inputs(
            vals in proptest::collection::vec((proptest::option::of(1usize..1000), proptest::option::of(0.001f64..0.5)), 1..40)
        ) {
            let s = summary(&vals);
            if let Ok(v) = relative_msd(&s, &s, Metric::Volatility) { prop_assert_eq!(v, 0.0); }
            if let Ok(v) = relative_msd(&s, &s, Metric::StoppingTime) { prop_assert_eq!(v, 0.0); }
        }
    }
}
