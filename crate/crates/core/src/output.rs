//! CSV writers. Floats are written with nine significant digits so that the
//! same run always produces the same bytes.

use std::io::Write;

use crate::analytics::{Heatmap, Metric, SteadyStateRow};
use crate::attacks::AttackResult;
use crate::error::Result;
use crate::simulate::{PathRecord, SimConfig, StepRow};

/// Nine significant digits, shortest form.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    // Avoid "-0" in output.
    format!("{}", rounded + 0.0)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub const TRACE_HEADER: [&str; 9] = ["t", "pE", "pD", "delta", "L", "n", "leverage", "lambda_tilde", "regime"];

pub fn write_trace<W: Write>(w: W, rows: &[StepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for r in rows {
        out.write_record([
            r.t.to_string(),
            fmt_num(r.eth_price),
            fmt_num(r.stable_price),
            fmt_num(r.delta),
            fmt_num(r.liabilities),
            fmt_num(r.n),
            fmt_num(r.leverage),
            fmt_num(r.lambda_tilde),
            r.regime.as_str().to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One line per path.
pub fn write_summary<W: Write>(w: W, records: &[PathRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "path",
        "steps_run",
        "stop_time",
        "stop_reason",
        "realized_vol",
        "min_pD",
        "max_pD",
    ])?;
    for p in records {
        out.write_record([
            p.path_index.to_string(),
            p.steps_run.to_string(),
            p.stop_time.map(|t| t.to_string()).unwrap_or_default(),
            p.stop_reason.map(|r| r.as_str().to_string()).unwrap_or_default(),
            opt(p.realized_vol),
            fmt_num(p.min_stable_price),
            fmt_num(p.max_stable_price),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Histogram bins per x-value. Paths where the metric is undefined are
/// counted in a trailing row with `nan` bounds, so counts add up to the
/// number of paths.
pub fn write_histogram<W: Write>(w: W, heatmap: &Heatmap) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x_value", "bin_lo", "bin_hi", "count"])?;
    for col in &heatmap.columns {
        for b in &col.bins {
            out.write_record([col.x_value.clone(), fmt_num(b.lo), fmt_num(b.hi), b.count.to_string()])?;
        }
        if col.undefined > 0 {
            out.write_record([col.x_value.clone(), "nan".into(), "nan".into(), col.undefined.to_string()])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_percentiles<W: Write>(w: W, heatmap: &Heatmap) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x_value", "p50", "p90", "p99"])?;
    for col in &heatmap.columns {
        out.write_record([col.x_value.clone(), opt(col.p50), opt(col.p90), opt(col.p99)])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `(strategy, metric, msd_pct)`; a `None` value means the comparison was
/// empty and is written as a blank field.
pub fn write_msd<W: Write>(w: W, rows: &[(String, Metric, Option<f64>)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["strategy", "metric", "msd_pct"])?;
    for (name, metric, v) in rows {
        out.write_record([name.clone(), metric.as_str().to_string(), opt(*v)])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_steady_state<W: Write>(w: W, rows: &[SteadyStateRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "L", "pD", "mu_bar", "sigma_bar_sq"])?;
    for r in rows {
        out.write_record([
            r.t.to_string(),
            fmt_num(r.supply),
            fmt_num(r.stable_price),
            fmt_num(r.mu_bar),
            fmt_num(r.sigma_bar_sq),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Spiral replay in the layout `(t, pE, delta, L, pD, n)`, starting with the
/// initial state at `t = 0`.
pub fn write_spiral<W: Write>(w: W, config: &SimConfig, start_price: f64, rows: &[StepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "pE", "delta", "L", "pD", "n"])?;
    let init = &config.initial;
    let start_pd = initial_stable_price(config);
    out.write_record([
        "0".into(),
        fmt_num(start_price),
        String::new(),
        fmt_num(init.liabilities),
        opt(start_pd),
        fmt_num(init.n),
    ])?;
    for r in rows {
        out.write_record([
            r.t.to_string(),
            fmt_num(r.eth_price),
            fmt_num(r.delta),
            fmt_num(r.liabilities),
            fmt_num(r.stable_price),
            fmt_num(r.n),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Attack replay in the layout `(t, pE, attacker_flow, D, delta, L, pD, n)`.
/// Attacker flow is positive on entry and negative on exit.
pub fn write_attack<W: Write>(w: W, config: &SimConfig, result: &AttackResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "pE", "attacker_flow", "D", "delta", "L", "pD", "n"])?;
    let init = &config.initial;
    let plan = &result.plan;
    let base = match config.params.demand {
        crate::model::DemandMode::FixedDollar { amount } => Some(amount),
        crate::model::DemandMode::HolderWeights => None,
    };
    out.write_record([
        "0".into(),
        fmt_num(plan.price_script[0]),
        String::new(),
        opt(base),
        String::new(),
        fmt_num(init.liabilities),
        opt(initial_stable_price(config)),
        fmt_num(init.n),
    ])?;
    for (r, d) in result.rows.iter().zip(&result.demand) {
        let flow = if r.t == plan.entry_time {
            fmt_num(plan.entry_dollars)
        } else if r.t == plan.exit_time {
            fmt_num(-plan.exit_dollars)
        } else {
            String::new()
        };
        let delta = if r.t == plan.exit_time { String::new() } else { fmt_num(r.delta) };
        out.write_record([
            r.t.to_string(),
            fmt_num(r.eth_price),
            flow,
            fmt_num(*d),
            delta,
            fmt_num(r.liabilities),
            fmt_num(r.stable_price),
            fmt_num(r.n),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn initial_stable_price(config: &SimConfig) -> Option<f64> {
    match config.params.demand {
        crate::model::DemandMode::FixedDollar { amount } => Some(amount / config.initial.liabilities),
        crate::model::DemandMode::HolderWeights => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Regime;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(100.58312345678), "100.583123");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(f64::NAN), "nan");
        assert_eq!(fmt_num(1.234567891234e-7), "0.000000123456789");
    }

    #[test]
    fn trace_layout() {
        let row = StepRow {
            t: 1,
            eth_price: 83.0,
            stable_price: 1.0259,
            delta: -3.11,
            liabilities: 97.47,
            n: 1.76,
            leverage: 1.1,
            lambda_tilde: 1.0,
            regime: Regime::ClampedHigh,
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,pE,pD,delta,L,n,leverage,lambda_tilde,regime\n1,83,1.0259,-3.11,97.47,1.76,1.1,1,clamped_high\n"
        );
    }
}
