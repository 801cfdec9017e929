use std::path::Path;

use stablesim_core::{RiskConfig, SimConfig};

use crate::CliError;

/// Reads a JSON run configuration. Missing fields take their defaults;
/// unknown fields are rejected with their path.
pub fn parse_config(text: &str) -> Result<SimConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Validation(format!("config field `{path}`: {}", e.into_inner()))
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: Option<&Path>) -> Result<SimConfig, CliError> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

/// Canonical JSON form, used in manifests.
pub fn emit_config(config: &SimConfig) -> serde_json::Value {
    serde_json::to_value(config).expect("config serializes")
}

pub fn strategy(name: &str) -> Result<RiskConfig, CliError> {
    RiskConfig::from_name(name).ok_or_else(|| {
        CliError::Validation(format!(
            "unknown strategy `{name}`; expected one of {}",
            stablesim_core::risk::STRATEGY_NAMES.join(", ")
        ))
    })
}

/// Prices separated by commas, whitespace or newlines; `#` starts a comment.
pub fn parse_price_script(text: &str) -> Result<Vec<f64>, CliError> {
    let mut prices = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| CliError::Validation(format!("price script: `{tok}` is not a number")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!("price script: price {v} must be positive")));
            }
            prices.push(v);
        }
    }
    if prices.is_empty() {
        return Err(CliError::Validation("price script is empty".into()));
    }
    Ok(prices)
}

pub fn load_price_script(path: Option<&Path>, default: &[f64]) -> Result<Vec<f64>, CliError> {
    match path {
        None => Ok(default.to_vec()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read price script {}: {e}", p.display())))?;
            parse_price_script(&text)
        }
    }
}
