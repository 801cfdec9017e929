use stablesim_core::analytics::{heatmap, relative_msd};
use stablesim_core::output::{write_histogram, write_summary};
use stablesim_core::simulate::run_ensemble;
use stablesim_core::{EnsembleSummary, Metric, RiskConfig, SimConfig};

fn small(risk: RiskConfig) -> SimConfig {
    SimConfig { risk, horizon: 120, n_paths: 30, master_seed: 8, ..Default::default() }
}

#[test]
fn config_json_round_trip() {
    let cfg = small(RiskConfig::VarHeavyTail { a: 0.01 });
    let text = serde_json::to_string(&cfg).unwrap();
    let back: SimConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let partial: SimConfig = serde_json::from_str(r#"{"horizon": 7}"#).unwrap();
    assert_eq!(partial, SimConfig { horizon: 7, ..Default::default() });
    assert!(serde_json::from_str::<SimConfig>(r#"{"horizn": 7}"#).is_err());
}

#[test]
fn ensemble_to_tables() {
    let rn = run_ensemble(&small(RiskConfig::RiskNeutral), false).unwrap();
    let var = run_ensemble(&small(RiskConfig::default()), false).unwrap();
    assert!(rn.iter().all(|r| r.steps.is_empty()));
    assert!(rn.iter().enumerate().all(|(i, r)| r.path_index == i as u64));

    let sweep = vec![
        ("RN".to_string(), EnsembleSummary::from_records(&rn)),
        ("VaRN.1".to_string(), EnsembleSummary::from_records(&var)),
    ];
    let map = heatmap(&sweep, Metric::Volatility, 10).unwrap();
    let mut buf = Vec::new();
    write_histogram(&mut buf, &map).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let total: usize = reader.records().map(|r| r.unwrap()[3].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 60);

    assert_eq!(relative_msd(&sweep[0].1, &sweep[0].1, Metric::Volatility).unwrap(), 0.0);
    assert!(relative_msd(&sweep[1].1, &sweep[0].1, Metric::Volatility).unwrap() >= 0.0);

    let mut a = Vec::new();
    let mut b = Vec::new();
    write_summary(&mut a, &rn).unwrap();
    write_summary(&mut b, &run_ensemble(&small(RiskConfig::RiskNeutral), false).unwrap()).unwrap();
    assert_eq!(a, b);
}
