//! Fixtures shared by the benchmarks in `benches/`.

use stablesim_core::{ClearingInputs, RiskConfig, SimConfig, SpeculatorState};

/// A mid-crisis clearing problem where the liquidation constraint binds.
pub fn stressed_inputs() -> (ClearingInputs, SpeculatorState) {
    let inputs = ClearingInputs { x: 100.0, y: -100.583, z: 1.8 * 83.0 };
    let spec = SpeculatorState { n: 1.8, liabilities: 100.583, r: 1.00583, mu: 0.00162, sigma2: 7.8e-4 };
    (inputs, spec)
}

/// Default market with one strategy and a given horizon.
pub fn path_config(risk: RiskConfig, horizon: usize) -> SimConfig {
    SimConfig { risk, horizon, n_paths: 1, master_seed: 11, ..Default::default() }
}
