//! Shared fixtures for the benchmarks.

use stormer_core::integrator::IntegratorConfig;
use stormer_core::scan::GridSpec;
use stormer_core::{MeridianState, RunConfig};

/// A chaotic start below the critical energy.
pub fn chaotic_start() -> MeridianState {
    MeridianState::at_rest(0.2, 1.62)
}

/// Points spread over the meridian plane away from the axis.
pub fn sample_states() -> Vec<MeridianState> {
    (0..64)
        .map(|k| {
            let t = k as f64 / 64.0;
            MeridianState::new(0.05 + 0.9 * t, 0.3 + 1.6 * (1.0 - t), 0.01 * t, -0.02 * t)
        })
        .collect()
}

pub fn trajectory_config(t_cap: f64) -> IntegratorConfig {
    IntegratorConfig::default().with_t_cap(t_cap)
}

/// A small grid over the default bounds.
pub fn small_grid() -> GridSpec {
    GridSpec { nx: 12, ny: 8, ..GridSpec::default() }
}

/// Short caps so a scan finishes in well under a second.
pub fn scan_config() -> RunConfig {
    RunConfig { mlce_time: 100.0, trapped_cap: 100.0, lambda_time: 100.0, workers: Some(1), ..RunConfig::default() }
}
