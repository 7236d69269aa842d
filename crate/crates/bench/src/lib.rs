//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use ictrack_core::harness::{Axis, ExperimentConfig};
use ictrack_core::synthesis::{build_ic_design, AxisDesignConfig, IcDesign};
use ictrack_core::trajectories::ReferenceTrajectory;
use nalgebra::DVector;

/// Default lemniscate experiment.
pub fn config() -> ExperimentConfig {
    ExperimentConfig::with_trajectory(ReferenceTrajectory::lemniscate(1.0, 0.5, 0.6))
}

/// Altitude-axis design of the default experiment.
pub fn z_design() -> (Arc<IcDesign>, AxisDesignConfig) {
    let dc = config().design_config(Axis::Z).expect("design config");
    let d = build_ic_design(&dc).expect("design");
    (Arc::new(d), dc)
}

/// Reference preview of the altitude axis starting at sample `k`.
pub fn z_window(k: usize, n: usize) -> Vec<DVector<f64>> {
    let cfg = config();
    cfg.trajectory.preview_window(k, n, cfg.rates.ts).1
}
