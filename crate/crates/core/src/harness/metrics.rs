use nalgebra::{dvector, DVector};
use serde::{Deserialize, Serialize};

use crate::plant::SimTrace;
use crate::synthesis::CostWeights;

/// `(1/T_s)·Σ_k [eₖᵀQeₖ + uₖᵀRuₖ]`.
pub fn quadratic_cost(errors: &[DVector<f64>], inputs: &[DVector<f64>], w: &CostWeights, ts: f64) -> f64 {
    let state: f64 = errors.iter().map(|e| (e.transpose() * &w.q * e)[0]).sum();
    let input: f64 = inputs.iter().map(|u| (u.transpose() * &w.r * u)[0]).sum();
    (state + input) / ts
}

/// `(1/T_s)·Σ eₖ²`.
pub fn ise(errors: &[f64], ts: f64) -> f64 {
    errors.iter().map(|e| e * e).sum::<f64>() / ts
}

/// `(1/T_s)·Σ uₖ²`.
pub fn energy(commands: &[f64], ts: f64) -> f64 {
    commands.iter().map(|u| u * u).sum::<f64>() / ts
}

/// Tracking errors and commands of one axis.
struct AxisSeries {
    errors: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
}

fn series(trace: &SimTrace) -> [AxisSeries; 2] {
    let mut y = AxisSeries { errors: Vec::new(), inputs: Vec::new() };
    let mut z = AxisSeries { errors: Vec::new(), inputs: Vec::new() };
    for r in &trace.rows {
        let s = &r.state;
        y.errors.push(dvector![s.y - r.reference[0], s.dy - r.reference[1]]);
        z.errors.push(dvector![s.z - r.reference[2], s.dz - r.reference[3]]);
        y.inputs.push(dvector![r.ydd_cmd]);
        z.inputs.push(dvector![r.zdd_cmd]);
    }
    [y, z]
}

/// Criterion value over both axes, each with its own weights.
pub fn metric_j(trace: &SimTrace, wy: &CostWeights, wz: &CostWeights) -> f64 {
    let [y, z] = series(trace);
    quadratic_cost(&y.errors, &y.inputs, wy, trace.ts) + quadratic_cost(&z.errors, &z.inputs, wz, trace.ts)
}

/// Position ISE summed over both axes.
pub fn metric_ise(trace: &SimTrace) -> f64 {
    let ey: Vec<f64> = trace.rows.iter().map(|r| r.state.y - r.reference[0]).collect();
    let ez: Vec<f64> = trace.rows.iter().map(|r| r.state.z - r.reference[2]).collect();
    ise(&ey, trace.ts) + ise(&ez, trace.ts)
}

/// Commanded-acceleration energy summed over both axes.
pub fn metric_energy(trace: &SimTrace) -> f64 {
    let uy: Vec<f64> = trace.rows.iter().map(|r| r.ydd_cmd).collect();
    let uz: Vec<f64> = trace.rows.iter().map(|r| r.zdd_cmd).collect();
    energy(&uy, trace.ts) + energy(&uz, trace.ts)
}

/// Aggregates of per-step controller compute time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingStats {
    pub total_s: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub count: usize,
    /// First evaluation alone.
    pub first_ms: f64,
    /// Mean over all evaluations after the first.
    pub steady_mean_ms: f64,
}

/// Statistics of per-step times given in seconds.
pub fn timing_stats(times_s: &[f64]) -> TimingStats {
    if times_s.is_empty() {
        return TimingStats::default();
    }
    let count = times_s.len();
    let total_s: f64 = times_s.iter().sum();
    let max_s = times_s.iter().copied().fold(0.0, f64::max);
    let steady = &times_s[1..];
    let steady_mean_ms =
        if steady.is_empty() { times_s[0] * 1e3 } else { steady.iter().sum::<f64>() / steady.len() as f64 * 1e3 };
    TimingStats {
        total_s,
        mean_ms: total_s / count as f64 * 1e3,
        max_ms: max_s * 1e3,
        count,
        first_ms: times_s[0] * 1e3,
        steady_mean_ms,
    }
}

/// Timing of both axis controllers together, per outer step.
pub fn trace_timing(trace: &SimTrace) -> TimingStats {
    let t: Vec<f64> = trace.rows.iter().map(|r| r.solve_time_y + r.solve_time_z).collect();
    timing_stats(&t)
}
