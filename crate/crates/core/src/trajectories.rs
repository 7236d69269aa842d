//! Time-parameterized references with exact velocities.

use nalgebra::{dvector, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    /// `y = a_y sin θ`, `z = a_z sin θ cos θ`.
    Lemniscate,
    /// `y = a_y sin θ`, `z = a_z cos θ − a_z`.
    Ellipse,
    /// Fixed point `(a_y, a_z)` at rest.
    Hold,
}

/// Reference in the `(y, z)` plane, `θ = ω_s t + phase`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTrajectory {
    pub kind: TrajectoryKind,
    #[serde(default = "default_a_y")]
    pub a_y: f64,
    #[serde(default = "default_a_z")]
    pub a_z: f64,
    /// rad/s
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// rad
    #[serde(default)]
    pub phase: f64,
}

fn default_a_y() -> f64 {
    1.0
}
fn default_a_z() -> f64 {
    0.5
}
fn default_omega() -> f64 {
    0.6
}

/// Per-axis reference states `(position, velocity)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisReference {
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl ReferenceTrajectory {
    pub fn lemniscate(a_y: f64, a_z: f64, omega: f64) -> Self {
        ReferenceTrajectory { kind: TrajectoryKind::Lemniscate, a_y, a_z, omega, phase: 0.0 }
    }

    pub fn ellipse(a_y: f64, a_z: f64, omega: f64) -> Self {
        ReferenceTrajectory { kind: TrajectoryKind::Ellipse, a_y, a_z, omega, phase: 0.0 }
    }

    pub fn hold(y: f64, z: f64) -> Self {
        ReferenceTrajectory { kind: TrajectoryKind::Hold, a_y: y, a_z: z, omega: 0.0, phase: 0.0 }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, val) in [("a_y", self.a_y), ("a_z", self.a_z), ("omega", self.omega), ("phase", self.phase)] {
            if !val.is_finite() {
                v.push(format!("trajectory.{name} must be finite"));
            }
        }
        if self.kind != TrajectoryKind::Hold && !(self.omega > 0.0) {
            v.push(format!("trajectory.omega must be positive, got {}", self.omega));
        }
        v
    }

    /// Period in seconds (infinite for a hold).
    pub fn period(&self) -> f64 {
        match self.kind {
            TrajectoryKind::Hold => f64::INFINITY,
            _ => 2.0 * std::f64::consts::PI / self.omega,
        }
    }

    pub fn reference_at(&self, t: f64) -> AxisReference {
        let (w, ay, az) = (self.omega, self.a_y, self.a_z);
        let th = w * t + self.phase;
        let (s, c) = th.sin_cos();
        match self.kind {
            TrajectoryKind::Lemniscate => {
                AxisReference { y: [ay * s, ay * w * c], z: [az * s * c, az * w * (2.0 * th).cos()] }
            }
            TrajectoryKind::Ellipse => AxisReference { y: [ay * s, ay * w * c], z: [az * c - az, -az * w * s] },
            TrajectoryKind::Hold => AxisReference { y: [ay, 0.0], z: [az, 0.0] },
        }
    }

    /// Samples at `k·T_s, …, (k + n)·T_s`, split per axis.
    pub fn preview_window(&self, k: usize, n: usize, ts: f64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut wy = Vec::with_capacity(n + 1);
        let mut wz = Vec::with_capacity(n + 1);
        for j in k..=k + n {
            let r = self.reference_at(j as f64 * ts);
            wy.push(dvector![r.y[0], r.y[1]]);
            wz.push(dvector![r.z[0], r.z[1]]);
        }
        (wy, wz)
    }

    /// Reference states over `[0, horizon]` sampled every `ts`, per axis.
    pub fn samples(&self, horizon: f64, ts: f64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let n = (horizon / ts).ceil() as usize;
        self.preview_window(0, n, ts)
    }
}
