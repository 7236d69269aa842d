//! Online controllers for a single axis: tracking LQR, IC, eIC, MPC and
//! move-blocked MPC.

mod ic;
mod mpc;

pub use ic::{eic_step, ic_coefficient_lp, ic_decompose, ic_step, IcCoefficient};
pub use mpc::{build_move_blocking, BlockingPattern, MpcController};

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::Polytope;
use crate::solvers::SolveStatus;
use crate::synthesis::{IcDesign, LqrLaw};

/// Which of the five controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "LQR", alias = "lqr")]
    Lqr,
    #[serde(rename = "IC", alias = "ic")]
    Ic,
    #[serde(rename = "eIC", alias = "eic")]
    Eic,
    #[serde(rename = "MPC", alias = "mpc")]
    Mpc,
    #[serde(rename = "MPCMB", alias = "mpcmb")]
    Mpcmb,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] =
        [ControllerKind::Lqr, ControllerKind::Ic, ControllerKind::Eic, ControllerKind::Mpc, ControllerKind::Mpcmb];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Lqr => "LQR",
            ControllerKind::Ic => "IC",
            ControllerKind::Eic => "eIC",
            ControllerKind::Mpc => "MPC",
            ControllerKind::Mpcmb => "MPCMB",
        }
    }

    pub fn parse(s: &str) -> Option<ControllerKind> {
        ControllerKind::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the state sat relative to the invariant-set family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    High,
    Mid,
    Low,
    Outside,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::High => "high",
            Region::Mid => "mid",
            Region::Low => "low",
            Region::Outside => "outside",
        }
    }

    pub fn parse(s: &str) -> Option<Region> {
        [Region::High, Region::Mid, Region::Low, Region::Outside].into_iter().find(|r| r.as_str() == s)
    }
}

/// Current state and the reference preview `x̄_k … x̄_{k+N}`.
#[derive(Debug, Clone, Copy)]
pub struct ControllerInput<'a> {
    pub x: &'a DVector<f64>,
    pub window: &'a [DVector<f64>],
    pub k: usize,
}

impl<'a> ControllerInput<'a> {
    pub fn new(x: &'a DVector<f64>, window: &'a [DVector<f64>], k: usize) -> Self {
        ControllerInput { x, window, k }
    }

    fn check(&self, n: usize, min_window: usize) -> Result<()> {
        if self.x.len() != n {
            return Err(Error::dim(n, self.x.len()));
        }
        if self.window.len() < min_window {
            return Err(Error::InvalidArgument(format!(
                "preview window has {} points, need {min_window}",
                self.window.len()
            )));
        }
        if let Some(bad) = self.window.iter().find(|w| w.len() != n) {
            return Err(Error::dim(n, bad.len()));
        }
        Ok(())
    }
}

/// One controller evaluation.
#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub u: DVector<f64>,
    /// Interpolating coefficient (IC and eIC only).
    pub c_star: Option<f64>,
    pub region: Option<Region>,
    pub solve_time: Duration,
    pub solver_status: Option<SolveStatus>,
    /// The clamped LQR fallback produced `u`.
    pub fallback: bool,
    /// `u` was clipped to the input bounds.
    pub saturated: bool,
    pub diagnostic: Option<String>,
}

impl ControlOutput {
    fn plain(u: DVector<f64>) -> Self {
        ControlOutput {
            u,
            c_star: None,
            region: None,
            solve_time: Duration::ZERO,
            solver_status: None,
            fallback: false,
            saturated: false,
            diagnostic: None,
        }
    }
}

/// Box bounds on the input, taken from the bounding box of `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl InputBounds {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dim(lo.len(), hi.len()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("input lower bound above upper bound".into()));
        }
        Ok(InputBounds { lo, hi })
    }

    pub fn from_polytope(u: &Polytope) -> Result<Self> {
        let (lo, hi) = u.bounding_box()?;
        InputBounds::new(lo, hi)
    }

    /// Clamps `u` in place and reports whether anything moved.
    pub fn clamp(&self, u: &mut DVector<f64>) -> bool {
        let mut hit = false;
        for i in 0..u.len() {
            let v = u[i].clamp(self.lo[i], self.hi[i]);
            if v != u[i] {
                hit = true;
                u[i] = v;
            }
        }
        hit
    }
}

/// `u = clamp(−K x + u_ff(window))`, using the law's full preview.
pub fn lqr_tracking_step(law: &LqrLaw, bounds: &InputBounds, input: &ControllerInput) -> Result<ControlOutput> {
    input.check(law.model.state_dim(), 2)?;
    let start = Instant::now();
    let mut u = law.tracking_control(input.x, input.window)?;
    let saturated = bounds.clamp(&mut u);
    let mut out = ControlOutput::plain(u);
    out.saturated = saturated;
    out.solve_time = start.elapsed();
    Ok(out)
}

/// A stateful single-axis controller.
#[derive(Debug, Clone)]
pub enum AxisController {
    Lqr { law: Arc<LqrLaw>, bounds: InputBounds, preview: usize },
    Ic { design: Arc<IcDesign>, bounds: InputBounds },
    Eic { design: Arc<IcDesign>, bounds: InputBounds },
    Mpc(Box<MpcController>),
}

impl AxisController {
    /// Number of reference points after the current one that the
    /// controller reads.
    pub fn preview(&self) -> usize {
        match self {
            AxisController::Lqr { preview, .. } => *preview,
            AxisController::Ic { design, .. } | AxisController::Eic { design, .. } => design.preview,
            AxisController::Mpc(m) => m.pattern().horizon(),
        }
    }

    pub fn step(&mut self, input: &ControllerInput) -> Result<ControlOutput> {
        match self {
            AxisController::Lqr { law, bounds, preview } => {
                let n = (*preview + 1).min(input.window.len());
                let trimmed = ControllerInput { window: &input.window[..n], ..*input };
                lqr_tracking_step(law, bounds, &trimmed)
            }
            AxisController::Ic { design, bounds } => ic_step(design, bounds, input),
            AxisController::Eic { design, bounds } => eic_step(design, bounds, input),
            AxisController::Mpc(m) => m.step(input),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{discretize_double_integrator, lqr_gain, CostWeights};
    use nalgebra::dvector;

    fn law() -> LqrLaw {
        let m = discretize_double_integrator(0.01).unwrap();
        lqr_gain(&m, &CostWeights::diagonal(&[0.64, 0.04], 0.04).unwrap()).unwrap()
    }

    fn bounds() -> InputBounds {
        InputBounds::new(dvector![-9.81], dvector![10.19]).unwrap()
    }

    #[test]
    fn lqr_at_rest_point_is_zero() {
        let law = law();
        let x = dvector![0.0, 0.0];
        let w = vec![dvector![0.0, 0.0]; 50];
        let out = lqr_tracking_step(&law, &bounds(), &ControllerInput::new(&x, &w, 0)).unwrap();
        assert_eq!(out.u[0], 0.0);
        assert!(!out.saturated);
    }

    #[test]
    fn lqr_regulation_is_pure_feedback() {
        let law = law();
        let x = dvector![0.1, 0.0];
        let w = vec![dvector![0.0, 0.0]; 50];
        let out = lqr_tracking_step(&law, &bounds(), &ControllerInput::new(&x, &w, 0)).unwrap();
        assert!((out.u[0] + law.k[(0, 0)] * 0.1).abs() < 1e-15);
    }

    #[test]
    fn lqr_saturates_exactly() {
        let law = law();
        let x = dvector![-100.0, 0.0];
        let w = vec![dvector![0.0, 0.0]; 2];
        let out = lqr_tracking_step(&law, &bounds(), &ControllerInput::new(&x, &w, 0)).unwrap();
        assert_eq!(out.u[0], 10.19);
        assert!(out.saturated);
    }

    #[test]
    fn kinds_round_trip_names() {
        for k in ControllerKind::ALL {
            assert_eq!(ControllerKind::parse(k.name()), Some(k));
            let s = serde_json::to_string(&k).unwrap();
            assert_eq!(serde_json::from_str::<ControllerKind>(&s).unwrap(), k);
        }
        assert_eq!(ControllerKind::parse("eic"), Some(ControllerKind::Eic));
        assert!(ControllerKind::parse("pid").is_none());
    }
}
