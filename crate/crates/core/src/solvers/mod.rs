//! Dense LP and QP solvers.
//!
//! Both solvers check their own answers: an `Optimal` status is only
//! reported after the returned point and multipliers pass a KKT check
//! recomputed from the original problem data.

mod lp;
mod qp;

pub use lp::{solve_lp, LpProblem};
pub use qp::{solve_qp, QpProblem, QpSolver, WarmStart};

use std::time::Duration;

use nalgebra::DVector;

/// Default optimality and feasibility tolerance for both solvers.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration-limit",
        }
    }
}

/// Outcome of a single solve.
///
/// `x` and `duals` are populated only when `status` is `Optimal`. `duals`
/// holds one nonnegative multiplier per inequality row followed by one free
/// multiplier per equality row, in the sign convention
/// `grad f(x) + A_ubᵀ λ + A_eqᵀ ν = 0` (bound multipliers are not included).
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Option<DVector<f64>>,
    pub duals: Option<DVector<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub solve_time: Duration,
    /// Set when the solver gave up for numerical reasons.
    pub diagnostic: Option<String>,
}

impl SolveResult {
    pub(crate) fn failed(status: SolveStatus, iterations: usize, diagnostic: Option<String>) -> Self {
        SolveResult {
            status,
            x: None,
            duals: None,
            objective: match status {
                SolveStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::NAN,
            },
            iterations,
            solve_time: Duration::ZERO,
            diagnostic,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
