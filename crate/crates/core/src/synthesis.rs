//! Offline design: discrete models, Riccati solutions, LQR laws with
//! finite-preview tracking feedforward, and the nested invariant sets used by
//! the interpolating controllers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{max_invariant_set, spectral_radius, Polytope, SET_TOL};

/// Discrete-time LTI model `x⁺ = A x + B u` sampled every `ts` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub ts: f64,
}

impl LtiModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, ts: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidArgument("A must be square".into()));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::dim(a.nrows(), b.nrows()));
        }
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(Error::InvalidArgument(format!("sample period must be positive, got {ts}")));
        }
        Ok(LtiModel { a, b, ts })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// Orthogonal projector onto the equilibrium subspace `ker(A − I)`,
    /// i.e. the states that stay put under zero input.
    pub fn equilibrium_projector(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let svd = (&self.a - DMatrix::identity(n, n)).svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let smax = svd.singular_values.max().max(1.0);
        let mut proj = DMatrix::zeros(n, n);
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s <= 1e-10 * smax {
                let v = v_t.row(i).transpose();
                proj += &v * v.transpose();
            }
        }
        proj
    }

    /// Same continuous system held over `steps` samples (`A^steps`,
    /// `Σ A^i B`).
    pub fn lifted(&self, steps: usize) -> Result<LtiModel> {
        if steps == 0 {
            return Err(Error::InvalidArgument("lift by zero steps".into()));
        }
        let n = self.state_dim();
        let mut a = DMatrix::identity(n, n);
        let mut b = DMatrix::zeros(n, self.input_dim());
        for _ in 0..steps {
            b = &self.a * b + &self.b;
            a = &self.a * a;
        }
        LtiModel::new(a, b, self.ts * steps as f64)
    }
}

/// Exact zero-order-hold model of a unit double integrator
/// (position, velocity; acceleration input).
pub fn discretize_double_integrator(ts: f64) -> Result<LtiModel> {
    if !(ts > 0.0) {
        return Err(Error::InvalidArgument(format!("sample period must be positive, got {ts}")));
    }
    LtiModel::new(
        DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[ts * ts / 2.0, ts]),
        ts,
    )
}

/// Quadratic cost weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::InvalidArgument("weights must be square".into()));
        }
        let asym = |m: &DMatrix<f64>| (m - m.transpose()).amax();
        if asym(&q) > 1e-12 * (1.0 + q.amax()) || asym(&r) > 1e-12 * (1.0 + r.amax()) {
            return Err(Error::InvalidArgument("weights must be symmetric".into()));
        }
        let qmin = q.clone().symmetric_eigen().eigenvalues.min();
        if qmin < -1e-12 {
            return Err(Error::InvalidArgument(format!("Q not positive semidefinite ({qmin:e})")));
        }
        let rmin = r.clone().symmetric_eigen().eigenvalues.min();
        if rmin <= 0.0 {
            return Err(Error::InvalidArgument(format!("R not positive definite ({rmin:e})")));
        }
        Ok(CostWeights { q, r })
    }

    /// Diagonal `Q` and scalar `R`.
    pub fn diagonal(q: &[f64], r: f64) -> Result<Self> {
        CostWeights::new(DMatrix::from_diagonal(&DVector::from_column_slice(q)), DMatrix::from_element(1, 1, r))
    }

    fn check(&self, m: &LtiModel) -> Result<()> {
        if self.q.nrows() != m.state_dim() {
            return Err(Error::dim(m.state_dim(), self.q.nrows()));
        }
        if self.r.nrows() != m.input_dim() {
            return Err(Error::dim(m.input_dim(), self.r.nrows()));
        }
        Ok(())
    }
}

fn riccati_map(m: &LtiModel, w: &CostWeights, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (&m.a, &m.b);
    let at_p = a.transpose() * p;
    let s = &w.r + b.transpose() * p * b;
    let gain = s
        .cholesky()
        .ok_or_else(|| Error::Solver("R + BᵀPB not positive definite".into()))?
        .solve(&(b.transpose() * p * a));
    let next = &at_p * a - &at_p * b * gain + &w.q;
    Ok((&next + next.transpose()) * 0.5)
}

/// `‖P − (AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q)‖∞`.
pub fn dare_residual(m: &LtiModel, w: &CostWeights, p: &DMatrix<f64>) -> Result<f64> {
    Ok((riccati_map(m, w, p)? - p).amax())
}

/// Stabilizing solution of the discrete algebraic Riccati equation by
/// fixed-point iteration from `P = Q`.
pub fn solve_dare(m: &LtiModel, w: &CostWeights, tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
    w.check(m)?;
    let mut p = w.q.clone();
    for _ in 0..max_iter {
        let next = riccati_map(m, w, &p)?;
        let step = (&next - &p).amax();
        p = next;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Solver("Riccati iteration diverged".into()));
        }
        if step <= 1e-14 * (1.0 + p.amax()) {
            break;
        }
    }
    if dare_residual(m, w, &p)? > tol {
        return Err(Error::NoConvergence(max_iter));
    }
    Ok(p)
}

/// Default iteration cap for the Riccati fixed point.
pub const DARE_MAX_ITER: usize = 200_000;
/// Default DARE residual tolerance.
pub const DARE_TOL: f64 = 1e-8;

/// Infinite-horizon LQR law with the data needed for preview tracking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrLaw {
    /// Feedback gain, `u = −K x`.
    pub k: DMatrix<f64>,
    /// Riccati solution.
    pub p: DMatrix<f64>,
    /// Feedforward injection `(R + BᵀPB)⁻¹Bᵀ`.
    pub k_v: DMatrix<f64>,
    pub model: LtiModel,
    pub weights: CostWeights,
    a_cl: DMatrix<f64>,
}

/// Builds the LQR law for `(m, w)`.
pub fn lqr_gain(m: &LtiModel, w: &CostWeights) -> Result<LqrLaw> {
    let p = solve_dare(m, w, DARE_TOL, DARE_MAX_ITER)?;
    let s = &w.r + m.b.transpose() * &p * &m.b;
    let chol = s.cholesky().ok_or_else(|| Error::Solver("R + BᵀPB not positive definite".into()))?;
    let k = chol.solve(&(m.b.transpose() * &p * &m.a));
    let k_v = chol.solve(&m.b.transpose());
    let a_cl = &m.a - &m.b * &k;
    let rho = spectral_radius(&a_cl);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    Ok(LqrLaw { k, p, k_v, model: m.clone(), weights: w.clone(), a_cl })
}

impl LqrLaw {
    pub fn closed_loop(&self) -> &DMatrix<f64> {
        &self.a_cl
    }

    /// `−K x`.
    pub fn feedback(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.k * x)
    }

    /// Regulation to an equilibrium setpoint: `u = −K (x − x̄)`.
    pub fn setpoint_control(&self, x: &DVector<f64>, setpoint: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.model.state_dim();
        if x.len() != n {
            return Err(Error::dim(n, x.len()));
        }
        if setpoint.len() != n {
            return Err(Error::dim(n, setpoint.len()));
        }
        let drift = (&self.model.a * setpoint - setpoint).amax();
        if drift > 1e-12 * (1.0 + setpoint.amax()) {
            return Err(Error::InvalidArgument("setpoint is not an equilibrium (nonzero velocity)".into()));
        }
        Ok(-(&self.k * (x - setpoint)))
    }

    /// Feedforward term of the preview tracker for `window = x̄_0 … x̄_N`:
    /// `v_N = Q x̄_N`, `v_j = Q x̄_j + A_clᵀ v_{j+1}`, `u_ff = K_v v_1`.
    pub fn tracking_feedforward(&self, window: &[DVector<f64>]) -> Result<DVector<f64>> {
        if window.len() < 2 {
            return Err(Error::InvalidArgument("preview window needs at least two points".into()));
        }
        let n = self.model.state_dim();
        if let Some(bad) = window.iter().find(|w| w.len() != n) {
            return Err(Error::dim(n, bad.len()));
        }
        let q = &self.weights.q;
        let a_cl_t = self.a_cl.transpose();
        let last = window.len() - 1;
        let mut v = q * &window[last];
        for xb in window[1..last].iter().rev() {
            v = q * xb + &a_cl_t * v;
        }
        Ok(&self.k_v * v)
    }

    /// `u = −K x + u_ff(window)`.
    pub fn tracking_control(&self, x: &DVector<f64>, window: &[DVector<f64>]) -> Result<DVector<f64>> {
        Ok(self.feedback(x) + self.tracking_feedforward(window)?)
    }
}

/// Tightens `X` so that every translate of a set contained in the result by
/// one of `refs` still lies in `X`: `g_i ← g_i − max(0, max_k F_i x̄_k)`.
pub fn tighten_for_references(x_set: &Polytope, refs: &[DVector<f64>]) -> Result<Polytope> {
    let mut g = x_set.g().clone();
    for i in 0..x_set.num_rows() {
        let row = x_set.f().row(i);
        let mut worst = 0.0f64;
        for r in refs {
            if r.len() != x_set.dim() {
                return Err(Error::dim(x_set.dim(), r.len()));
            }
            worst = worst.max(row.dot(&r.transpose()));
        }
        g[i] -= worst;
    }
    Polytope::new(x_set.f().clone(), g)
}

/// Everything needed to design the controllers of one axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisDesignConfig {
    pub model: LtiModel,
    pub high: CostWeights,
    pub mid: CostWeights,
    pub low: CostWeights,
    pub x_set: Polytope,
    pub u_set: Polytope,
    /// State set for the sets that get translated to the reference
    /// (`Ω^m`, `Ω^h`); `None` means `x_set`.
    pub inner_x_set: Option<Polytope>,
    /// Fraction of the input constraint reserved for feedforward.
    pub headroom: f64,
    pub preview: usize,
    pub max_iter: usize,
    pub tol: f64,
}

/// Low/mid/high-gain laws with nested invariant sets `Ω^h ⊆ Ω^m ⊆ Ω^l`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IcDesign {
    pub low: LqrLaw,
    pub mid: LqrLaw,
    pub high: LqrLaw,
    pub omega_low: Polytope,
    pub omega_mid: Polytope,
    pub omega_high: Polytope,
    pub x_set: Polytope,
    pub u_set: Polytope,
    pub preview: usize,
    pub headroom: f64,
    /// Projector onto the model's equilibria, used by the setpoint law.
    pub equilibrium: DMatrix<f64>,
    /// Invariant-set iterations for (low, mid, high).
    pub iterations: [usize; 3],
}

const NESTING_SAMPLES: usize = 1000;

/// Designs the three laws and their invariant sets.
///
/// `Ω^l` is the maximal invariant set of the low-gain loop in `X`; `Ω^m` is
/// computed inside `Ω^l ∩ X_inner` and `Ω^h` inside `Ω^m`, all against the
/// input set shrunk to `(1 − headroom)·U`. Nesting is then confirmed on
/// sampled points.
pub fn build_ic_design(cfg: &AxisDesignConfig) -> Result<IcDesign> {
    if !(0.0..1.0).contains(&cfg.headroom) {
        return Err(Error::InvalidArgument(format!("headroom must lie in [0, 1), got {}", cfg.headroom)));
    }
    if cfg.preview < 1 {
        return Err(Error::InvalidArgument("preview length must be at least 1".into()));
    }
    let low = lqr_gain(&cfg.model, &cfg.low)?;
    let mid = lqr_gain(&cfg.model, &cfg.mid)?;
    let high = lqr_gain(&cfg.model, &cfg.high)?;
    let u_tight = if cfg.headroom > 0.0 { cfg.u_set.scale(1.0 - cfg.headroom)? } else { cfg.u_set.clone() };

    let invariant = |law: &LqrLaw, x: &Polytope| -> Result<(Polytope, usize)> {
        let s = max_invariant_set(law.closed_loop(), x, &u_tight, &law.k, cfg.max_iter, cfg.tol)?;
        if !s.converged {
            return Err(Error::NoConvergence(s.iterations));
        }
        if s.set.is_empty() {
            return Err(Error::InvalidArgument("invariant set is empty".into()));
        }
        Ok((s.set, s.iterations))
    };

    let (omega_low, it_low) = invariant(&low, &cfg.x_set)?;
    let inner_x = match &cfg.inner_x_set {
        Some(inner) => omega_low.intersect(inner)?,
        None => omega_low.clone(),
    };
    let (omega_mid, it_mid) = invariant(&mid, &inner_x)?;
    let (omega_high, it_high) = invariant(&high, &omega_mid)?;

    check_nesting(&omega_high, &omega_mid, "Ω^h", "Ω^m")?;
    check_nesting(&omega_mid, &omega_low, "Ω^m", "Ω^l")?;

    Ok(IcDesign {
        low,
        mid,
        high,
        omega_low,
        omega_mid,
        omega_high,
        x_set: cfg.x_set.clone(),
        u_set: cfg.u_set.clone(),
        preview: cfg.preview,
        headroom: cfg.headroom,
        equilibrium: cfg.model.equilibrium_projector(),
        iterations: [it_low, it_mid, it_high],
    })
}

fn check_nesting(inner: &Polytope, outer: &Polytope, inner_name: &str, outer_name: &str) -> Result<()> {
    for (i, x) in inner.sample_points(NESTING_SAMPLES, 0x5eed)?.iter().enumerate() {
        if !outer.contains(x, SET_TOL)? {
            return Err(Error::Nesting(format!(
                "sample {i} of {inner_name} at ({}) escapes {outer_name}",
                x.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    Ok(())
}
