//! Dense convex QP solver.
//!
//! Strictly convex problems are solved with the Goldfarb–Idnani dual
//! active-set method: start from the unconstrained minimizer and add
//! violated constraints one at a time, keeping `Jᵀ N = [R; 0]` with
//! `J = L⁻ᵀ Q` updated by Givens rotations. The Cholesky factor of `H` is
//! computed once per [`QpSolver`], so a sequence of problems that share
//! `H` and the constraint matrices (receding-horizon control) only pays for
//! the active-set iterations.
//!
//! Positive semidefinite, singular `H` is handled by proximal-point outer
//! iterations on `H + ρI`, each of which is strictly convex.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{SolveResult, SolveStatus};
use crate::error::{Error, Result};

/// `min ½xᵀHx + fᵀx  s.t.  A_ub x ≤ b_ub,  A_eq x = b_eq`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem; `h` is symmetrized.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self> {
        let n = f.len();
        if h.shape() != (n, n) {
            return Err(Error::dim(n, h.nrows()));
        }
        let h = (&h + h.transpose()) * 0.5;
        Ok(QpProblem {
            h,
            f,
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
        })
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_rows(self.f.len(), &a, &b)?;
        self.a_ub = a;
        self.b_ub = b;
        Ok(self)
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_rows(self.f.len(), &a, &b)?;
        self.a_eq = a;
        self.b_eq = b;
        Ok(self)
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }
}

fn check_rows(n: usize, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    if a.ncols() != n {
        return Err(Error::dim(n, a.ncols()));
    }
    if a.nrows() != b.len() {
        return Err(Error::dim(a.nrows(), b.len()));
    }
    Ok(())
}

/// Active inequality set carried from one solve to the next.
///
/// Constraints listed here are tried first when looking for a violated
/// constraint, in order.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub active: Vec<usize>,
}

/// Reusable solver for problems sharing `H`, `A_ub` and `A_eq`.
#[derive(Debug, Clone)]
pub struct QpSolver {
    h: DMatrix<f64>,
    /// `L⁻ᵀ` for the (possibly regularized) Hessian.
    l_inv_t: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Proximal weight; zero when `H` itself is positive definite.
    rho: f64,
    a_ub: DMatrix<f64>,
    a_ub_t: DMatrix<f64>,
    row_norms: Vec<f64>,
    a_eq: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Ineq(usize),
    Eq(usize),
}

struct GiOutcome {
    status: SolveStatus,
    x: DVector<f64>,
    lam: DVector<f64>,
    nu: DVector<f64>,
    active: Vec<usize>,
    iterations: usize,
}

impl QpSolver {
    pub fn new(h: DMatrix<f64>, a_ub: DMatrix<f64>, a_eq: DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::dim(n, h.ncols()));
        }
        if a_ub.ncols() != n {
            return Err(Error::dim(n, a_ub.ncols()));
        }
        if a_eq.ncols() != n {
            return Err(Error::dim(n, a_eq.ncols()));
        }
        if h.iter().chain(a_ub.iter()).chain(a_eq.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite QP data".into()));
        }
        let h = (&h + h.transpose()) * 0.5;
        let (chol, rho) = match nalgebra::Cholesky::new(h.clone()) {
            Some(c) if min_diag_ratio(&c) > 1e-13 => (c, 0.0),
            _ => {
                let eig = h.clone().symmetric_eigen();
                let min_eig = eig.eigenvalues.min();
                let scale = eig.eigenvalues.amax().max(1.0);
                if min_eig < -1e-10 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "Hessian is not positive semidefinite (min eigenvalue {min_eig:e})"
                    )));
                }
                let rho = 1e-3 * scale;
                let reg = &h + DMatrix::identity(n, n) * rho;
                let c = nalgebra::Cholesky::new(reg)
                    .ok_or_else(|| Error::Solver("regularized Hessian factorization failed".into()))?;
                (c, rho)
            }
        };
        let l_inv_t = chol
            .l()
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
        let row_norms = a_ub.row_iter().map(|r| r.norm().max(f64::MIN_POSITIVE)).collect();
        let a_ub_t = a_ub.transpose();
        Ok(QpSolver { h, l_inv_t, chol, rho, a_ub, a_ub_t, row_norms, a_eq })
    }

    pub fn num_vars(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_inequalities(&self) -> usize {
        self.a_ub.nrows()
    }

    /// Solves for the given linear term and right-hand sides. Returns the
    /// result and the active set to pass to the next call.
    pub fn solve(
        &self,
        f: &DVector<f64>,
        b_ub: &DVector<f64>,
        b_eq: &DVector<f64>,
        tol: f64,
        warm: Option<&WarmStart>,
    ) -> Result<(SolveResult, WarmStart)> {
        let n = self.num_vars();
        if f.len() != n {
            return Err(Error::dim(n, f.len()));
        }
        if b_ub.len() != self.a_ub.nrows() {
            return Err(Error::dim(self.a_ub.nrows(), b_ub.len()));
        }
        if b_eq.len() != self.a_eq.nrows() {
            return Err(Error::dim(self.a_eq.nrows(), b_eq.len()));
        }
        let start = Instant::now();
        let mut warm_active = warm.map(|w| w.active.clone()).unwrap_or_default();

        let out = if self.rho == 0.0 {
            self.goldfarb_idnani(f, b_ub, b_eq, tol, &warm_active)
        } else {
            let mut x = DVector::<f64>::zeros(n);
            let mut total = 0;
            let mut last = None;
            for _ in 0..5000 {
                let shifted = f - &x * self.rho;
                let o = self.goldfarb_idnani(&shifted, b_ub, b_eq, tol * 1e-2, &warm_active);
                total += o.iterations;
                if o.status != SolveStatus::Optimal {
                    last = Some(o);
                    break;
                }
                let step = (&o.x - &x).amax();
                x = o.x.clone();
                warm_active = o.active.clone();
                if x.amax() > 1e12 {
                    last = Some(GiOutcome { status: SolveStatus::Unbounded, ..o });
                    break;
                }
                let done = step <= tol * 1e-2 * (1.0 + x.amax())
                    && self.verify(&o.x, f, b_ub, b_eq, &o.lam, &o.nu, tol).is_ok();
                last = Some(o);
                if done {
                    break;
                }
            }
            let mut o = last.expect("at least one proximal iteration");
            o.iterations = total;
            o
        };

        let warm_next = WarmStart { active: out.active.clone() };
        let mut result = match out.status {
            SolveStatus::Optimal => match self.verify(&out.x, f, b_ub, b_eq, &out.lam, &out.nu, tol) {
                Ok(()) => {
                    let mut duals = DVector::zeros(out.lam.len() + out.nu.len());
                    duals.rows_mut(0, out.lam.len()).copy_from(&out.lam);
                    duals.rows_mut(out.lam.len(), out.nu.len()).copy_from(&out.nu);
                    let objective = 0.5 * out.x.dot(&(&self.h * &out.x)) + f.dot(&out.x);
                    SolveResult {
                        status: SolveStatus::Optimal,
                        x: Some(out.x),
                        duals: Some(duals),
                        objective,
                        iterations: out.iterations,
                        solve_time: Default::default(),
                        diagnostic: None,
                    }
                }
                Err(msg) => SolveResult::failed(
                    SolveStatus::IterationLimit,
                    out.iterations,
                    Some(format!("KKT check rejected solution: {msg}")),
                ),
            },
            status => SolveResult::failed(status, out.iterations, None),
        };
        result.solve_time = start.elapsed();
        Ok((result, warm_next))
    }

    #[allow(clippy::too_many_arguments)]
    fn verify(
        &self,
        x: &DVector<f64>,
        f: &DVector<f64>,
        b_ub: &DVector<f64>,
        b_eq: &DVector<f64>,
        lam: &DVector<f64>,
        nu: &DVector<f64>,
        tol: f64,
    ) -> std::result::Result<(), String> {
        let hx = &self.h * x;
        let mut grad = &hx + f;
        for (i, &l) in lam.iter().enumerate() {
            if l != 0.0 {
                grad.axpy(l, &self.a_ub_t.column(i), 1.0);
            }
        }
        for (i, &v) in nu.iter().enumerate() {
            if v != 0.0 {
                grad.axpy(v, &self.a_eq.row(i).transpose(), 1.0);
            }
        }
        let gscale = 1.0 + f.amax().max(hx.amax());
        if grad.amax() > tol * gscale {
            return Err(format!("stationarity residual {:e}", grad.amax()));
        }
        let ax = &self.a_ub * x;
        for i in 0..b_ub.len() {
            let slack = b_ub[i] - ax[i];
            let scale = 1.0 + b_ub[i].abs();
            if slack < -tol * scale {
                return Err(format!("inequality {i} violated by {:e}", -slack));
            }
            if lam[i] < -tol * gscale {
                return Err(format!("multiplier {i} negative ({:e})", lam[i]));
            }
            if (lam[i] * slack).abs() > tol * scale * gscale {
                return Err(format!("complementarity residual {:e} on row {i}", lam[i] * slack));
            }
        }
        let ex = &self.a_eq * x;
        for i in 0..b_eq.len() {
            if (ex[i] - b_eq[i]).abs() > tol * (1.0 + b_eq[i].abs()) {
                return Err(format!("equality {i} residual {:e}", ex[i] - b_eq[i]));
            }
        }
        Ok(())
    }

    fn goldfarb_idnani(
        &self,
        f: &DVector<f64>,
        b_ub: &DVector<f64>,
        b_eq: &DVector<f64>,
        tol: f64,
        warm: &[usize],
    ) -> GiOutcome {
        let n = self.num_vars();
        let m = self.a_ub.nrows();
        let meq = self.a_eq.nrows();
        let max_iter = 10 * (n + m + meq) + 100;

        let mut x = -self.chol.solve(f);
        let mut j = self.l_inv_t.clone();
        let mut r = DMatrix::<f64>::zeros(n, n);
        let mut active: Vec<Kind> = Vec::new();
        // Sign applied to equality normals so that they enter as `≥` rows.
        let mut eq_sign = vec![1.0; meq];
        let mut u: Vec<f64> = Vec::new();
        let mut is_active = vec![false; m];
        let mut iterations = 0;

        let mut d = DVector::<f64>::zeros(n);
        let mut z = DVector::<f64>::zeros(n);

        let fail = |status, x: DVector<f64>, iterations| GiOutcome {
            status,
            x,
            lam: DVector::zeros(m),
            nu: DVector::zeros(meq),
            active: Vec::new(),
            iterations,
        };

        // Constraint normal and rhs in `nᵀx ≥ b` form.
        let normal = |k: Kind, eq_sign: &[f64]| -> (DVector<f64>, f64) {
            match k {
                Kind::Ineq(i) => (-self.a_ub_t.column(i), -b_ub[i]),
                Kind::Eq(i) => (self.a_eq.row(i).transpose() * eq_sign[i], b_eq[i] * eq_sign[i]),
            }
        };

        let mut pending: Vec<Kind> = (0..meq).map(Kind::Eq).collect();
        pending.reverse();

        loop {
            let p = if let Some(k) = pending.pop() {
                if let Kind::Eq(i) = k {
                    let s = self.a_eq.row(i).dot(&x.transpose()) - b_eq[i];
                    eq_sign[i] = if s > 0.0 { -1.0 } else { 1.0 };
                }
                k
            } else {
                // Inequality slacks b - a x, normalized by row norm.
                let ax = &self.a_ub * &x;
                let viol = |i: usize| (ax[i] - b_ub[i]) / self.row_norms[i];
                let thresh = 0.1 * tol;
                let scaled = |i: usize| thresh * (1.0 + b_ub[i].abs()) / self.row_norms[i];
                let mut pick = warm.iter().copied().find(|&i| i < m && !is_active[i] && viol(i) > scaled(i));
                if pick.is_none() {
                    let mut best = 0.0;
                    for i in 0..m {
                        if is_active[i] {
                            continue;
                        }
                        let v = viol(i);
                        if v > scaled(i) && v > best {
                            best = v;
                            pick = Some(i);
                        }
                    }
                }
                match pick {
                    Some(i) => Kind::Ineq(i),
                    None => break,
                }
            };

            let (np, bp) = normal(p, &eq_sign);
            let is_eq = matches!(p, Kind::Eq(_));
            let mut up = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return fail(SolveStatus::IterationLimit, x, iterations);
                }
                let q = active.len();
                d.gemv_tr(1.0, &j, &np, 0.0);
                z.fill(0.0);
                for c in q..n {
                    z.axpy(d[c], &j.column(c), 1.0);
                }
                // rvec = R⁻¹ d[..q]
                let mut rvec = d.rows(0, q).clone_owned();
                for row in (0..q).rev() {
                    let mut acc = rvec[row];
                    for c in row + 1..q {
                        acc -= r[(row, c)] * rvec[c];
                    }
                    rvec[row] = acc / r[(row, row)];
                }

                let mut t1 = f64::INFINITY;
                let mut drop_at = None;
                for (pos, k) in active.iter().enumerate() {
                    if matches!(k, Kind::Ineq(_)) && rvec[pos] > 0.0 {
                        let ratio = u[pos] / rvec[pos];
                        if ratio < t1 {
                            t1 = ratio;
                            drop_at = Some(pos);
                        }
                    }
                }
                let d2: f64 = d.rows(q, n - q).norm_squared();
                let dn: f64 = d.norm_squared();
                let s = np.dot(&x) - bp;
                let t2 = if d2 > 1e-14 * dn.max(f64::MIN_POSITIVE) { (-s / d2).max(0.0) } else { f64::INFINITY };
                if is_eq && t2.is_infinite() {
                    // Dependent equality row: consistent only if already satisfied.
                    if s.abs() <= tol * (1.0 + bp.abs()) {
                        break;
                    }
                    if t1.is_infinite() {
                        return fail(SolveStatus::Infeasible, x, iterations);
                    }
                }
                let t = t1.min(t2);
                if t.is_infinite() {
                    return fail(SolveStatus::Infeasible, x, iterations);
                }
                for pos in 0..q {
                    u[pos] -= t * rvec[pos];
                }
                up += t;
                if t2.is_finite() {
                    x.axpy(t, &z, 1.0);
                }
                if t2 <= t1 {
                    // Add p: rotate d[q..] onto d[q], applying the same rotations to J.
                    for i in (q + 1..n).rev() {
                        let (a, b) = (d[i - 1], d[i]);
                        if b == 0.0 {
                            continue;
                        }
                        let h = a.hypot(b);
                        let (c, sn) = (a / h, b / h);
                        d[i - 1] = h;
                        d[i] = 0.0;
                        rotate_columns(&mut j, i - 1, i, c, sn);
                    }
                    for row in 0..=q {
                        r[(row, q)] = d[row];
                    }
                    active.push(p);
                    u.push(up);
                    if let Kind::Ineq(i) = p {
                        is_active[i] = true;
                    }
                    break;
                }
                let k = drop_at.expect("partial step implies a blocking multiplier");
                if let Kind::Ineq(i) = active[k] {
                    is_active[i] = false;
                }
                active.remove(k);
                u.remove(k);
                // Remove column k of R and restore triangularity.
                for c in k..q - 1 {
                    for row in 0..=c + 1 {
                        r[(row, c)] = r[(row, c + 1)];
                    }
                }
                for row in 0..q {
                    r[(row, q - 1)] = 0.0;
                }
                for c in k..q - 1 {
                    let (a, b) = (r[(c, c)], r[(c + 1, c)]);
                    if b == 0.0 {
                        continue;
                    }
                    let h = a.hypot(b);
                    let (cs, sn) = (a / h, b / h);
                    for cc in c..q - 1 {
                        let (ra, rb) = (r[(c, cc)], r[(c + 1, cc)]);
                        r[(c, cc)] = cs * ra + sn * rb;
                        r[(c + 1, cc)] = -sn * ra + cs * rb;
                    }
                    r[(c + 1, c)] = 0.0;
                    rotate_columns(&mut j, c, c + 1, cs, sn);
                }
            }
        }

        let mut lam = DVector::zeros(m);
        let mut nu = DVector::zeros(meq);
        let mut act = Vec::new();
        for (pos, k) in active.iter().enumerate() {
            match *k {
                Kind::Ineq(i) => {
                    lam[i] = u[pos];
                    act.push(i);
                }
                Kind::Eq(i) => nu[i] = -u[pos] * eq_sign[i],
            }
        }
        GiOutcome { status: SolveStatus::Optimal, x, lam, nu, active: act, iterations }
    }
}

fn min_diag_ratio(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = c.l_dirty();
    let diag = l.diagonal();
    let max = diag.amax();
    if max == 0.0 {
        0.0
    } else {
        let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        (min / max).powi(2)
    }
}

fn rotate_columns(j: &mut DMatrix<f64>, a: usize, b: usize, c: f64, s: f64) {
    let n = j.nrows();
    let (left, right) = j.as_mut_slice().split_at_mut(b * n);
    let ca = &mut left[a * n..(a + 1) * n];
    let cb = &mut right[..n];
    for (x, y) in ca.iter_mut().zip(cb.iter_mut()) {
        let (xa, yb) = (*x, *y);
        *x = c * xa + s * yb;
        *y = -s * xa + c * yb;
    }
}

/// One-shot QP solve.
pub fn solve_qp(p: &QpProblem, tol: f64) -> Result<SolveResult> {
    let start = Instant::now();
    let solver = QpSolver::new(p.h.clone(), p.a_ub.clone(), p.a_eq.clone())?;
    let (mut r, _) = solver.solve(&p.f, &p.b_ub, &p.b_eq, tol, None)?;
    r.solve_time = start.elapsed();
    Ok(r)
}
