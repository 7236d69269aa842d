//! Two-phase dense tableau simplex.
//!
//! Variables with bounds are mapped onto nonnegative columns (shifted,
//! mirrored or split into a positive and negative part). Pivoting uses
//! Dantzig's rule until a run of degenerate pivots trips the degeneracy
//! counter, after which Bland's rule is used for the rest of the solve.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{SolveResult, SolveStatus};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;
const DEGENERATE_LIMIT: usize = 50;

/// `min cᵀx  s.t.  A_ub x ≤ b_ub,  lb ≤ x ≤ ub`.
///
/// Infinite entries of `lb`/`ub` mean the bound is absent.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl LpProblem {
    /// Problem with free variables.
    pub fn new(c: DVector<f64>, a_ub: DMatrix<f64>, b_ub: DVector<f64>) -> Result<Self> {
        let n = c.len();
        let p = LpProblem {
            c,
            a_ub,
            b_ub,
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Result<Self> {
        self.lb = lb;
        self.ub = ub;
        self.validate()?;
        Ok(self)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.a_ub.ncols() != n && self.a_ub.nrows() > 0 {
            return Err(Error::dim(n, self.a_ub.ncols()));
        }
        if self.a_ub.nrows() != self.b_ub.len() {
            return Err(Error::dim(self.a_ub.nrows(), self.b_ub.len()));
        }
        if self.lb.len() != n {
            return Err(Error::dim(n, self.lb.len()));
        }
        if self.ub.len() != n {
            return Err(Error::dim(n, self.ub.len()));
        }
        let finite = self.c.iter().chain(self.a_ub.iter()).chain(self.b_ub.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite LP data".into()));
        }
        if self.lb.iter().any(|v| v.is_nan() || *v == f64::INFINITY)
            || self.ub.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY)
        {
            return Err(Error::InvalidArgument("invalid variable bounds".into()));
        }
        Ok(())
    }
}

/// How an original variable is expressed in the nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lb + x'
    Shift { col: usize, lb: f64 },
    /// x = ub − x'
    Mirror { col: usize, ub: f64 },
    /// x = x⁺ − x⁻
    Split { pos: usize, neg: usize },
}

/// Inequality-form problem over nonnegative variables: `A x ≤ b, x ≥ 0`.
struct StandardForm {
    c: Vec<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
    vars: Vec<VarMap>,
    offset_cost: f64,
    /// Number of leading rows that come from `A_ub` (the rest are bound rows).
    user_rows: usize,
}

impl StandardForm {
    fn build(p: &LpProblem) -> std::result::Result<Self, ()> {
        let n = p.num_vars();
        let mut vars = Vec::with_capacity(n);
        let mut ncols = 0;
        let mut bound_rows = Vec::new();
        for j in 0..n {
            let (lo, hi) = (p.lb[j], p.ub[j]);
            if lo.is_finite() {
                if hi.is_finite() {
                    if hi < lo {
                        return Err(());
                    }
                    bound_rows.push((ncols, hi - lo));
                }
                vars.push(VarMap::Shift { col: ncols, lb: lo });
                ncols += 1;
            } else if hi.is_finite() {
                vars.push(VarMap::Mirror { col: ncols, ub: hi });
                ncols += 1;
            } else {
                vars.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
                ncols += 2;
            }
        }

        let m = p.a_ub.nrows();
        let rows = m + bound_rows.len();
        let mut a = DMatrix::zeros(rows, ncols);
        let mut b = vec![0.0; rows];
        let mut c = vec![0.0; ncols];
        let mut offset_cost = 0.0;

        for (j, v) in vars.iter().enumerate() {
            match *v {
                VarMap::Shift { col, lb } => {
                    c[col] += p.c[j];
                    offset_cost += p.c[j] * lb;
                    for i in 0..m {
                        a[(i, col)] = p.a_ub[(i, j)];
                        b[i] -= p.a_ub[(i, j)] * lb;
                    }
                }
                VarMap::Mirror { col, ub } => {
                    c[col] -= p.c[j];
                    offset_cost += p.c[j] * ub;
                    for i in 0..m {
                        a[(i, col)] = -p.a_ub[(i, j)];
                        b[i] -= p.a_ub[(i, j)] * ub;
                    }
                }
                VarMap::Split { pos, neg } => {
                    c[pos] += p.c[j];
                    c[neg] -= p.c[j];
                    for i in 0..m {
                        a[(i, pos)] = p.a_ub[(i, j)];
                        a[(i, neg)] = -p.a_ub[(i, j)];
                    }
                }
            }
        }
        for i in 0..m {
            b[i] += p.b_ub[i];
        }
        for (k, (col, width)) in bound_rows.into_iter().enumerate() {
            a[(m + k, col)] = 1.0;
            b[m + k] = width;
        }
        Ok(StandardForm { c, a, b, vars, offset_cost, user_rows: m })
    }

    fn recover(&self, xs: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.vars.len(),
            self.vars.iter().map(|v| match *v {
                VarMap::Shift { col, lb } => lb + xs[col],
                VarMap::Mirror { col, ub } => ub - xs[col],
                VarMap::Split { pos, neg } => xs[pos] - xs[neg],
            }),
        )
    }

    /// KKT check for `min cᵀx, Ax ≤ b, x ≥ 0` with row multipliers `lam`.
    fn verify(&self, xs: &[f64], lam: &[f64], tol: f64) -> std::result::Result<(), String> {
        let (rows, cols) = self.a.shape();
        let cscale = 1.0 + self.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (j, &x) in xs.iter().enumerate() {
            if x < -tol {
                return Err(format!("column {j} negative ({x:e})"));
            }
        }
        for i in 0..rows {
            let ax: f64 = (0..cols).map(|j| self.a[(i, j)] * xs[j]).sum();
            let slack = self.b[i] - ax;
            let scale = 1.0 + self.b[i].abs();
            if slack < -tol * scale {
                return Err(format!("row {i} violated by {:e}", -slack));
            }
            if lam[i] < -tol * cscale {
                return Err(format!("row multiplier {i} negative ({:e})", lam[i]));
            }
            if (lam[i] * slack).abs() > tol * scale * cscale {
                return Err(format!("row {i} complementarity residual {:e}", lam[i] * slack));
            }
        }
        for j in 0..cols {
            let mu = self.c[j] + (0..rows).map(|i| self.a[(i, j)] * lam[i]).sum::<f64>();
            if mu < -tol * cscale {
                return Err(format!("column {j} reduced cost negative ({mu:e})"));
            }
            if (mu * xs[j]).abs() > tol * cscale * (1.0 + xs[j].abs()) {
                return Err(format!("column {j} complementarity residual {:e}", mu * xs[j]));
            }
        }
        Ok(())
    }
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    bland: bool,
    degenerate_run: usize,
    iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.data[pr * w + pc];
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        let f = self.cost[pc];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            self.cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    fn entering(&self, allowed: usize) -> Option<usize> {
        if self.bland {
            (0..allowed).find(|&j| self.cost[j] < -COST_TOL)
        } else {
            let mut best = None;
            let mut best_val = -COST_TOL;
            for j in 0..allowed {
                if self.cost[j] < best_val {
                    best_val = self.cost[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    fn leaving(&self, col: usize) -> Option<usize> {
        let mut best: Option<(usize, f64, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, col);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(r).max(0.0) / a;
            best = match best {
                None => Some((r, ratio, a)),
                Some((br, bratio, ba)) => {
                    let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                    let better = if tie {
                        if self.bland {
                            self.basis[r] < self.basis[br]
                        } else {
                            a > ba
                        }
                    } else {
                        ratio < bratio
                    };
                    if better {
                        Some((r, ratio, a))
                    } else {
                        Some((br, bratio, ba))
                    }
                }
            };
        }
        best.map(|(r, ratio, _)| {
            let _ = ratio;
            r
        })
    }

    /// Runs simplex iterations over the first `allowed` columns.
    fn run(&mut self, allowed: usize, max_iter: usize) -> Outcome {
        loop {
            if self.iterations >= max_iter {
                return Outcome::IterationLimit;
            }
            let Some(col) = self.entering(allowed) else {
                return Outcome::Optimal;
            };
            let Some(row) = self.leaving(col) else {
                return Outcome::Unbounded;
            };
            if self.rhs(row).abs() <= 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run > DEGENERATE_LIMIT {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
            self.pivot(row, col);
            self.iterations += 1;
        }
    }

    fn set_cost(&mut self, c: &[f64]) {
        let w = self.width;
        self.cost.iter_mut().for_each(|v| *v = 0.0);
        self.cost[..c.len()].copy_from_slice(c);
        for r in 0..self.rows {
            let cb = self.cost_of(self.basis[r], c);
            if cb != 0.0 {
                for k in 0..w {
                    self.cost[k] -= cb * self.data[r * w + k];
                }
            }
        }
    }

    fn cost_of(&self, col: usize, c: &[f64]) -> f64 {
        c.get(col).copied().unwrap_or(0.0)
    }
}

/// Solves an LP with the two-phase simplex method.
pub fn solve_lp(p: &LpProblem, tol: f64) -> Result<SolveResult> {
    p.validate()?;
    let start = Instant::now();
    let Ok(sf) = StandardForm::build(p) else {
        let mut r = SolveResult::failed(SolveStatus::Infeasible, 0, None);
        r.solve_time = start.elapsed();
        return Ok(r);
    };
    let mut result = run_simplex(&sf, tol);
    result.solve_time = start.elapsed();
    Ok(result)
}

/// Raw simplex outcome on `min cᵀx, A x ≤ b, x ≥ 0`.
enum Core {
    Optimal { xs: Vec<f64>, lam: Vec<f64> },
    Infeasible,
    Unbounded,
    Failed(Option<String>),
}

fn run_simplex(sf: &StandardForm, tol: f64) -> SolveResult {
    let (rows, nv) = sf.a.shape();
    let mut iterations = 0;
    // Tall problems are solved through their dual, whose tableau has one row
    // per column of the primal: min bᵀλ  s.t.  −Aᵀλ ≤ c, λ ≥ 0.
    if rows > 4 * nv {
        let neg_at = -sf.a.transpose();
        let (core, it) = simplex(&neg_at, &sf.c, &sf.b, tol);
        iterations += it;
        match core {
            Core::Optimal { xs: lam, lam: xs } => {
                if sf.verify(&xs, &lam, tol).is_ok() {
                    return finish(sf, xs, lam, iterations);
                }
            }
            Core::Unbounded => return SolveResult::failed(SolveStatus::Infeasible, iterations, None),
            // Dual infeasible: the primal is unbounded or infeasible. The
            // direct solve below tells which.
            Core::Infeasible | Core::Failed(_) => {}
        }
    }
    let (core, it) = simplex(&sf.a, &sf.b, &sf.c, tol);
    iterations += it;
    match core {
        Core::Optimal { xs, lam } => match sf.verify(&xs, &lam, tol) {
            Ok(()) => finish(sf, xs, lam, iterations),
            Err(msg) => SolveResult::failed(
                SolveStatus::IterationLimit,
                iterations,
                Some(format!("optimality certificate rejected: {msg}")),
            ),
        },
        Core::Infeasible => SolveResult::failed(SolveStatus::Infeasible, iterations, None),
        Core::Unbounded => SolveResult::failed(SolveStatus::Unbounded, iterations, None),
        Core::Failed(d) => SolveResult::failed(SolveStatus::IterationLimit, iterations, d),
    }
}

fn finish(sf: &StandardForm, xs: Vec<f64>, lam: Vec<f64>, iterations: usize) -> SolveResult {
    let x = sf.recover(&xs);
    let objective = sf.offset_cost + sf.c.iter().zip(&xs).map(|(c, x)| c * x).sum::<f64>();
    SolveResult {
        status: SolveStatus::Optimal,
        x: Some(x),
        duals: Some(DVector::from_iterator(sf.user_rows, lam.into_iter().take(sf.user_rows))),
        objective,
        iterations,
        solve_time: Default::default(),
        diagnostic: None,
    }
}

fn simplex(a: &DMatrix<f64>, b: &[f64], c: &[f64], tol: f64) -> (Core, usize) {
    let (rows, nv) = a.shape();
    let na = b.iter().filter(|&&v| v < 0.0).count();
    let ncols = nv + rows + na;
    let width = ncols + 1;
    let mut data = vec![0.0; rows * width];
    let mut basis = vec![0; rows];
    let mut art_k = 0;
    for i in 0..rows {
        let row = &mut data[i * width..(i + 1) * width];
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            row[j] = flip * a[(i, j)];
        }
        row[nv + i] = flip;
        row[ncols] = flip * b[i];
        if flip < 0.0 {
            row[nv + rows + art_k] = 1.0;
            basis[i] = nv + rows + art_k;
            art_k += 1;
        } else {
            basis[i] = nv + i;
        }
    }
    let mut t =
        Tableau { rows, width, data, cost: vec![0.0; width], basis, bland: false, degenerate_run: 0, iterations: 0 };
    let max_iter = 50 * (rows + ncols) + 1000;

    if na > 0 {
        let mut phase1 = vec![0.0; ncols];
        for v in &mut phase1[nv + rows..] {
            *v = 1.0;
        }
        t.set_cost(&phase1);
        match t.run(ncols, max_iter) {
            Outcome::Optimal => {}
            Outcome::Unbounded => return (Core::Failed(Some("phase 1 reported unbounded".into())), t.iterations),
            Outcome::IterationLimit => return (Core::Failed(None), t.iterations),
        }
        let infeas = -t.cost[ncols];
        let bscale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if infeas > tol * bscale {
            return (Core::Infeasible, t.iterations);
        }
        // Drive remaining artificials out of the basis.
        for r in 0..rows {
            if t.basis[r] >= nv + rows {
                let pc = (0..nv + rows)
                    .filter(|&j| t.at(r, j).abs() > PIVOT_TOL)
                    .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
                if let Some(pc) = pc {
                    t.pivot(r, pc);
                }
            }
        }
    }

    t.set_cost(c);
    t.bland = false;
    t.degenerate_run = 0;
    match t.run(nv + rows, max_iter) {
        Outcome::Optimal => {}
        Outcome::Unbounded => return (Core::Unbounded, t.iterations),
        Outcome::IterationLimit => return (Core::Failed(None), t.iterations),
    }

    let mut xs = vec![0.0; nv];
    for r in 0..rows {
        let bcol = t.basis[r];
        if bcol < nv {
            xs[bcol] = t.rhs(r).max(0.0);
        }
    }
    let lam: Vec<f64> = (0..rows).map(|i| t.cost[nv + i].max(0.0)).collect();
    (Core::Optimal { xs, lam }, t.iterations)
}
