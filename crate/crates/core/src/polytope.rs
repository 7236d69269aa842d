//! Halfspace polytopes `{x : F x ≤ g}` and maximal positively invariant sets.
//!
//! Rows of `F` are scaled to unit Euclidean norm on construction, so every
//! tolerance below is a distance. All set operations are LP based; no vertex
//! enumeration is done here.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{solve_lp, LpProblem, SolveStatus, DEFAULT_TOL};

/// Default tolerance for redundancy removal and set comparisons.
pub const SET_TOL: f64 = 1e-9;
/// Default iteration cap for [`max_invariant_set`].
pub const DEFAULT_MAX_ITER: usize = 500;

/// A convex polyhedral set in H-representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeData", into = "PolytopeData")]
pub struct Polytope {
    f: DMatrix<f64>,
    g: DVector<f64>,
    empty: bool,
}

#[derive(Serialize, Deserialize)]
struct PolytopeData {
    dim: usize,
    rows: Vec<Vec<f64>>,
    g: Vec<f64>,
    #[serde(default)]
    empty: bool,
}

impl TryFrom<PolytopeData> for Polytope {
    type Error = Error;

    fn try_from(d: PolytopeData) -> Result<Self> {
        if d.empty {
            return Ok(Polytope::empty(d.dim));
        }
        let flat: Vec<f64> = d.rows.iter().flatten().copied().collect();
        if flat.len() != d.rows.len() * d.dim {
            return Err(Error::Parse("ragged polytope rows".into()));
        }
        Polytope::new(DMatrix::from_row_slice(d.rows.len(), d.dim, &flat), DVector::from_vec(d.g))
    }
}

impl From<Polytope> for PolytopeData {
    fn from(p: Polytope) -> Self {
        PolytopeData {
            dim: p.dim(),
            rows: p.f.row_iter().map(|r| r.iter().copied().collect()).collect(),
            g: p.g.iter().copied().collect(),
            empty: p.empty,
        }
    }
}

impl Polytope {
    /// Builds `{x : F x ≤ g}`, normalizing each row. All-zero rows are
    /// dropped when `g ≥ 0` and make the set empty otherwise.
    pub fn new(f: DMatrix<f64>, g: DVector<f64>) -> Result<Self> {
        if f.nrows() != g.len() {
            return Err(Error::dim(f.nrows(), g.len()));
        }
        if f.ncols() == 0 {
            return Err(Error::InvalidArgument("polytope of dimension 0".into()));
        }
        if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite halfspace data".into()));
        }
        let dim = f.ncols();
        let mut rows = Vec::new();
        let mut offs = Vec::new();
        for i in 0..f.nrows() {
            let norm = f.row(i).norm();
            if norm <= 1e-14 {
                if g[i] < 0.0 {
                    return Ok(Polytope::empty(dim));
                }
                continue;
            }
            rows.extend(f.row(i).iter().map(|v| v / norm));
            offs.push(g[i] / norm);
        }
        if offs.is_empty() {
            return Err(Error::InvalidArgument("polytope needs at least one nontrivial row".into()));
        }
        Ok(Polytope { f: DMatrix::from_row_slice(offs.len(), dim, &rows), g: DVector::from_vec(offs), empty: false })
    }

    /// Axis-aligned box `lo ≤ x ≤ hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dim(lo.len(), hi.len()));
        }
        let n = lo.len();
        let mut f = DMatrix::zeros(2 * n, n);
        let mut g = DVector::zeros(2 * n);
        for i in 0..n {
            f[(2 * i, i)] = 1.0;
            g[2 * i] = hi[i];
            f[(2 * i + 1, i)] = -1.0;
            g[2 * i + 1] = -lo[i];
        }
        Polytope::new(f, g)
    }

    /// Symmetric box `|x_i| ≤ r_i`.
    pub fn symmetric_box(radius: &[f64]) -> Result<Self> {
        let lo: Vec<f64> = radius.iter().map(|r| -r).collect();
        Polytope::from_box(&lo, radius)
    }

    /// Canonical empty set of the given dimension.
    pub fn empty(dim: usize) -> Self {
        let mut f = DMatrix::zeros(2, dim);
        f[(0, 0)] = 1.0;
        f[(1, 0)] = -1.0;
        Polytope { f, g: DVector::from_element(2, -1.0), empty: true }
    }

    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.f.nrows()
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    /// True when this value is known to be the empty set.
    pub fn is_empty(&self) -> bool {
        self.empty
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::dim(self.dim(), n));
        }
        Ok(())
    }

    /// `F x ≤ g + tol` element-wise.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        self.check_dim(x.len())?;
        if self.empty {
            return Ok(false);
        }
        Ok(self.max_violation(x) <= tol)
    }

    /// `max_i (F_i x − g_i)`; nonpositive inside the set.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let fx = &self.f * x;
        (0..self.num_rows()).map(|i| fx[i] - self.g[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max dirᵀx` over the set; `None` if unbounded in that direction.
    pub fn support(&self, dir: &DVector<f64>) -> Result<Option<f64>> {
        self.check_dim(dir.len())?;
        if self.empty {
            return Ok(Some(f64::NEG_INFINITY));
        }
        support_over(&self.f, &self.g, dir)
    }

    /// Every coordinate direction has a finite support value both ways.
    pub fn is_bounded(&self) -> Result<bool> {
        for i in 0..self.dim() {
            for s in [1.0, -1.0] {
                let mut d = DVector::zeros(self.dim());
                d[i] = s;
                if self.support(&d)?.is_none() {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// `{x : x ∈ self ∧ x ∈ other}`, redundant rows removed. A disjoint
    /// pair yields [`Polytope::empty`].
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        self.check_dim(other.dim())?;
        if self.empty || other.empty {
            return Ok(Polytope::empty(self.dim()));
        }
        self.stack(other).remove_redundant(SET_TOL)
    }

    fn stack(&self, other: &Polytope) -> Polytope {
        let (m1, m2, n) = (self.num_rows(), other.num_rows(), self.dim());
        let mut f = DMatrix::zeros(m1 + m2, n);
        f.rows_mut(0, m1).copy_from(&self.f);
        f.rows_mut(m1, m2).copy_from(&other.f);
        let mut g = DVector::zeros(m1 + m2);
        g.rows_mut(0, m1).copy_from(&self.g);
        g.rows_mut(m1, m2).copy_from(&other.g);
        Polytope { f, g, empty: false }
    }

    /// Drops every row implied by the remaining ones: row `i` goes when
    /// `max F_i x` over the other kept rows is at most `g_i + tol`.
    pub fn remove_redundant(&self, tol: f64) -> Result<Polytope> {
        if self.empty {
            return Ok(self.clone());
        }
        let n = self.dim();
        // Feasibility first: an empty set has no meaningful irredundant form.
        if self.chebyshev_lp()?.is_none() {
            return Ok(Polytope::empty(n));
        }
        let m = self.num_rows();
        let mut keep: Vec<usize> = Vec::with_capacity(m);
        // Exact duplicates (after normalization) keep the tightest offset.
        'outer: for i in 0..m {
            for k in keep.iter_mut() {
                if (self.f.row(i) - self.f.row(*k)).amax() <= 1e-12 {
                    if self.g[i] < self.g[*k] {
                        *k = i;
                    }
                    continue 'outer;
                }
            }
            keep.push(i);
        }
        let mut pos = 0;
        while pos < keep.len() {
            if keep.len() == 1 {
                break;
            }
            let i = keep[pos];
            let others: Vec<usize> = keep.iter().copied().filter(|&k| k != i).collect();
            let f = self.f.select_rows(others.iter());
            let g = self.g.select_rows(others.iter());
            let dir = self.f.row(i).transpose();
            match support_over(&f, &g, &dir)? {
                Some(v) if v <= self.g[i] + tol => {
                    keep.remove(pos);
                }
                _ => pos += 1,
            }
        }
        Ok(Polytope { f: self.f.select_rows(keep.iter()), g: self.g.select_rows(keep.iter()), empty: false })
    }

    /// `{x : M x ∈ self}`.
    pub fn preimage(&self, m: &DMatrix<f64>) -> Result<Polytope> {
        if !m.is_square() {
            return Err(Error::InvalidArgument("preimage map must be square".into()));
        }
        self.check_dim(m.nrows())?;
        if self.empty {
            return Ok(self.clone());
        }
        Polytope::new(&self.f * m, self.g.clone())
    }

    /// `{x : F (x − x0) ≤ g}`.
    pub fn shift(&self, x0: &DVector<f64>) -> Result<Polytope> {
        self.check_dim(x0.len())?;
        if self.empty {
            return Ok(self.clone());
        }
        Ok(Polytope { f: self.f.clone(), g: &self.g + &self.f * x0, empty: false })
    }

    /// Offsets of [`Polytope::shift`] without building a new set.
    pub fn shifted_offsets(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.g + &self.f * x0
    }

    /// Linear image under an invertible scaling `c·self` (c > 0).
    pub fn scale(&self, c: f64) -> Result<Polytope> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument("scale factor must be positive".into()));
        }
        Ok(Polytope { f: self.f.clone(), g: &self.g * c, empty: self.empty })
    }

    fn chebyshev_lp(&self) -> Result<Option<(DVector<f64>, f64)>> {
        let (m, n) = (self.num_rows(), self.dim());
        let mut a = DMatrix::zeros(m, n + 1);
        a.columns_mut(0, n).copy_from(&self.f);
        for i in 0..m {
            a[(i, n)] = self.f.row(i).norm();
        }
        let mut c = DVector::zeros(n + 1);
        c[n] = -1.0;
        let mut lb = DVector::from_element(n + 1, f64::NEG_INFINITY);
        lb[n] = 0.0;
        let ub = DVector::from_element(n + 1, f64::INFINITY);
        let lp = LpProblem::new(c, a, self.g.clone())?.with_bounds(lb, ub)?;
        let r = solve_lp(&lp, DEFAULT_TOL)?;
        match r.status {
            SolveStatus::Optimal => {
                let x = r.x.expect("optimal has x");
                Ok(Some((x.rows(0, n).clone_owned(), x[n])))
            }
            SolveStatus::Infeasible => Ok(None),
            SolveStatus::Unbounded => Err(Error::UnboundedPolytope),
            SolveStatus::IterationLimit => {
                Err(Error::Solver(r.diagnostic.unwrap_or_else(|| "Chebyshev LP hit iteration limit".into())))
            }
        }
    }

    /// Center and radius of the largest inscribed ball.
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64)> {
        if self.empty {
            return Err(Error::EmptyInterior);
        }
        if self.num_rows() < self.dim() + 1 {
            return Err(Error::UnboundedPolytope);
        }
        self.chebyshev_lp()?.ok_or(Error::EmptyInterior)
    }

    /// `other ⊆ self` up to `tol`, checked with one support LP per row of
    /// `self`.
    pub fn contains_set(&self, other: &Polytope, tol: f64) -> Result<bool> {
        self.check_dim(other.dim())?;
        if other.empty {
            return Ok(true);
        }
        if self.empty {
            return Ok(false);
        }
        for i in 0..self.num_rows() {
            let dir = self.f.row(i).transpose();
            match other.support(&dir)? {
                Some(v) if v <= self.g[i] + tol => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }

    /// Mutual containment within `tol`.
    pub fn set_eq(&self, other: &Polytope, tol: f64) -> Result<bool> {
        Ok(self.contains_set(other, tol)? && other.contains_set(self, tol)?)
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for i in 0..n {
            let mut d = DVector::zeros(n);
            d[i] = 1.0;
            hi[i] = self.support(&d)?.ok_or(Error::UnboundedPolytope)?;
            d[i] = -1.0;
            lo[i] = -self.support(&d)?.ok_or(Error::UnboundedPolytope)?;
        }
        Ok((lo, hi))
    }

    /// `n` points drawn uniformly from the set by rejection sampling from
    /// its bounding box with a ChaCha8 stream seeded by `seed`.
    pub fn sample_points(&self, n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let (_, radius) = self.chebyshev_center()?;
        if radius <= 0.0 {
            return Err(Error::EmptyInterior);
        }
        let (lo, hi) = self.bounding_box()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let max_draws = 10_000 * n.max(100);
        let mut draws = 0;
        while out.len() < n {
            draws += 1;
            if draws > max_draws {
                return Err(Error::Solver("rejection sampling acceptance rate too low".into()));
            }
            let x = DVector::from_fn(self.dim(), |i, _| rng.gen_range(lo[i]..=hi[i]));
            if self.max_violation(&x) <= 0.0 {
                out.push(x);
            }
        }
        Ok(out)
    }

    /// CSV block, one halfspace per line: `F` entries then `g`.
    pub fn to_csv_block(&self) -> String {
        let mut s = String::new();
        for i in 0..self.num_rows() {
            for v in self.f.row(i).iter() {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{}\n", self.g[i]));
        }
        s
    }
}

fn support_over(f: &DMatrix<f64>, g: &DVector<f64>, dir: &DVector<f64>) -> Result<Option<f64>> {
    let lp = LpProblem::new(-dir, f.clone(), g.clone())?;
    let r = solve_lp(&lp, DEFAULT_TOL)?;
    match r.status {
        SolveStatus::Optimal => Ok(Some(-r.objective)),
        SolveStatus::Unbounded => Ok(None),
        SolveStatus::Infeasible => Ok(Some(f64::NEG_INFINITY)),
        SolveStatus::IterationLimit => {
            Err(Error::Solver(r.diagnostic.unwrap_or_else(|| "support LP hit iteration limit".into())))
        }
    }
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Result of the invariant-set iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantSet {
    pub set: Polytope,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximal positively invariant set of `x⁺ = A_cl x` inside
/// `X₀ = X ∩ {x : −K x ∈ U}`.
///
/// Iterates `Ω_{i+1} = Ω_i ∩ pre(Ω_i)` until the two coincide within `tol`.
/// Since `Ω_i = {x : A_clʲ x ∈ X₀, j ≤ i}`, each step only adds the rows of
/// `X₀` mapped through `A_cl^{i+1}`, and the sets coincide exactly when all of
/// those rows are implied by `Ω_i`. Hitting `max_iter` returns the last
/// iterate with `converged = false`.
pub fn max_invariant_set(
    a_cl: &DMatrix<f64>,
    x_set: &Polytope,
    u_set: &Polytope,
    k: &DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<InvariantSet> {
    let n = x_set.dim();
    if a_cl.shape() != (n, n) {
        return Err(Error::dim(n, a_cl.nrows()));
    }
    if k.ncols() != n {
        return Err(Error::dim(n, k.ncols()));
    }
    u_set.check_dim(k.nrows())?;
    let rho = spectral_radius(a_cl);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    if x_set.is_empty() || u_set.is_empty() {
        return Ok(InvariantSet { set: Polytope::empty(n), iterations: 0, converged: true });
    }
    let fu = -(u_set.f() * k);
    let mut f = DMatrix::zeros(x_set.num_rows() + fu.nrows(), n);
    f.rows_mut(0, x_set.num_rows()).copy_from(x_set.f());
    f.rows_mut(x_set.num_rows(), fu.nrows()).copy_from(&fu);
    let mut g = DVector::zeros(f.nrows());
    g.rows_mut(0, x_set.num_rows()).copy_from(x_set.g());
    g.rows_mut(x_set.num_rows(), fu.nrows()).copy_from(u_set.g());
    let x0 = Polytope::new(f, g)?.remove_redundant(SET_TOL)?;
    if x0.is_empty() {
        return Ok(InvariantSet { set: x0, iterations: 0, converged: true });
    }

    // A generation row implied by the current set stays implied after every
    // further multiplication by A_cl, so only live rows are propagated. A
    // fresh row usually supersedes the row it descends from; that row alone is
    // tested for redundancy, with a full prune whenever the set doubles.
    let mut omega = x0.clone();
    let mut generation = x0.f.clone();
    let mut offsets = x0.g.clone();
    let mut parent: Vec<Option<usize>> = (0..x0.num_rows()).map(Some).collect();
    let mut pruned_size = omega.num_rows();
    for it in 1..=max_iter {
        generation = &generation * a_cl;
        let mut fresh: Vec<(DVector<f64>, f64)> = Vec::new();
        let mut live = Vec::new();
        for i in 0..generation.nrows() {
            let row = generation.row(i).transpose();
            let norm = row.norm();
            if norm <= 1e-14 {
                continue;
            }
            let (dir, off) = (row / norm, offsets[i] / norm);
            match support_over(&omega.f, &omega.g, &dir)? {
                Some(v) if v <= off + tol => {}
                Some(v) if v.is_nan() => return Err(Error::Solver("support LP returned NaN".into())),
                _ => {
                    live.push(i);
                    fresh.push((dir, off));
                }
            }
        }
        if fresh.is_empty() {
            let set = omega.remove_redundant(SET_TOL)?;
            return Ok(InvariantSet { set, iterations: it, converged: true });
        }
        generation = generation.select_rows(live.iter());
        offsets = offsets.select_rows(live.iter());
        let parents: Vec<Option<usize>> = live.iter().map(|&i| parent[i]).collect();

        let m = omega.num_rows();
        let total = m + fresh.len();
        let mut f = omega.f.clone().resize_vertically(total, 0.0);
        let mut g = omega.g.clone().resize_vertically(total, 0.0);
        for (j, (dir, off)) in fresh.iter().enumerate() {
            f.row_mut(m + j).copy_from(&dir.transpose());
            g[m + j] = *off;
        }
        let mut keep = vec![true; total];
        for p in parents.iter().flatten().copied() {
            let others: Vec<usize> = (0..total).filter(|&r| keep[r] && r != p).collect();
            let fo = f.select_rows(others.iter());
            let go = g.select_rows(others.iter());
            if let Some(v) = support_over(&fo, &go, &f.row(p).transpose())? {
                if v <= g[p] + SET_TOL {
                    keep[p] = false;
                }
            }
        }
        let kept: Vec<usize> = (0..total).filter(|&r| keep[r]).collect();
        let mut index = vec![usize::MAX; total];
        for (new, &old) in kept.iter().enumerate() {
            index[old] = new;
        }
        omega = Polytope { f: f.select_rows(kept.iter()), g: g.select_rows(kept.iter()), empty: false };
        parent = (0..fresh.len()).map(|j| Some(index[m + j])).collect();

        if omega.num_rows() >= 2 * pruned_size {
            omega = omega.remove_redundant(SET_TOL)?;
            pruned_size = omega.num_rows().max(1);
            parent = vec![None; fresh.len()];
            if omega.is_empty() {
                return Ok(InvariantSet { set: omega, iterations: it, converged: true });
            }
        }
    }
    let set = omega.remove_redundant(SET_TOL)?;
    Ok(InvariantSet { set, iterations: max_iter, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn interval(lo: f64, hi: f64) -> Polytope {
        Polytope::from_box(&[lo], &[hi]).unwrap()
    }

    fn unit_box() -> Polytope {
        Polytope::symmetric_box(&[1.0, 1.0]).unwrap()
    }

    #[test]
    fn contains_with_tolerance() {
        let b = unit_box();
        assert!(b.contains(&dvector![0.0, 0.0], 0.0).unwrap());
        assert!(!b.contains(&dvector![1.0 + 1e-6, 0.0], 1e-9).unwrap());
        assert!(b.contains(&dvector![1.0 + 1e-6, 0.0], 1e-3).unwrap());
        assert!(b.contains(&dvector![1.0], 0.0).is_err());
    }

    #[test]
    fn interval_intersections() {
        let r = interval(-1.0, 1.0).intersect(&interval(0.0, 2.0)).unwrap();
        assert!(r.set_eq(&interval(0.0, 1.0), 1e-9).unwrap());
        assert_eq!(r.num_rows(), 2);
        let p = unit_box();
        let pp = p.intersect(&p).unwrap();
        assert!(pp.set_eq(&p, 1e-9).unwrap());
        assert!(pp.num_rows() <= p.num_rows());
        assert!(interval(-1.0, 0.0).intersect(&interval(1.0, 2.0)).unwrap().is_empty());
        assert!(unit_box().intersect(&interval(0.0, 1.0)).is_err());
    }

    #[test]
    fn redundancy_removal() {
        let p = Polytope::new(dmatrix![1.0; 1.0; -1.0], dvector![1.0, 2.0, 5.0]).unwrap();
        let r = p.remove_redundant(SET_TOL).unwrap();
        assert_eq!(r.num_rows(), 2);
        assert!(r.set_eq(&interval(-5.0, 1.0), 1e-9).unwrap());

        let b = unit_box();
        let doubled = b.stack(&b);
        assert_eq!(doubled.num_rows(), 8);
        assert_eq!(doubled.remove_redundant(SET_TOL).unwrap().num_rows(), 4);
    }

    #[test]
    fn preimage_and_shift() {
        let p = interval(-1.0, 1.0);
        assert!(p.preimage(&dmatrix![1.0]).unwrap().set_eq(&p, 1e-12).unwrap());
        assert!(p.preimage(&dmatrix![0.5]).unwrap().set_eq(&interval(-2.0, 2.0), 1e-12).unwrap());
        assert!(p.shift(&dvector![1.0]).unwrap().set_eq(&interval(0.0, 2.0), 1e-12).unwrap());
        assert!(p.shift(&dvector![0.0]).unwrap().set_eq(&p, 0.0).unwrap());
        assert!(p.preimage(&dmatrix![1.0, 0.0]).is_err());
    }

    #[test]
    fn chebyshev_centers() {
        let (c, r) = unit_box().chebyshev_center().unwrap();
        assert!(c.amax() < 1e-12 && (r - 1.0).abs() < 1e-12);
        let (c, r) = interval(0.0, 2.0).chebyshev_center().unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12);
        let tri = Polytope::new(dmatrix![-1.0, 0.0; 0.0, -1.0; 1.0, 1.0], dvector![0.0, 0.0, 1.0]).unwrap();
        let (_, r) = tri.chebyshev_center().unwrap();
        assert!((r - 1.0 / (2.0 + 2f64.sqrt())).abs() < 1e-12);
        let half = Polytope::new(dmatrix![1.0, 0.0; 0.0, 1.0; -1.0, -1.0], dvector![1.0, 1.0, 100.0]).unwrap();
        assert!(half.chebyshev_center().is_ok());
        let open = Polytope::new(dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0], dvector![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(open.chebyshev_center(), Err(Error::UnboundedPolytope)));
    }

    #[test]
    fn sampling_is_deterministic_and_inside() {
        let b = unit_box();
        let pts = b.sample_points(100, 7).unwrap();
        assert_eq!(pts.len(), 100);
        assert!(pts.iter().all(|x| b.contains(x, 0.0).unwrap()));
        assert_eq!(pts, b.sample_points(100, 7).unwrap());
        assert!(b.sample_points(0, 7).unwrap().is_empty());
        let flat = Polytope::from_box(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(flat.sample_points(3, 1).is_err());
    }

    #[test]
    fn scalar_invariant_sets() {
        let x = interval(-1.0, 1.0);
        let wide_u = interval(-10.0, 10.0);
        let s = max_invariant_set(&dmatrix![0.5], &x, &wide_u, &dmatrix![0.0], 100, SET_TOL).unwrap();
        assert!(s.converged);
        assert!(s.set.set_eq(&x, 1e-9).unwrap());

        let u = interval(-0.4, 0.4);
        let s = max_invariant_set(&dmatrix![0.5], &x, &u, &dmatrix![1.0], 100, SET_TOL).unwrap();
        assert!(s.converged);
        assert!(s.set.set_eq(&interval(-0.4, 0.4), 1e-9).unwrap());
    }

    #[test]
    fn unstable_closed_loop_rejected() {
        let x = interval(-1.0, 1.0);
        let r = max_invariant_set(&dmatrix![1.5], &x, &x, &dmatrix![0.0], 10, SET_TOL);
        assert!(matches!(r, Err(Error::Unstable(_))));
    }

    #[test]
    fn non_convergence_is_flagged() {
        let x = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let u = interval(-100.0, 100.0);
        // Slow rotation: needs many steps.
        let (c, s) = (0.999f64 * 0.3f64.cos(), 0.999 * 0.3f64.sin());
        let a = dmatrix![c, -s; s, c];
        let r = max_invariant_set(&a, &x, &u, &dmatrix![0.0, 0.0], 1, SET_TOL).unwrap();
        assert!(!r.converged);
    }

    #[test]
    fn serde_round_trip_keeps_set() {
        let p = unit_box();
        let s = serde_json::to_string(&p).unwrap();
        let q: Polytope = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
