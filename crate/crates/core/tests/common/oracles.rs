//! Reference computations that share no code with the library.

use nalgebra::{DMatrix, DVector};

/// Plain Riccati value iteration from `P = Q`; returns `(P, K)`.
pub fn dare_value_iteration(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    steps: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut p = q.clone();
    for _ in 0..steps {
        let s = r + b.transpose() * &p * b;
        let s_inv = s.try_inverse().expect("R + BᵀPB invertible");
        let bpa = b.transpose() * &p * a;
        let next = q + a.transpose() * &p * a - bpa.transpose() * &s_inv * &bpa;
        p = (&next + next.transpose()) * 0.5;
    }
    let s = r + b.transpose() * &p * b;
    let k = s.try_inverse().unwrap() * b.transpose() * &p * a;
    (p, k)
}

/// Condensed tracking QP over single-sample moves, built by explicit
/// forward simulation: `min ½UᵀHU + fᵀU  s.t.  A U ≤ b`.
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Stage cost on `x₁…x_N` and `u₀…u_{N−1}`; state limits on `x₁…x_N`.
#[allow(clippy::too_many_arguments)]
pub fn dense_tracking_qp(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    refs: &[DVector<f64>],
    fx: &DMatrix<f64>,
    gx: &DVector<f64>,
    fu: &DMatrix<f64>,
    gu: &DVector<f64>,
) -> DenseQp {
    let (n, m) = (a.nrows(), b.ncols());
    let horizon = refs.len() - 1;
    // x_k = T_k x0 + Σ_j S_kj u_j
    let mut t = vec![DMatrix::identity(n, n)];
    for k in 1..=horizon {
        t.push(a * &t[k - 1]);
    }
    let s_block = |k: usize, j: usize| -> DMatrix<f64> {
        if j < k {
            &t[k - 1 - j] * b
        } else {
            DMatrix::zeros(n, m)
        }
    };
    let nu = m * horizon;
    let mut h = DMatrix::zeros(nu, nu);
    let mut f = DVector::zeros(nu);
    for j in 0..horizon {
        let mut blk = h.view_mut((m * j, m * j), (m, m));
        blk += r * 2.0;
    }
    for k in 1..=horizon {
        let free = &t[k] * x0 - &refs[k];
        for i in 0..horizon {
            let si = s_block(k, i);
            let mut fi = f.rows_mut(m * i, m);
            fi += si.transpose() * q * &free * 2.0;
            for j in 0..horizon {
                let sj = s_block(k, j);
                let mut blk = h.view_mut((m * i, m * j), (m, m));
                blk += si.transpose() * q * sj * 2.0;
            }
        }
    }
    let (px, pu) = (fx.nrows(), fu.nrows());
    let rows = px * horizon + pu * horizon;
    let mut ac = DMatrix::zeros(rows, nu);
    let mut bc = DVector::zeros(rows);
    for k in 1..=horizon {
        let r0 = px * (k - 1);
        for j in 0..k {
            ac.view_mut((r0, m * j), (px, m)).copy_from(&(fx * s_block(k, j)));
        }
        bc.rows_mut(r0, px).copy_from(&(gx - fx * (&t[k] * x0)));
    }
    for j in 0..horizon {
        let r0 = px * horizon + pu * j;
        ac.view_mut((r0, m * j), (pu, m)).copy_from(fu);
        bc.rows_mut(r0, pu).copy_from(gu);
    }
    DenseQp { h, f, a: ac, b: bc }
}

/// ADMM followed by an exact solve of the KKT system on the identified
/// active set. Returns `None` when the polished point fails the KKT test.
pub fn solve_dense_qp(qp: &DenseQp) -> Option<DVector<f64>> {
    let (n, mrows) = (qp.h.nrows(), qp.a.nrows());
    let rho = 1.0;
    let sigma = 1e-9;
    let lhs = &qp.h + DMatrix::identity(n, n) * sigma + qp.a.transpose() * &qp.a * rho;
    let chol = lhs.cholesky()?;
    let mut u = DVector::zeros(n);
    let mut z = DVector::zeros(mrows);
    let mut y = DVector::zeros(mrows);
    for _ in 0..20_000 {
        let rhs = &u * sigma - &qp.f + qp.a.transpose() * (&z * rho - &y);
        u = chol.solve(&rhs);
        let au = &qp.a * &u;
        z = (&au + &y / rho).zip_map(&qp.b, f64::min);
        y += (&au - &z) * rho;
    }
    let ymax = y.amax().max(1.0);
    let by_dual: Vec<usize> = (0..mrows).filter(|&i| y[i] > 1e-7 * ymax).collect();
    let au = &qp.a * &u;
    let by_slack: Vec<usize> = (0..mrows).filter(|&i| au[i] >= qp.b[i] - 1e-7).collect();
    [by_dual, by_slack].into_iter().find_map(|act| polish(qp, &act))
}

fn polish(qp: &DenseQp, active: &[usize]) -> Option<DVector<f64>> {
    let n = qp.h.nrows();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut rhs = DVector::zeros(n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    rhs.rows_mut(0, n).copy_from(&(-&qp.f));
    for (c, &i) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(j, n + c)] = qp.a[(i, j)];
            kkt[(n + c, j)] = qp.a[(i, j)];
        }
        rhs[n + c] = qp.b[i];
    }
    let sol = kkt.svd(true, true).solve(&rhs, 1e-13).ok()?;
    let u = sol.rows(0, n).clone_owned();
    let lam = sol.rows(n, k);
    let scale = 1.0 + qp.b.amax();
    let feasible = (&qp.a * &u - &qp.b).iter().all(|v| *v <= 1e-9 * scale);
    let dual_ok = lam.iter().all(|l| *l >= -1e-9 * (1.0 + lam.amax()));
    (feasible && dual_ok).then_some(u)
}

/// First input of the unconstrained finite-horizon tracking problem by a
/// backward Riccati recursion with affine terms.
pub fn batch_lq_first_input(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    refs: &[DVector<f64>],
) -> DVector<f64> {
    let horizon = refs.len() - 1;
    let mut p = q.clone();
    let mut s = -(q * &refs[horizon]);
    for k in (1..horizon).rev() {
        let g = r + b.transpose() * &p * b;
        let g_inv = g.try_inverse().unwrap();
        let bpa = b.transpose() * &p * a;
        let bs = b.transpose() * &s;
        let p_next = q + a.transpose() * &p * a - bpa.transpose() * &g_inv * &bpa;
        s = -(q * &refs[k]) + a.transpose() * &s - bpa.transpose() * &g_inv * bs;
        p = p_next;
    }
    let g = r + b.transpose() * &p * b;
    -(g.try_inverse().unwrap() * (b.transpose() * &p * a * x0 + b.transpose() * &s))
}

/// Vertices of a bounded 2-D polytope `{x : F x ≤ g}` in counter-clockwise
/// order, by intersecting every pair of boundary lines.
pub fn polygon_vertices(f: &DMatrix<f64>, g: &DVector<f64>) -> Vec<[f64; 2]> {
    assert_eq!(f.ncols(), 2);
    let m = f.nrows();
    let mut pts = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let det = f[(i, 0)] * f[(j, 1)] - f[(i, 1)] * f[(j, 0)];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (g[i] * f[(j, 1)] - f[(i, 1)] * g[j]) / det;
            let y = (f[(i, 0)] * g[j] - g[i] * f[(j, 0)]) / det;
            let ok = (0..m).all(|k| f[(k, 0)] * x + f[(k, 1)] * y <= g[k] + 1e-9 * (1.0 + g[k].abs()));
            if ok {
                pts.push([x, y]);
            }
        }
    }
    convex_hull(pts)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain.
pub fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Sutherland–Hodgman clip of a convex polygon by `a·p ≤ b`.
pub fn clip(poly: &[[f64; 2]], a: [f64; 2], b: f64, tol: f64) -> Vec<[f64; 2]> {
    let val = |p: [f64; 2]| a[0] * p[0] + a[1] * p[1] - b;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (vp, vq) = (val(p), val(q));
        if vp <= tol {
            out.push(p);
        }
        if (vp < -tol && vq > tol) || (vp > tol && vq < -tol) {
            let t = vp / (vp - vq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Smallest `c` on a grid of resolution `step` for which
/// `x = c·x^l + (1 − c)·x^h` has `x^l` in the polygon `outer` and `x^h` in
/// `{F_i x ≤ g_i}`: `c·outer` is clipped by `x − (1 − c)·inner`, and
/// feasibility is monotone in `c`, so the grid is bisected.
pub fn grid_coefficient(
    x: &DVector<f64>,
    outer: &[[f64; 2]],
    f_i: &DMatrix<f64>,
    g_i: &DVector<f64>,
    step: f64,
) -> f64 {
    let feasible = |c: f64| -> bool {
        let mut poly: Vec<[f64; 2]> = outer.iter().map(|v| [c * v[0], c * v[1]]).collect();
        for i in 0..f_i.nrows() {
            // F_i (x − z) ≤ (1 − c) g_i  ⇔  −F_i z ≤ (1 − c) g_i − F_i x
            let a = [-f_i[(i, 0)], -f_i[(i, 1)]];
            let b = (1.0 - c) * g_i[i] - (f_i[(i, 0)] * x[0] + f_i[(i, 1)] * x[1]);
            poly = clip(&poly, a, b, 1e-10);
            if poly.is_empty() {
                return false;
            }
        }
        true
    };
    let n = (1.0 / step).round() as usize;
    if feasible(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0, n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if feasible(mid as f64 * step) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi as f64 * step
}
