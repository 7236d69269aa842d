use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::{ControlOutput, ControllerInput, InputBounds, Region};
use crate::error::{Error, Result};
use crate::polytope::{Polytope, SET_TOL};
use crate::solvers::{solve_lp, LpProblem, SolveStatus, DEFAULT_TOL};
use crate::synthesis::{IcDesign, LqrLaw};

/// Minimizer of the interpolation LP.
#[derive(Debug, Clone)]
pub struct IcCoefficient {
    pub c: f64,
    /// `r = c·x^l`.
    pub r: DVector<f64>,
    pub status: SolveStatus,
    pub solve_time: Duration,
}

/// Splits `x = c·x^l + (1 − c)·x^h` given `r = c·x^l`.
///
/// At `c = 0` the low-gain part is unused and returned as zero; at `c = 1`
/// the same holds for the high-gain part.
pub fn ic_decompose(x: &DVector<f64>, r: &DVector<f64>, c: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidArgument(format!("interpolation coefficient {c} outside [0, 1]")));
    }
    if r.len() != x.len() {
        return Err(Error::dim(x.len(), r.len()));
    }
    let n = x.len();
    if c == 0.0 {
        Ok((DVector::zeros(n), x.clone()))
    } else if c == 1.0 {
        Ok((x.clone(), DVector::zeros(n)))
    } else {
        Ok((r / c, (x - r) / (1.0 - c)))
    }
}

/// `min c  s.t.  F_o r ≤ c·g_o,  F_i (x − r) ≤ (1 − c)·g_i,  0 ≤ c ≤ 1`.
///
/// `inner` must already be shifted to the reference point, so that
/// `x^h = (x − r)/(1 − c)` lands in it. An infeasible LP means `x` is outside
/// the interpolation domain.
pub fn ic_coefficient_lp(x: &DVector<f64>, outer: &Polytope, inner: &Polytope) -> Result<IcCoefficient> {
    if outer.dim() != x.len() {
        return Err(Error::dim(outer.dim(), x.len()));
    }
    if inner.dim() != x.len() {
        return Err(Error::dim(inner.dim(), x.len()));
    }
    if outer.is_empty() || inner.is_empty() {
        return Err(Error::OutsideDomain);
    }
    coefficient_lp(x, outer.f(), outer.g(), inner.f(), inner.g())
}

fn coefficient_lp(
    x: &DVector<f64>,
    f_o: &DMatrix<f64>,
    g_o: &DVector<f64>,
    f_i: &DMatrix<f64>,
    g_i: &DVector<f64>,
) -> Result<IcCoefficient> {
    let n = x.len();
    let (mo, mi) = (f_o.nrows(), f_i.nrows());
    let mut a = DMatrix::zeros(mo + mi, n + 1);
    let mut b = DVector::zeros(mo + mi);
    for i in 0..mo {
        a[(i, 0)] = -g_o[i];
        for j in 0..n {
            a[(i, j + 1)] = f_o[(i, j)];
        }
    }
    let fx = f_i * x;
    for i in 0..mi {
        a[(mo + i, 0)] = g_i[i];
        for j in 0..n {
            a[(mo + i, j + 1)] = -f_i[(i, j)];
        }
        b[mo + i] = g_i[i] - fx[i];
    }
    let mut cost = DVector::zeros(n + 1);
    cost[0] = 1.0;
    let mut lb = DVector::from_element(n + 1, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(n + 1, f64::INFINITY);
    lb[0] = 0.0;
    ub[0] = 1.0;
    let lp = LpProblem::new(cost, a, b)?.with_bounds(lb, ub)?;
    let res = solve_lp(&lp, DEFAULT_TOL)?;
    match res.status {
        SolveStatus::Optimal => {
            let z = res.x.expect("optimal has x");
            Ok(IcCoefficient {
                c: z[0].clamp(0.0, 1.0),
                r: z.rows(1, n).clone_owned(),
                status: res.status,
                solve_time: res.solve_time,
            })
        }
        SolveStatus::Infeasible => Err(Error::OutsideDomain),
        s => Err(Error::Solver(format!(
            "interpolation LP ended with status {}{}",
            s.as_str(),
            res.diagnostic.map(|d| format!(": {d}")).unwrap_or_default()
        ))),
    }
}

fn inside(f: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> bool {
    let fx = f * x;
    fx.iter().zip(g.iter()).all(|(a, b)| *a <= b + SET_TOL)
}

fn finish(
    mut u: DVector<f64>,
    bounds: &InputBounds,
    c: f64,
    region: Region,
    status: Option<SolveStatus>,
    start: Instant,
) -> ControlOutput {
    let saturated = bounds.clamp(&mut u);
    ControlOutput {
        u,
        c_star: Some(c),
        region: Some(region),
        solve_time: start.elapsed(),
        solver_status: status,
        fallback: false,
        saturated,
        diagnostic: None,
    }
}

fn fallback(
    law: &LqrLaw,
    bounds: &InputBounds,
    input: &ControllerInput,
    window: &[DVector<f64>],
    status: Option<SolveStatus>,
    why: String,
    start: Instant,
) -> Result<ControlOutput> {
    let mut u = law.tracking_control(input.x, window)?;
    let saturated = bounds.clamp(&mut u);
    Ok(ControlOutput {
        u,
        c_star: None,
        region: Some(Region::Outside),
        solve_time: start.elapsed(),
        solver_status: status,
        fallback: true,
        saturated,
        diagnostic: Some(why),
    })
}

fn status_of(e: &Error) -> Option<SolveStatus> {
    match e {
        Error::OutsideDomain => Some(SolveStatus::Infeasible),
        Error::Solver(_) => Some(SolveStatus::IterationLimit),
        _ => None,
    }
}

/// Interpolating control between the low-gain law on `Ω^l` and the
/// high-gain law on `Ω^h` shifted to the current reference point.
///
/// The component laws receive the scaled previews `c·x̄` and `(1 − c)·x̄`;
/// the blend is evaluated as `−K^l r − K^h (x − r) + c²·ff^l + (1 − c)²·ff^h`,
/// which is the same expression without dividing by `c` or `1 − c`.
pub fn ic_step(design: &IcDesign, bounds: &InputBounds, input: &ControllerInput) -> Result<ControlOutput> {
    let n = design.high.model.state_dim();
    input.check(n, design.preview + 1)?;
    let window = &input.window[..=design.preview];
    let x = input.x;
    let start = Instant::now();
    let xbar = &window[0];
    let g_h = design.omega_high.shifted_offsets(xbar);

    if inside(design.omega_high.f(), &g_h, x) {
        let u = design.high.tracking_control(x, window)?;
        return Ok(finish(u, bounds, 0.0, Region::High, None, start));
    }
    if !design.omega_low.contains(x, SET_TOL)? {
        let why = "state outside Ω^l".to_string();
        return fallback(&design.low, bounds, input, window, None, why, start);
    }
    let coef = match coefficient_lp(x, design.omega_low.f(), design.omega_low.g(), design.omega_high.f(), &g_h) {
        Ok(c) => c,
        Err(e) => return fallback(&design.low, bounds, input, window, status_of(&e), e.to_string(), start),
    };
    let (c, r) = (coef.c, &coef.r);
    let ff_l = design.low.tracking_feedforward(window)?;
    let ff_h = design.high.tracking_feedforward(window)?;
    let u = -(&design.low.k * r) - &design.high.k * (x - r) + ff_l * (c * c) + ff_h * ((1.0 - c) * (1.0 - c));
    let region = if c > 0.0 { Region::Low } else { Region::High };
    Ok(finish(u, bounds, c, region, Some(coef.status), start))
}

/// Extended interpolating control with the intermediate setpoint law.
///
/// Inside `Ω^m` (shifted to `x̄_k`) the mid and high-gain laws are blended;
/// elsewhere in `Ω^l` the low-gain and mid laws are. The mid law regulates
/// to the equilibrium part of the scaled reference point.
pub fn eic_step(design: &IcDesign, bounds: &InputBounds, input: &ControllerInput) -> Result<ControlOutput> {
    let n = design.high.model.state_dim();
    input.check(n, design.preview + 1)?;
    let window = &input.window[..=design.preview];
    let x = input.x;
    let start = Instant::now();
    let xbar = &window[0];
    let g_h = design.omega_high.shifted_offsets(xbar);

    if inside(design.omega_high.f(), &g_h, x) {
        let u = design.high.tracking_control(x, window)?;
        return Ok(finish(u, bounds, 0.0, Region::High, None, start));
    }
    let g_m = design.omega_mid.shifted_offsets(xbar);
    let setpoint = &design.equilibrium * xbar;
    let km_sp = &design.mid.k * &setpoint;

    if inside(design.omega_mid.f(), &g_m, x) {
        let coef = match coefficient_lp(x, design.omega_mid.f(), &g_m, design.omega_high.f(), &g_h) {
            Ok(c) => c,
            Err(e) => return fallback(&design.low, bounds, input, window, status_of(&e), e.to_string(), start),
        };
        let (c, r) = (coef.c, &coef.r);
        let ff_h = design.high.tracking_feedforward(window)?;
        let u = -(&design.mid.k * r) + &km_sp * (c * c) - &design.high.k * (x - r) + ff_h * ((1.0 - c) * (1.0 - c));
        let region = if c > 0.0 { Region::Mid } else { Region::High };
        return Ok(finish(u, bounds, c, region, Some(coef.status), start));
    }

    if !design.omega_low.contains(x, SET_TOL)? {
        let why = "state outside Ω^l".to_string();
        return fallback(&design.low, bounds, input, window, None, why, start);
    }
    let coef = match coefficient_lp(x, design.omega_low.f(), design.omega_low.g(), design.omega_mid.f(), &g_m) {
        Ok(c) => c,
        Err(e) => return fallback(&design.low, bounds, input, window, status_of(&e), e.to_string(), start),
    };
    let (c, r) = (coef.c, &coef.r);
    let ff_l = design.low.tracking_feedforward(window)?;
    let u = -(&design.low.k * r) + ff_l * (c * c) - &design.mid.k * (x - r) + &km_sp * ((1.0 - c) * (1.0 - c));
    Ok(finish(u, bounds, c, Region::Low, Some(coef.status), start))
}
