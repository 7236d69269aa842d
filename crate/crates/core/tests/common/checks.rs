//! Checks shared by the acceptance runner and the regular tests. Each returns
//! a one-line summary on success and a description of the first failure
//! otherwise.

use std::path::Path;

use ictrack_core::controllers::{
    build_move_blocking, ic_coefficient_lp, ic_decompose, ic_step, lqr_tracking_step, BlockingPattern, ControllerInput,
    ControllerKind, InputBounds, MpcController,
};
use ictrack_core::harness::{
    run_experiment, trace_file_name, Axis, ControllerReport, ExperimentReport, TIMING_COLUMNS,
};
use ictrack_core::plant::{dynamics_deriv, integrate_step, PlanarUavState, UavParams};
use ictrack_core::polytope::Polytope;
use ictrack_core::synthesis::{discretize_double_integrator, lqr_gain, CostWeights};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixture;
use super::oracles::{
    batch_lq_first_input, dare_value_iteration, dense_tracking_qp, grid_coefficient, polygon_vertices, solve_dense_qp,
};

pub type Check = Result<String, String>;

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

pub fn move_blocking() -> Check {
    let p = build_move_blocking(8.0, 0.01, 0.2).map_err(|e| e.to_string())?;
    let full = BlockingPattern::full(800).map_err(|e| e.to_string())?;
    let pct = 100.0 * p.reduction();
    if p.moves() != 41 || p.horizon() != 800 || full.moves() != 800 {
        return Err(format!("{} moves over {} samples", p.moves(), p.horizon()));
    }
    if pct < 94.5 {
        return Err(format!("reduction {pct:.3}%"));
    }
    Ok(format!("41 versus 800 decision instants, reduction {pct:.3}%"))
}

/// One-step invariance and constraint satisfaction on `samples` points of
/// every set of both axes.
pub fn invariance(samples: usize) -> Check {
    let (_, designs) = fixture();
    let tol = 1e-9;
    let mut checked = 0;
    for axis in Axis::BOTH {
        let (d, dc) = designs.axis(axis);
        let u_tight = dc.u_set.scale(1.0 - dc.headroom).map_err(|e| e.to_string())?;
        let inner = dc.inner_x_set.clone().unwrap_or_else(|| dc.x_set.clone());
        for (name, set, law, x_set) in [
            ("Ω^l", &d.omega_low, &d.low, &dc.x_set),
            ("Ω^m", &d.omega_mid, &d.mid, &inner),
            ("Ω^h", &d.omega_high, &d.high, &inner),
        ] {
            let pts = set.sample_points(samples, 0xA11CE).map_err(|e| e.to_string())?;
            for x in &pts {
                let u = -(&law.k * x);
                let next = law.closed_loop() * x;
                let bad = [
                    ("successor", set.max_violation(&next)),
                    ("state constraint", x_set.max_violation(x)),
                    ("input constraint", u_tight.max_violation(&u)),
                ];
                if let Some((what, v)) = bad.iter().find(|(_, v)| *v > tol) {
                    return Err(format!("{}-axis {name}: {what} violated by {v:e} at {}", axis.name(), fmt_vec(x)));
                }
            }
            checked += pts.len();
        }
    }
    Ok(format!("{checked} samples over 6 sets invariant and admissible within 1e-9"))
}

fn ref_points(axis: Axis) -> Vec<DVector<f64>> {
    let (cfg, _) = fixture();
    cfg.reference_samples(axis).into_iter().step_by(97).collect()
}

/// Inside the shifted `Ω^h` the coefficient vanishes and IC equals the
/// tracking LQR law.
pub fn ic_collapse(samples: usize) -> Check {
    let (cfg, designs) = fixture();
    let mut worst_c: f64 = 0.0;
    let mut worst_u: f64 = 0.0;
    for axis in Axis::BOTH {
        let (d, dc) = designs.axis(axis);
        let bounds = InputBounds::from_polytope(&dc.u_set).map_err(|e| e.to_string())?;
        let pts = d.omega_high.sample_points(samples, 7).map_err(|e| e.to_string())?;
        for (i, e) in pts.iter().enumerate() {
            let k = (i * 37) % cfg.steps();
            let (wy, wz) = cfg.trajectory.preview_window(k, d.preview, cfg.rates.ts);
            let window = if axis == Axis::Y { wy } else { wz };
            let x = e + &window[0];
            let input = ControllerInput::new(&x, &window, k);
            let ic = ic_step(d, &bounds, &input).map_err(|e| e.to_string())?;
            let lqr = lqr_tracking_step(&d.high, &bounds, &input).map_err(|e| e.to_string())?;
            let c = ic.c_star.ok_or("IC reported no coefficient")?;
            worst_c = worst_c.max(c);
            worst_u = worst_u.max((&ic.u - &lqr.u).amax());
        }
    }
    if worst_c > 1e-8 || worst_u > 1e-8 {
        return Err(format!("max c* = {worst_c:e}, max |u_IC − u_LQR| = {worst_u:e}"));
    }
    Ok(format!("max c* = {worst_c:e}, max |u_IC − u_LQR| = {worst_u:e} over {} states", 2 * samples))
}

/// Outside the shifted `Ω^h` the split recombines and `c*` agrees with a
/// polygon-clipping grid search.
pub fn ic_grid(samples: usize) -> Check {
    let (_, designs) = fixture();
    let mut worst_rec: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    let mut count = 0;
    for axis in Axis::BOTH {
        let (d, _) = designs.axis(axis);
        let outer_poly = polygon_vertices(d.omega_low.f(), d.omega_low.g());
        let refs = ref_points(axis);
        let pool = d.omega_low.sample_points(samples * 4, 11).map_err(|e| e.to_string())?;
        let mut taken = 0;
        for (i, x) in pool.iter().enumerate() {
            if taken == samples {
                break;
            }
            let xbar = &refs[i % refs.len()];
            let inner = d.omega_high.shift(xbar).map_err(|e| e.to_string())?;
            if inner.max_violation(x) <= 0.0 {
                continue;
            }
            taken += 1;
            let coef = ic_coefficient_lp(x, &d.omega_low, &inner).map_err(|e| e.to_string())?;
            let (xl, xh) = ic_decompose(x, &coef.r, coef.c).map_err(|e| e.to_string())?;
            let rec = (&xl * coef.c + &xh * (1.0 - coef.c) - x).amax();
            let member = d.omega_low.max_violation(&xl).max(inner.max_violation(&xh));
            worst_rec = worst_rec.max(rec);
            if coef.c > 1e-6 && coef.c < 1.0 - 1e-6 && member > 1e-7 {
                return Err(format!("{}-axis: component leaves its set by {member:e}", axis.name()));
            }
            let oracle = grid_coefficient(x, &outer_poly, inner.f(), inner.g(), 1e-4);
            let gap = (oracle - coef.c).abs();
            worst_c = worst_c.max(gap);
            if gap > 2e-4 {
                return Err(format!(
                    "{}-axis at {}: c* = {} but grid search gives {oracle}",
                    axis.name(),
                    fmt_vec(x),
                    coef.c
                ));
            }
        }
        count += taken;
        if taken < samples {
            return Err(format!("{}-axis: only {taken} states found outside Ω^h", axis.name()));
        }
    }
    if worst_rec > 1e-9 {
        return Err(format!("recombination error {worst_rec:e}"));
    }
    Ok(format!("{count} states: recombination error {worst_rec:e}, max |c* − grid| = {worst_c:e}"))
}

/// `c*` never grows along the regulated linear closed loop.
pub fn lyapunov(starts: usize, max_steps: usize) -> Check {
    let (_, designs) = fixture();
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for axis in Axis::BOTH {
        let (d, dc) = designs.axis(axis);
        let bounds = InputBounds::from_polytope(&dc.u_set).map_err(|e| e.to_string())?;
        let window = vec![DVector::zeros(2); d.preview + 1];
        let model = &d.high.model;
        for x0 in d.omega_low.sample_points(starts, 23).map_err(|e| e.to_string())? {
            let mut x = x0.clone();
            let mut prev = f64::INFINITY;
            for k in 0..max_steps {
                let out = ic_step(d, &bounds, &ControllerInput::new(&x, &window, k)).map_err(|e| e.to_string())?;
                if out.fallback {
                    return Err(format!("{}-axis: fallback at step {k} from {}", axis.name(), fmt_vec(&x0)));
                }
                let c = out.c_star.unwrap_or(0.0);
                worst = worst.max(c - prev);
                if c > prev + 1e-8 {
                    return Err(format!(
                        "{}-axis from {}: c* rose {prev} → {c} at step {k}",
                        axis.name(),
                        fmt_vec(&x0)
                    ));
                }
                prev = c;
                total += 1;
                if c == 0.0 {
                    break;
                }
                x = model.step(&x, &out.u);
            }
        }
    }
    Ok(format!("{} trajectories, {total} steps, largest increase {:e}", 2 * starts, worst.max(0.0)))
}

fn random_instance(rng: &mut ChaCha8Rng, wide: bool) -> Instance {
    let ts = [0.01, 0.05, 0.1][rng.gen_range(0..3)];
    let horizon = rng.gen_range(5..=20);
    let q = [rng.gen_range(0.5..20.0), rng.gen_range(0.01..0.5)];
    let r = rng.gen_range(0.001..0.5);
    let (p_max, v_max, u_max): (f64, f64, f64) = if wide {
        (1e6, 1e6, 1e6)
    } else {
        (rng.gen_range(0.5..2.0), rng.gen_range(0.3..1.5), rng.gen_range(0.1..1.5))
    };
    let (pb, vb) = (p_max.min(2.0), v_max.min(1.5));
    let x0 = DVector::from_vec(vec![rng.gen_range(-0.9..0.9) * pb, rng.gen_range(-0.9..0.9) * vb]);
    // Amplitudes beyond the position limit make the state constraints bind.
    let (amp, w, ph) =
        (rng.gen_range(0.0..1.5) * pb, rng.gen_range(0.5..4.0), rng.gen_range(0.0..std::f64::consts::TAU));
    let refs = (0..=horizon)
        .map(|k| {
            let t = k as f64 * ts;
            DVector::from_vec(vec![amp * (w * t + ph).sin(), amp * w * (w * t + ph).cos()])
        })
        .collect();
    Instance { ts, q, r, p_max, v_max, u_max, x0, refs }
}

struct Instance {
    ts: f64,
    q: [f64; 2],
    r: f64,
    p_max: f64,
    v_max: f64,
    u_max: f64,
    x0: DVector<f64>,
    refs: Vec<DVector<f64>>,
}

/// First MPC input against the dense KKT oracle on constrained instances
/// and against the Riccati recursion on unconstrained ones.
pub fn mpc_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut solved, mut active, mut tries) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    while solved < instances {
        tries += 1;
        if tries > 50 * instances {
            return Err(format!("only {solved} feasible instances in {tries} draws"));
        }
        let inst = random_instance(&mut rng, false);
        let model = discretize_double_integrator(inst.ts).map_err(|e| e.to_string())?;
        let w = CostWeights::diagonal(&inst.q, inst.r).map_err(|e| e.to_string())?;
        let x_set = Polytope::symmetric_box(&[inst.p_max, inst.v_max]).unwrap();
        let u_set = Polytope::symmetric_box(&[inst.u_max]).unwrap();
        if x_set.max_violation(&inst.x0) > 0.0 {
            continue;
        }
        let law = lqr_gain(&model, &w).map_err(|e| e.to_string())?;
        let horizon = inst.refs.len() - 1;
        let mut mpc = MpcController::new(&model, &w, &x_set, &u_set, BlockingPattern::full(horizon).unwrap(), law)
            .map_err(|e| e.to_string())?;
        let out = mpc.step(&ControllerInput::new(&inst.x0, &inst.refs, 0)).map_err(|e| e.to_string())?;
        if out.fallback {
            continue;
        }
        let qp = dense_tracking_qp(
            &model.a,
            &model.b,
            &w.q,
            &w.r,
            &inst.x0,
            &inst.refs,
            x_set.f(),
            x_set.g(),
            u_set.f(),
            u_set.g(),
        );
        let Some(u) = solve_dense_qp(&qp) else {
            return Err(format!("oracle failed on a feasible instance (draw {tries})"));
        };
        let slack = &qp.b - &qp.a * &u;
        if slack.iter().any(|s| *s < 1e-7) {
            active += 1;
        }
        let err = (out.u[0] - u[0]).abs();
        worst = worst.max(err);
        if err > 1e-8 {
            return Err(format!("instance {solved}: MPC u₀ = {} but oracle gives {}", out.u[0], u[0]));
        }
        solved += 1;
    }
    if active == 0 {
        return Err("no instance had an active constraint".into());
    }
    let mut worst_lq: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, true);
        let model = discretize_double_integrator(inst.ts).map_err(|e| e.to_string())?;
        let w = CostWeights::diagonal(&inst.q, inst.r).map_err(|e| e.to_string())?;
        let x_set = Polytope::symmetric_box(&[inst.p_max, inst.v_max]).unwrap();
        let u_set = Polytope::symmetric_box(&[inst.u_max]).unwrap();
        let law = lqr_gain(&model, &w).map_err(|e| e.to_string())?;
        let horizon = inst.refs.len() - 1;
        let mut mpc = MpcController::new(&model, &w, &x_set, &u_set, BlockingPattern::full(horizon).unwrap(), law)
            .map_err(|e| e.to_string())?;
        let out = mpc.step(&ControllerInput::new(&inst.x0, &inst.refs, 0)).map_err(|e| e.to_string())?;
        let u = batch_lq_first_input(&model.a, &model.b, &w.q, &w.r, &inst.x0, &inst.refs);
        let err = (out.u[0] - u[0]).abs();
        worst_lq = worst_lq.max(err);
        if err > 1e-6 {
            return Err(format!("unconstrained: MPC u₀ = {} but Riccati recursion gives {}", out.u[0], u[0]));
        }
    }
    Ok(format!(
        "{solved} constrained instances ({active} with active constraints) within {worst:e}; \
         {instances} unconstrained within {worst_lq:e}"
    ))
}

/// Gains of every weight set against Riccati value iteration.
pub fn dare() -> Check {
    let (cfg, designs) = fixture();
    let mut worst: f64 = 0.0;
    for axis in Axis::BOTH {
        let (d, _) = designs.axis(axis);
        let m = &d.high.model;
        let ws = cfg.weights.axis(axis);
        for (name, set, law) in [("high", &ws.high, &d.high), ("mid", &ws.mid, &d.mid), ("low", &ws.low, &d.low)] {
            let q = DMatrix::from_diagonal(&DVector::from_row_slice(&set.q));
            let r = DMatrix::from_element(1, 1, set.r);
            let (_, k) = dare_value_iteration(&m.a, &m.b, &q, &r, 10_000);
            let err = (&k - &law.k).amax();
            worst = worst.max(err);
            if err > 1e-8 {
                return Err(format!("{}-axis {name}: |K − K_vi| = {err:e}", axis.name()));
            }
        }
    }
    Ok(format!("6 gains within {worst:e} of 10⁴-step value iteration"))
}

pub fn plant() -> Check {
    let p = UavParams::default();
    let (d, _) = dynamics_deriv(&PlanarUavState::default(), 0.2943, 0.0, &p);
    let residual = d.dy.abs().max(d.dz.abs()).max(d.dphi.abs());
    if residual > 1e-12 {
        return Err(format!("hover residual {residual:e}"));
    }
    let mut s = PlanarUavState::default();
    let mut worst: f64 = 0.0;
    for k in 1..=1000 {
        s = integrate_step(&s, 0.0, 0.0, 0.001, &p).map_err(|e| e.to_string())?;
        worst = worst.max((s.dz + p.gravity * k as f64 * 0.001).abs());
    }
    if worst > 1e-9 {
        return Err(format!("free-fall velocity error {worst:e}"));
    }
    Ok(format!("hover residual {residual:e}, free-fall velocity error {worst:e}"))
}

/// The four compared controllers on the default figure-eight.
pub fn full_experiment(out: &Path) -> Result<ExperimentReport, String> {
    let mut cfg = super::lemniscate_config();
    cfg.controllers = vec![ControllerKind::Mpc, ControllerKind::Mpcmb, ControllerKind::Eic, ControllerKind::Ic];
    run_experiment(&cfg, out).map_err(|e| e.to_string())
}

fn metric(
    report: &ExperimentReport,
    kind: ControllerKind,
    f: fn(&ControllerReport) -> Option<f64>,
) -> Result<f64, String> {
    let row = report.get(kind).ok_or(format!("{kind} missing"))?;
    if row.status() != "ok" {
        return Err(format!("{kind} run status {}", row.status()));
    }
    f(row).ok_or(format!("{kind} has no value"))
}

pub fn lowest_j(report: &ExperimentReport) -> Check {
    let kinds = [ControllerKind::Mpc, ControllerKind::Mpcmb, ControllerKind::Eic, ControllerKind::Ic];
    let vals: Vec<(ControllerKind, f64)> =
        kinds.iter().map(|&k| metric(report, k, |r| r.j).map(|v| (k, v))).collect::<Result<_, _>>()?;
    let list: Vec<String> = vals.iter().map(|(k, v)| format!("{k} {v:.2}")).collect();
    let mpc = vals[0].1;
    if vals[1..].iter().all(|(_, v)| mpc < *v) {
        Ok(format!("J: {}", list.join(", ")))
    } else {
        Err(format!("J: {}", list.join(", ")))
    }
}

pub fn eic_ise_below_mpcmb(report: &ExperimentReport) -> Check {
    let e = metric(report, ControllerKind::Eic, |r| r.ise)?;
    let m = metric(report, ControllerKind::Mpcmb, |r| r.ise)?;
    let msg = format!("ISE: eIC {e:.2}, MPCMB {m:.2}");
    if e < m {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn ic_energy_above_mpc(report: &ExperimentReport) -> Check {
    let mpc = metric(report, ControllerKind::Mpc, |r| r.energy)?;
    let e = metric(report, ControllerKind::Eic, |r| r.energy)?;
    let i = metric(report, ControllerKind::Ic, |r| r.energy)?;
    let msg = format!("E: MPC {mpc:.2}, eIC {e:.2}, IC {i:.2}");
    if e > mpc && i > mpc {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn time_demands(report: &ExperimentReport) -> Check {
    let total = |k: ControllerKind| report.get(k).map(|r| r.timing.total_s).ok_or(format!("{k} missing"));
    let mpc = total(ControllerKind::Mpc)?;
    let share = |k| total(k).map(|t| 100.0 * t / mpc);
    let (e, i, mb) = (share(ControllerKind::Eic)?, share(ControllerKind::Ic)?, share(ControllerKind::Mpcmb)?);
    let msg = format!("MPC {mpc:.3} s; eIC {e:.2}%, IC {i:.2}%, MPCMB {mb:.2}% of MPC");
    if e <= 10.0 && i <= 10.0 && mb <= 25.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Trace file with the wall-clock columns removed.
fn trace_without_timing(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header: Vec<&str> = text.lines().next().unwrap_or_default().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !TIMING_COLUMNS.contains(&header[i])).collect();
    Ok(text
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| f[i]).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn determinism(a: &Path, b: &Path, kinds: &[ControllerKind]) -> Check {
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    if read(&a.join("metrics.csv"))? != read(&b.join("metrics.csv"))? {
        return Err("metrics.csv differs between runs".into());
    }
    for k in kinds {
        let name = trace_file_name(*k);
        if trace_without_timing(&a.join(&name))? != trace_without_timing(&b.join(&name))? {
            return Err(format!("{name} differs outside the timing columns"));
        }
    }
    Ok(format!("metrics.csv and {} traces identical", kinds.len()))
}
