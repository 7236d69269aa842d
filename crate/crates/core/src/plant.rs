//! Planar UAV: nonlinear rigid-body model, attitude PID, command transform
//! and the closed-loop simulator.

use std::time::Duration;

use nalgebra::{dvector, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controllers::{AxisController, ControlOutput, ControllerInput, Region};
use crate::error::{Error, Result};
use crate::trajectories::ReferenceTrajectory;

/// Height of the simulation origin above the ground, in metres.
pub const ALTITUDE_OFFSET: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UavParams {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub inertia: f64,
    /// m/s²
    pub gravity: f64,
    /// Maximum collective thrust, N.
    pub thrust_max: f64,
    /// Attitude command limit, degrees.
    pub tilt_max_deg: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        UavParams { mass: 0.03, inertia: 2.3951e-5, gravity: 9.81, thrust_max: 0.6, tilt_max_deg: 30.0 }
    }
}

impl UavParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, val) in [
            ("plant.mass", self.mass),
            ("plant.inertia", self.inertia),
            ("plant.gravity", self.gravity),
            ("plant.thrust_max", self.thrust_max),
        ] {
            if !(val > 0.0) || !val.is_finite() {
                v.push(format!("{name} must be positive and finite, got {val}"));
            }
        }
        if !(self.tilt_max_deg > 0.0 && self.tilt_max_deg < 90.0) {
            v.push(format!("plant.tilt_max_deg must lie in (0, 90), got {}", self.tilt_max_deg));
        }
        if self.thrust_max <= self.mass * self.gravity {
            v.push(format!(
                "plant.thrust_max = {} N cannot hold the weight {} N",
                self.thrust_max,
                self.mass * self.gravity
            ));
        }
        v
    }

    pub fn tilt_max(&self) -> f64 {
        self.tilt_max_deg.to_radians()
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Lateral acceleration reachable at the tilt limit: `g·tan φ_max`.
    pub fn lateral_accel_max(&self) -> f64 {
        self.gravity * self.tilt_max().tan()
    }

    /// `[−g, F_max/m − g]`.
    pub fn vertical_accel_range(&self) -> (f64, f64) {
        (-self.gravity, self.thrust_max / self.mass - self.gravity)
    }
}

/// `(y, ẏ, z, ż, φ, φ̇)`; `z` is measured from the simulation origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarUavState {
    pub y: f64,
    pub dy: f64,
    pub z: f64,
    pub dz: f64,
    pub phi: f64,
    pub dphi: f64,
}

impl PlanarUavState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.y, self.dy, self.z, self.dz, self.phi, self.dphi]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        PlanarUavState { y: a[0], dy: a[1], z: a[2], dz: a[3], phi: a[4], dphi: a[5] }
    }

    pub fn y_axis(&self) -> DVector<f64> {
        dvector![self.y, self.dy]
    }

    pub fn z_axis(&self) -> DVector<f64> {
        dvector![self.z, self.dz]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    fn axpy(&self, h: f64, d: &PlanarUavState) -> PlanarUavState {
        let (a, b) = (self.to_array(), d.to_array());
        PlanarUavState::from_array(std::array::from_fn(|i| a[i] + h * b[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    /// s
    pub period: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains { kp: 0.3, kd: 0.003, ki: 0.0001, period: 0.001 }
    }
}

/// Discrete PID with its memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState {
    pub gains: PidGains,
    pub integral: f64,
    pub prev_error: f64,
}

impl PidState {
    pub fn new(gains: PidGains) -> Result<Self> {
        if !(gains.period > 0.0) {
            return Err(Error::InvalidArgument(format!("PID period must be positive, got {}", gains.period)));
        }
        Ok(PidState { gains, integral: 0.0, prev_error: 0.0 })
    }
}

/// Derivative of the state; `F_T` outside `[0, F_max]` is clamped and the
/// second value reports it.
pub fn dynamics_deriv(s: &PlanarUavState, thrust: f64, tau: f64, p: &UavParams) -> (PlanarUavState, bool) {
    let f = thrust.clamp(0.0, p.thrust_max);
    let (sin, cos) = s.phi.sin_cos();
    let d = PlanarUavState {
        y: s.dy,
        dy: -(f / p.mass) * sin,
        z: s.dz,
        dz: -p.gravity + (f / p.mass) * cos,
        phi: s.dphi,
        dphi: tau / p.inertia,
    };
    (d, f != thrust)
}

/// Attitude reference and thrust for the commanded accelerations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerCommand {
    pub phi_ref: f64,
    pub thrust: f64,
    pub tilt_saturated: bool,
    pub thrust_saturated: bool,
}

/// `φ̄ = −ÿ/g` within the tilt limit and `F_T = m(z̈ + g)` within
/// `[0, F_max]`.
pub fn outer_to_inner(ydd: f64, zdd: f64, p: &UavParams) -> InnerCommand {
    let lim = p.tilt_max();
    let phi = -ydd / p.gravity;
    let thrust = p.mass * (zdd + p.gravity);
    let phi_ref = phi.clamp(-lim, lim);
    let f = thrust.clamp(0.0, p.thrust_max);
    InnerCommand { phi_ref, thrust: f, tilt_saturated: phi_ref != phi, thrust_saturated: f != thrust }
}

/// One PID update at the fixed attitude period.
pub fn attitude_pid_step(phi_ref: f64, s: &PlanarUavState, pid: &mut PidState) -> f64 {
    let g = pid.gains;
    let e = phi_ref - s.phi;
    pid.integral += e * g.period;
    let tau = g.kp * e + g.kd * (e - pid.prev_error) / g.period + g.ki * pid.integral;
    pid.prev_error = e;
    tau
}

/// Classic RK4 step with inputs held over `dt`.
pub fn integrate_step(s: &PlanarUavState, thrust: f64, tau: f64, dt: f64, p: &UavParams) -> Result<PlanarUavState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    let f = |x: &PlanarUavState| dynamics_deriv(x, thrust, tau, p).0;
    let k1 = f(s);
    let k2 = f(&s.axpy(dt / 2.0, &k1));
    let k3 = f(&s.axpy(dt / 2.0, &k2));
    let k4 = f(&s.axpy(dt, &k3));
    let (a, b1, b2, b3, b4) = (s.to_array(), k1.to_array(), k2.to_array(), k3.to_array(), k4.to_array());
    let next = PlanarUavState::from_array(std::array::from_fn(|i| {
        a[i] + dt / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i])
    }));
    if !next.is_finite() {
        return Err(Error::Divergence { t: f64::NAN, reason: "non-finite state after integration".into() });
    }
    Ok(next)
}

/// Rates and duration of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub duration: f64,
    /// Outer (position) period, s.
    pub ts: f64,
    /// Inner ticks per outer period.
    pub inner_ratio: usize,
    pub params: UavParams,
    pub pid: PidGains,
    pub initial: PlanarUavState,
    /// Standard deviation of Gaussian noise added to the measured position
    /// and velocity; zero gives exact measurements.
    pub noise_std: f64,
    pub seed: u64,
}

impl SimSettings {
    pub fn new(duration: f64, ts: f64, inner_ratio: usize, params: UavParams, pid: PidGains) -> Self {
        SimSettings {
            duration,
            ts,
            inner_ratio,
            params,
            pid,
            initial: PlanarUavState::default(),
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }
}

/// Per-sample flags.
pub mod flags {
    pub const SAT_Y: &str = "sat_y";
    pub const SAT_Z: &str = "sat_z";
    pub const FALLBACK_Y: &str = "fallback_y";
    pub const FALLBACK_Z: &str = "fallback_z";
    pub const TILT_LIMIT: &str = "tilt_limit";
    pub const THRUST_LIMIT: &str = "thrust_limit";
    pub const ATTITUDE_EXCURSION: &str = "attitude_excursion";

    pub const ALL: [&str; 7] = [SAT_Y, SAT_Z, FALLBACK_Y, FALLBACK_Z, TILT_LIMIT, THRUST_LIMIT, ATTITUDE_EXCURSION];

    /// The static name of a flag read back from text.
    pub fn intern(name: &str) -> Option<&'static str> {
        ALL.into_iter().find(|f| *f == name)
    }
}

/// One outer sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub state: PlanarUavState,
    pub ydd_cmd: f64,
    pub zdd_cmd: f64,
    pub phi_ref: f64,
    pub thrust: f64,
    pub tau: f64,
    pub c_star_y: Option<f64>,
    pub c_star_z: Option<f64>,
    pub region_y: Option<Region>,
    pub region_z: Option<Region>,
    pub solve_time_y: f64,
    pub solve_time_z: f64,
    pub flags: Vec<&'static str>,
    /// `(ȳ, ẏ̄, z̄, ż̄)`.
    pub reference: [f64; 4],
}

impl TraceRow {
    pub fn altitude(&self) -> f64 {
        self.state.z + ALTITUDE_OFFSET
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimTrace {
    pub ts: f64,
    pub rows: Vec<TraceRow>,
    /// Why the run stopped early, if it did.
    pub aborted: Option<String>,
}

/// Closed-loop run of the planar model.
///
/// Every `inner_ratio` ticks the axis controllers see the exact state and a
/// preview window; their accelerations pass through [`outer_to_inner`]. Each
/// tick runs the attitude PID and one RK4 step of length `ts/inner_ratio`.
/// A divergence or controller error ends the run and keeps what was recorded.
pub fn simulate(
    y_ctrl: &mut AxisController,
    z_ctrl: &mut AxisController,
    traj: &ReferenceTrajectory,
    settings: &SimSettings,
) -> Result<SimTrace> {
    let SimSettings { duration, ts, inner_ratio, params, pid, initial, noise_std, seed } = *settings;
    if !(duration > 0.0) || !(ts > 0.0) || inner_ratio == 0 {
        return Err(Error::InvalidArgument("duration, period and rate ratio must be positive".into()));
    }
    let mut noise = if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Some((normal, ChaCha8Rng::seed_from_u64(seed)))
    } else {
        None
    };
    let dt = ts / inner_ratio as f64;
    let mut pid = PidState::new(PidGains { period: dt, ..pid })?;
    let steps = settings.steps();
    let preview = y_ctrl.preview().max(z_ctrl.preview()).max(1);
    let mut trace = SimTrace { ts, rows: Vec::with_capacity(steps + 1), aborted: None };
    let mut s = initial;

    for k in 0..=steps {
        let t = k as f64 * ts;
        let (wy, wz) = traj.preview_window(k, preview, ts);
        let mut xy = s.y_axis();
        let mut xz = s.z_axis();
        if let Some((normal, rng)) = noise.as_mut() {
            for v in xy.iter_mut().chain(xz.iter_mut()) {
                *v += normal.sample(rng);
            }
        }
        let oy = match y_ctrl.step(&ControllerInput::new(&xy, &wy, k)) {
            Ok(o) => o,
            Err(e) => {
                trace.aborted = Some(format!("y-axis controller failed at t = {t}: {e}"));
                return Ok(trace);
            }
        };
        let oz = match z_ctrl.step(&ControllerInput::new(&xz, &wz, k)) {
            Ok(o) => o,
            Err(e) => {
                trace.aborted = Some(format!("z-axis controller failed at t = {t}: {e}"));
                return Ok(trace);
            }
        };
        let cmd = outer_to_inner(oy.u[0], oz.u[0], &params);
        let mut row = record(t, &s, &oy, &oz, &cmd, [wy[0][0], wy[0][1], wz[0][0], wz[0][1]]);

        let mut next = s;
        for tick in 0..inner_ratio {
            let tau = attitude_pid_step(cmd.phi_ref, &next, &mut pid);
            if tick == 0 {
                row.tau = tau;
            }
            if k == steps {
                break;
            }
            next = match integrate_step(&next, cmd.thrust, tau, dt, &params) {
                Ok(n) => n,
                Err(_) => {
                    trace.rows.push(row);
                    trace.aborted = Some(format!("state became non-finite after t = {t}"));
                    return Ok(trace);
                }
            };
        }
        trace.rows.push(row);
        if next.phi.abs() >= std::f64::consts::FRAC_PI_2 {
            trace.aborted = Some(format!("attitude reached ±90° after t = {t}"));
            return Ok(trace);
        }
        s = next;
    }
    Ok(trace)
}

fn record(
    t: f64,
    s: &PlanarUavState,
    oy: &ControlOutput,
    oz: &ControlOutput,
    cmd: &InnerCommand,
    reference: [f64; 4],
) -> TraceRow {
    let mut fl = Vec::new();
    if oy.saturated {
        fl.push(flags::SAT_Y);
    }
    if oz.saturated {
        fl.push(flags::SAT_Z);
    }
    if oy.fallback {
        fl.push(flags::FALLBACK_Y);
    }
    if oz.fallback {
        fl.push(flags::FALLBACK_Z);
    }
    if cmd.tilt_saturated {
        fl.push(flags::TILT_LIMIT);
    }
    if cmd.thrust_saturated {
        fl.push(flags::THRUST_LIMIT);
    }
    if s.phi.abs() >= 30f64.to_radians() {
        fl.push(flags::ATTITUDE_EXCURSION);
    }
    TraceRow {
        t,
        state: *s,
        ydd_cmd: oy.u[0],
        zdd_cmd: oz.u[0],
        phi_ref: cmd.phi_ref,
        thrust: cmd.thrust,
        tau: 0.0,
        c_star_y: oy.c_star,
        c_star_z: oz.c_star,
        region_y: oy.region,
        region_z: oz.region,
        solve_time_y: secs(oy.solve_time),
        solve_time_z: secs(oz.solve_time),
        flags: fl,
        reference,
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}
