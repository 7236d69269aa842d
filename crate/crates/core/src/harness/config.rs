use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controllers::ControllerKind;
use crate::error::{Error, Result};
use crate::plant::{PidGains, SimSettings, UavParams};
use crate::polytope::Polytope;
use crate::synthesis::{discretize_double_integrator, tighten_for_references, AxisDesignConfig, CostWeights};
use crate::trajectories::ReferenceTrajectory;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "ICTRACK_OUT_DIR";

/// Required ratio between the position and attitude periods.
pub const RATE_RATIO: usize = 10;

/// One of the two decoupled position axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Y,
    Z,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Y, Axis::Z];

    pub fn name(&self) -> &'static str {
        match self {
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_controllers")]
    pub controllers: Vec<ControllerKind>,
    pub trajectory: ReferenceTrajectory,
    /// s
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub plant: UavParams,
    #[serde(default)]
    pub pid: PidConfig,
    #[serde(default)]
    pub constraints: ConstraintConfig,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub ic: IcConfig,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_controllers() -> Vec<ControllerKind> {
    vec![ControllerKind::Mpc, ControllerKind::Mpcmb, ControllerKind::Eic, ControllerKind::Ic]
}

fn default_duration() -> f64 {
    10.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    /// Position loop period, s.
    pub ts: f64,
    /// Attitude loop period, s.
    pub ts_att: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates { ts: 0.01, ts_att: 0.001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidConfig {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        let g = PidGains::default();
        PidConfig { kp: g.kp, kd: g.kd, ki: g.ki }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintConfig {
    /// |y| bound, m.
    pub y_max: f64,
    /// |z| bound around the simulation origin, m.
    pub z_max: f64,
    /// Velocity bound on both axes, m/s.
    pub v_max: f64,
    /// Share of the input range kept free for feedforward.
    pub headroom: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig { y_max: 2.0, z_max: 1.25, v_max: 5.0, headroom: 0.1 }
    }
}

/// Diagonal state weight and scalar input weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSet {
    pub q: [f64; 2],
    pub r: f64,
}

impl WeightSet {
    pub fn to_weights(&self) -> Result<CostWeights> {
        CostWeights::diagonal(&self.q, self.r)
    }

    fn violations(&self, name: &str, out: &mut Vec<String>) {
        if self.q.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            out.push(format!("{name}.q entries must be nonnegative and finite"));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            out.push(format!("{name}.r must be positive and finite, got {}", self.r));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisWeights {
    pub high: WeightSet,
    pub mid: WeightSet,
    pub low: WeightSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub y: AxisWeights,
    pub z: AxisWeights,
}

impl Default for WeightConfig {
    fn default() -> Self {
        let w = |q0: f64, r: f64| WeightSet { q: [q0, 0.04], r };
        WeightConfig {
            y: AxisWeights { high: w(0.16, 5.0), mid: w(0.25, 5.0), low: w(0.25, 50.0) },
            z: AxisWeights { high: w(0.64, 0.04), mid: w(0.25, 0.04), low: w(0.64, 0.4) },
        }
    }
}

impl WeightConfig {
    pub fn axis(&self, axis: Axis) -> &AxisWeights {
        match axis {
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Prediction horizon, s.
    pub horizon: f64,
    /// Block length of the move-blocked variant, s.
    pub coarse_ts: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig { horizon: 8.0, coarse_ts: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcConfig {
    /// Reference preview of the tracking laws, in samples.
    pub preview: usize,
    /// Iteration cap of the invariant-set computation.
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IcConfig {
    fn default() -> Self {
        IcConfig { preview: 800, max_iter: 2000, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Standard deviation of measurement noise; 0 disables it.
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Design cache; defaults to `<dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Simulate controllers on separate threads.
    pub parallel: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("results"), cache_dir: None, parallel: false }
    }
}

impl ExperimentConfig {
    /// Defaults with the given trajectory.
    pub fn with_trajectory(trajectory: ReferenceTrajectory) -> Self {
        ExperimentConfig {
            controllers: default_controllers(),
            trajectory,
            duration: default_duration(),
            seed: 0,
            rates: Rates::default(),
            plant: UavParams::default(),
            pid: PidConfig::default(),
            constraints: ConstraintConfig::default(),
            weights: WeightConfig::default(),
            mpc: MpcConfig::default(),
            ic: IcConfig::default(),
            sensor: SensorConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Every problem with the configuration that can be found without
    /// synthesizing the designs.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.controllers.is_empty() {
            v.push("controllers must name at least one controller".into());
        }
        for (i, k) in self.controllers.iter().enumerate() {
            if self.controllers[..i].contains(k) {
                v.push(format!("controller {k} is listed twice"));
            }
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            v.push(format!("duration must be positive, got {}", self.duration));
        }
        let Rates { ts, ts_att } = self.rates;
        if !(ts > 0.0) || !(ts_att > 0.0) {
            v.push(format!("rates.ts and rates.ts_att must be positive, got {ts} and {ts_att}"));
        } else if ((ts / ts_att) - RATE_RATIO as f64).abs() > 1e-9 {
            v.push(format!("rates.ts / rates.ts_att must equal {RATE_RATIO}, got {}", ts / ts_att));
        }
        // Reference samples need a valid duration, period and state set.
        let mut refs_checkable = self.duration > 0.0 && self.duration.is_finite() && ts > 0.0;
        v.extend(self.plant.violations());
        for (name, val) in [("pid.kp", self.pid.kp), ("pid.kd", self.pid.kd), ("pid.ki", self.pid.ki)] {
            if !(val >= 0.0) || !val.is_finite() {
                v.push(format!("{name} must be nonnegative and finite, got {val}"));
            }
        }
        let c = self.constraints;
        for (name, val) in
            [("constraints.y_max", c.y_max), ("constraints.z_max", c.z_max), ("constraints.v_max", c.v_max)]
        {
            if !(val > 0.0) || !val.is_finite() {
                v.push(format!("{name} must be positive and finite, got {val}"));
                refs_checkable = false;
            }
        }
        if !(0.0..1.0).contains(&c.headroom) {
            v.push(format!("constraints.headroom must lie in [0, 1), got {}", c.headroom));
        }
        for axis in Axis::BOTH {
            let w = self.weights.axis(axis);
            for (lvl, set) in [("high", &w.high), ("mid", &w.mid), ("low", &w.low)] {
                set.violations(&format!("weights.{}.{lvl}", axis.name()), &mut v);
            }
        }
        if ts > 0.0 {
            for (name, val) in [("mpc.horizon", self.mpc.horizon), ("mpc.coarse_ts", self.mpc.coarse_ts)] {
                let k = (val / ts).round();
                if !(k >= 1.0) || (k * ts - val).abs() > 1e-9 * val.abs().max(ts) {
                    v.push(format!("{name} = {val} must be a positive multiple of rates.ts = {ts}"));
                }
            }
        }
        if self.ic.preview < 1 {
            v.push("ic.preview must be at least 1".into());
        }
        if self.ic.max_iter < 1 {
            v.push("ic.max_iter must be at least 1".into());
        }
        if !(self.ic.tol > 0.0) {
            v.push(format!("ic.tol must be positive, got {}", self.ic.tol));
        }
        if !(self.sensor.noise_std >= 0.0) || !self.sensor.noise_std.is_finite() {
            v.push(format!("sensor.noise_std must be nonnegative, got {}", self.sensor.noise_std));
        }
        let traj = self.trajectory.violations();
        refs_checkable &= traj.is_empty();
        v.extend(traj);
        if refs_checkable {
            v.extend(self.reference_violations());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Reference samples that touch or leave `X`, one message per halfspace.
    fn reference_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for axis in Axis::BOTH {
            let Ok(x) = self.state_set(axis) else { continue };
            let refs = self.reference_samples(axis);
            for i in 0..x.num_rows() {
                let row = x.f().row(i);
                if let Some((k, r)) = refs.iter().enumerate().find(|(_, r)| row.dot(&r.transpose()) >= x.g()[i]) {
                    out.push(format!(
                        "{}-axis reference at t = {} s is not strictly inside halfspace {} (value {})",
                        axis.name(),
                        k as f64 * self.rates.ts,
                        describe_halfspace(&x, i),
                        row.dot(&r.transpose())
                    ));
                }
            }
        }
        out
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.rates.ts).round() as usize
    }

    /// Reference states of one axis at every outer sample of the run.
    pub fn reference_samples(&self, axis: Axis) -> Vec<DVector<f64>> {
        let (y, z) = self.trajectory.preview_window(0, self.steps(), self.rates.ts);
        match axis {
            Axis::Y => y,
            Axis::Z => z,
        }
    }

    pub fn state_set(&self, axis: Axis) -> Result<Polytope> {
        let c = self.constraints;
        let p = match axis {
            Axis::Y => c.y_max,
            Axis::Z => c.z_max,
        };
        Polytope::symmetric_box(&[p, c.v_max])
    }

    /// Acceleration bounds reachable through the attitude and thrust limits.
    pub fn input_set(&self, axis: Axis) -> Result<Polytope> {
        match axis {
            Axis::Y => {
                let a = self.plant.lateral_accel_max();
                Polytope::symmetric_box(&[a])
            }
            Axis::Z => {
                let (lo, hi) = self.plant.vertical_accel_range();
                Polytope::from_box(&[lo], &[hi])
            }
        }
    }

    /// Synthesis inputs for one axis. The translated sets are kept inside
    /// `X` tightened by the run's reference samples.
    pub fn design_config(&self, axis: Axis) -> Result<AxisDesignConfig> {
        let w = self.weights.axis(axis);
        let x_set = self.state_set(axis)?;
        let inner = tighten_for_references(&x_set, &self.reference_samples(axis))?;
        Ok(AxisDesignConfig {
            model: discretize_double_integrator(self.rates.ts)?,
            high: w.high.to_weights()?,
            mid: w.mid.to_weights()?,
            low: w.low.to_weights()?,
            x_set,
            u_set: self.input_set(axis)?,
            inner_x_set: Some(inner),
            headroom: self.constraints.headroom,
            preview: self.ic.preview,
            max_iter: self.ic.max_iter,
            tol: self.ic.tol,
        })
    }

    pub fn sim_settings(&self) -> SimSettings {
        let pid = PidGains { kp: self.pid.kp, kd: self.pid.kd, ki: self.pid.ki, period: self.rates.ts_att };
        let mut s = SimSettings::new(self.duration, self.rates.ts, RATE_RATIO, self.plant, pid);
        s.noise_std = self.sensor.noise_std;
        s.seed = self.seed;
        s
    }

    /// Output directory: explicit override, then the environment, then the
    /// file.
    pub fn output_dir(&self, explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output.dir.clone(),
        }
    }

    pub fn cache_dir(&self, out_dir: &Path) -> PathBuf {
        self.output.cache_dir.clone().unwrap_or_else(|| out_dir.join("cache"))
    }
}

/// `[f₁, f₂]·x ≤ g` with shortest float formatting.
pub fn describe_halfspace(p: &Polytope, i: usize) -> String {
    let coeffs: Vec<String> = p.f().row(i).iter().map(|v| format!("{v}")).collect();
    format!("[{}]·x ≤ {}", coeffs.join(", "), p.g()[i])
}
