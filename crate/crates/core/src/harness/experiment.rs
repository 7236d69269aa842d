use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    build_move_blocking, AxisController, BlockingPattern, ControllerKind, InputBounds, MpcController,
};
use crate::error::{Error, Result};
use crate::plant::{simulate, SimTrace};
use crate::polytope::Polytope;
use crate::solvers::{solve_lp, LpProblem, SolveStatus, DEFAULT_TOL};
use crate::synthesis::{build_ic_design, AxisDesignConfig, IcDesign};

use super::cache::DesignCache;
use super::config::{describe_halfspace, Axis, ExperimentConfig};
use super::metrics::{metric_energy, metric_ise, metric_j, trace_timing, TimingStats};
use super::output::{kind_from_trace_file, read_trace, trace_file_name, write_report, write_trace};
use super::svg::{path_svg, time_svg};

/// File names of the two plots.
pub const PATH_PLOT: &str = "path.svg";
pub const TIME_PLOT: &str = "solve_times.svg";

/// Designs of both axes.
#[derive(Debug, Clone)]
pub struct Designs {
    pub y: Arc<IcDesign>,
    pub z: Arc<IcDesign>,
    pub y_config: AxisDesignConfig,
    pub z_config: AxisDesignConfig,
    /// Whether each came from the cache.
    pub cached: [bool; 2],
}

impl Designs {
    pub fn axis(&self, axis: Axis) -> (&Arc<IcDesign>, &AxisDesignConfig) {
        match axis {
            Axis::Y => (&self.y, &self.y_config),
            Axis::Z => (&self.z, &self.z_config),
        }
    }
}

/// Builds both axis designs, going through `cache` when given.
pub fn synthesize(cfg: &ExperimentConfig, cache: Option<&DesignCache>) -> Result<Designs> {
    let mut out = Vec::with_capacity(2);
    for axis in Axis::BOTH {
        let dc = cfg.design_config(axis)?;
        let (d, hit) = match cache {
            Some(c) => c.load_or_build(&dc)?,
            None => (build_ic_design(&dc)?, false),
        };
        log::info!("{}-axis design {}", axis.name(), if hit { "loaded from cache" } else { "synthesized" });
        out.push((Arc::new(d), dc, hit));
    }
    let (z, zc, zh) = out.pop().expect("two axes");
    let (y, yc, yh) = out.pop().expect("two axes");
    Ok(Designs { y, z, y_config: yc, z_config: zc, cached: [yh, zh] })
}

/// Every reference sample at which a translated `Ω^h` or `Ω^m` leaves `X`,
/// at most one message per set and halfspace.
pub fn admissibility_violations(cfg: &ExperimentConfig, designs: &Designs) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for axis in Axis::BOTH {
        let (d, dc) = designs.axis(axis);
        let refs = cfg.reference_samples(axis);
        for (name, set) in [("Ω^h", &d.omega_high), ("Ω^m", &d.omega_mid)] {
            out.extend(shift_violations(axis, name, set, &dc.x_set, &refs, cfg.rates.ts)?);
        }
    }
    Ok(out)
}

fn shift_violations(
    axis: Axis,
    name: &str,
    set: &Polytope,
    x_set: &Polytope,
    refs: &[DVector<f64>],
    ts: f64,
) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for i in 0..x_set.num_rows() {
        let row = x_set.f().row(i).transpose();
        let lp = LpProblem::new(-&row, set.f().clone(), set.g().clone())?;
        let r = solve_lp(&lp, DEFAULT_TOL)?;
        let support = match r.status {
            SolveStatus::Optimal => -r.objective,
            SolveStatus::Infeasible => continue,
            other => return Err(Error::Solver(format!("support LP ended with status {}", other.as_str()))),
        };
        let g = x_set.g()[i];
        if let Some((k, r)) = refs.iter().enumerate().find(|(_, r)| support + row.dot(r) > g + 1e-9) {
            out.push(format!(
                "{}-axis: shift({name}, x̄ at t = {} s) violates halfspace {} by {:e}",
                axis.name(),
                k as f64 * ts,
                describe_halfspace(x_set, i),
                support + row.dot(r) - g
            ));
        }
    }
    Ok(out)
}

/// Validation including the checks that need the designs.
pub fn validate_full(cfg: &ExperimentConfig, cache: Option<&DesignCache>) -> Result<Designs> {
    cfg.validate()?;
    let designs = synthesize(cfg, cache)?;
    let v = admissibility_violations(cfg, &designs)?;
    if !v.is_empty() {
        return Err(Error::Admissibility(v.join("; ")));
    }
    Ok(designs)
}

/// Fresh controller pair for one run.
pub fn build_controllers(
    kind: ControllerKind,
    cfg: &ExperimentConfig,
    designs: &Designs,
) -> Result<(AxisController, AxisController)> {
    let mut pair = Vec::with_capacity(2);
    for axis in Axis::BOTH {
        let (d, dc) = designs.axis(axis);
        let bounds = InputBounds::from_polytope(&dc.u_set)?;
        let c = match kind {
            ControllerKind::Lqr => {
                AxisController::Lqr { law: Arc::new(d.high.clone()), bounds, preview: cfg.ic.preview }
            }
            ControllerKind::Ic => AxisController::Ic { design: d.clone(), bounds },
            ControllerKind::Eic => AxisController::Eic { design: d.clone(), bounds },
            ControllerKind::Mpc | ControllerKind::Mpcmb => {
                let n = (cfg.mpc.horizon / cfg.rates.ts).round() as usize;
                let pattern = if kind == ControllerKind::Mpc {
                    BlockingPattern::full(n)?
                } else {
                    build_move_blocking(cfg.mpc.horizon, cfg.rates.ts, cfg.mpc.coarse_ts)?
                };
                let mpc = MpcController::new(&dc.model, &dc.high, &dc.x_set, &dc.u_set, pattern, d.high.clone())?;
                AxisController::Mpc(Box::new(mpc))
            }
        };
        pair.push(c);
    }
    let z = pair.pop().expect("two axes");
    let y = pair.pop().expect("two axes");
    Ok((y, z))
}

/// Builds the controllers of `kind` and runs the closed loop.
pub fn simulate_controller(kind: ControllerKind, cfg: &ExperimentConfig, designs: &Designs) -> Result<SimTrace> {
    let (mut y, mut z) = build_controllers(kind, cfg, designs)?;
    simulate(&mut y, &mut z, &cfg.trajectory, &cfg.sim_settings())
}

/// Metrics and diagnostics of one controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerReport {
    pub controller: ControllerKind,
    pub j: Option<f64>,
    pub ise: Option<f64>,
    pub energy: Option<f64>,
    pub timing: TimingStats,
    /// Outer samples recorded.
    pub steps: usize,
    pub trace_path: Option<PathBuf>,
    /// Number of samples carrying each flag.
    pub flags: BTreeMap<String, usize>,
    pub aborted: Option<String>,
    pub error: Option<String>,
}

impl ControllerReport {
    pub fn status(&self) -> String {
        if self.error.is_some() {
            "error".into()
        } else if self.aborted.is_some() {
            "aborted".into()
        } else {
            "ok".into()
        }
    }

    fn failed(controller: ControllerKind, e: &Error) -> Self {
        ControllerReport {
            controller,
            j: None,
            ise: None,
            energy: None,
            timing: TimingStats::default(),
            steps: 0,
            trace_path: None,
            flags: BTreeMap::new(),
            aborted: None,
            error: Some(e.to_string()),
        }
    }

    fn from_trace(controller: ControllerKind, trace: &SimTrace, designs: &Designs) -> Self {
        let mut flags = BTreeMap::new();
        for r in &trace.rows {
            for f in &r.flags {
                *flags.entry(f.to_string()).or_insert(0) += 1;
            }
        }
        ControllerReport {
            controller,
            j: Some(metric_j(trace, &designs.y_config.high, &designs.z_config.high)),
            ise: Some(metric_ise(trace)),
            energy: Some(metric_energy(trace)),
            timing: trace_timing(trace),
            steps: trace.rows.len(),
            trace_path: None,
            flags,
            aborted: trace.aborted.clone(),
            error: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub controllers: Vec<ControllerReport>,
    pub output_dir: PathBuf,
    pub design_cached: [bool; 2],
    pub files: Vec<PathBuf>,
}

/// `100·(value − base)/base`, undefined for a zero or missing base.
pub fn delta_pct(value: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (value, base) {
        (Some(v), Some(b)) if b != 0.0 => Some(100.0 * (v - b) / b),
        _ => None,
    }
}

impl ExperimentReport {
    fn baseline(&self) -> Option<&ControllerReport> {
        self.controllers.first()
    }

    /// Percentage changes of J, ISE and E against the first controller.
    pub fn deltas(&self, row: &ControllerReport) -> (Option<f64>, Option<f64>, Option<f64>) {
        let Some(b) = self.baseline() else { return (None, None, None) };
        if std::ptr::eq(b, row) {
            return (None, None, None);
        }
        (delta_pct(row.j, b.j), delta_pct(row.ise, b.ise), delta_pct(row.energy, b.energy))
    }

    pub fn timing_delta(&self, row: &ControllerReport) -> Option<f64> {
        let b = self.baseline()?;
        if std::ptr::eq(b, row) {
            return None;
        }
        delta_pct(Some(row.timing.total_s), Some(b.timing.total_s))
    }

    pub fn get(&self, kind: ControllerKind) -> Option<&ControllerReport> {
        self.controllers.iter().find(|r| r.controller == kind)
    }
}

/// Simulates every selected controller, in parallel if configured.
pub fn run_all(cfg: &ExperimentConfig, designs: &Designs) -> Vec<(ControllerKind, Result<SimTrace>)> {
    if cfg.output.parallel && cfg.controllers.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> =
                cfg.controllers.iter().map(|&k| (k, s.spawn(move || simulate_controller(k, cfg, designs)))).collect();
            handles
                .into_iter()
                .map(|(k, h)| {
                    let r = h.join().unwrap_or_else(|_| Err(Error::Solver("simulation thread panicked".into())));
                    (k, r)
                })
                .collect()
        })
    } else {
        cfg.controllers.iter().map(|&k| (k, simulate_controller(k, cfg, designs))).collect()
    }
}

/// Runs the experiment and writes traces, reports and plots to `out_dir`.
/// A failing controller is reported and the others still run.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cache = DesignCache::new(cfg.cache_dir(out_dir));
    let designs = validate_full(cfg, Some(&cache))?;

    let mut report = ExperimentReport {
        controllers: Vec::new(),
        output_dir: out_dir.to_path_buf(),
        design_cached: designs.cached,
        files: Vec::new(),
    };
    let mut traces = Vec::new();
    for (kind, result) in run_all(cfg, &designs) {
        match result {
            Ok(trace) => {
                let mut row = ControllerReport::from_trace(kind, &trace, &designs);
                let path = out_dir.join(trace_file_name(kind));
                write_trace(&trace, &path)?;
                row.trace_path = Some(path.clone());
                report.files.push(path);
                report.controllers.push(row);
                traces.push((kind, trace));
            }
            Err(e) => {
                log::error!("{kind} failed: {e}");
                report.controllers.push(ControllerReport::failed(kind, &e));
            }
        }
    }
    let series: Vec<(ControllerKind, &SimTrace)> = traces.iter().map(|(k, t)| (*k, t)).collect();
    report.files.extend(write_plots(&series, out_dir)?);
    report.files.extend(["metrics.csv", "timing.csv", "report.md", "report.json"].map(|f| out_dir.join(f)));
    write_report(&report, out_dir)?;
    Ok(report)
}

pub fn write_plots(series: &[(ControllerKind, &SimTrace)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let p = out_dir.join(PATH_PLOT);
    std::fs::write(&p, path_svg(series)).map_err(|e| Error::io(&p, e))?;
    let t = out_dir.join(TIME_PLOT);
    std::fs::write(&t, time_svg(series)).map_err(|e| Error::io(&t, e))?;
    Ok(vec![p, t])
}

/// Regenerates the plots from the `trace_*.csv` files in `trace_dir`.
pub fn replot(trace_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(trace_dir).map_err(|e| Error::io(trace_dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(trace_dir, e))?.path();
        if let Some(kind) = kind_from_trace_file(&path) {
            found.push((kind, read_trace(&path)?));
        }
    }
    if found.is_empty() {
        return Err(Error::InvalidArgument(format!("no trace_*.csv files in {}", trace_dir.display())));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let series: Vec<(ControllerKind, &SimTrace)> = found.iter().map(|(k, t)| (*k, t)).collect();
    write_plots(&series, out_dir)
}

/// Timing of repeated runs of one controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub controller: ControllerKind,
    pub repeats: usize,
    /// Per-run aggregates.
    pub runs: Vec<TimingStats>,
    /// Wall time of each whole simulation, s.
    pub wall_s: Vec<f64>,
}

/// Timing-only sweep; nothing is written.
pub fn bench(cfg: &ExperimentConfig, designs: &Designs, repeats: usize) -> Result<Vec<BenchRow>> {
    let mut out = Vec::new();
    for &kind in &cfg.controllers {
        let mut row = BenchRow { controller: kind, repeats, runs: Vec::new(), wall_s: Vec::new() };
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            let trace = simulate_controller(kind, cfg, designs)?;
            row.wall_s.push(start.elapsed().as_secs_f64());
            row.runs.push(trace_timing(&trace));
        }
        out.push(row);
    }
    Ok(out)
}

/// Human-readable summary of the designs.
pub fn design_summary(designs: &Designs) -> String {
    let mut s = String::new();
    for axis in Axis::BOTH {
        let (d, _) = designs.axis(axis);
        s.push_str(&format!("{}-axis{}\n", axis.name(), if designs.cached[axis as usize] { " (cached)" } else { "" }));
        for (name, law, set, it) in [
            ("high", &d.high, &d.omega_high, d.iterations[2]),
            ("mid", &d.mid, &d.omega_mid, d.iterations[1]),
            ("low", &d.low, &d.omega_low, d.iterations[0]),
        ] {
            let k: Vec<String> = law.k.iter().map(|v| format!("{v:.6}")).collect();
            let rho = crate::polytope::spectral_radius(law.closed_loop());
            let bbox = set
                .bounding_box()
                .map(|(lo, hi)| {
                    let parts: Vec<String> =
                        lo.iter().zip(hi.iter()).map(|(l, h)| format!("[{l:.4}, {h:.4}]")).collect();
                    parts.join(" × ")
                })
                .unwrap_or_else(|_| "unbounded".into());
            s.push_str(&format!(
                "  {name:4}  K = [{}]  ρ = {rho:.6}  rows = {}  iterations = {it}  box = {bbox}\n",
                k.join(", "),
                set.num_rows()
            ));
        }
    }
    s
}

/// All three sets of both axes as CSV blocks.
pub fn design_sets_csv(designs: &Designs) -> String {
    let mut s = String::new();
    for axis in Axis::BOTH {
        let (d, dc) = designs.axis(axis);
        for (name, set) in [
            ("X", &dc.x_set),
            ("U", &dc.u_set),
            ("omega_low", &d.omega_low),
            ("omega_mid", &d.omega_mid),
            ("omega_high", &d.omega_high),
        ] {
            s.push_str(&super::output::polytope_block(&format!("{}/{name}", axis.name()), set));
            s.push('\n');
        }
    }
    s
}
