use std::io::Write;
use std::path::{Path, PathBuf};

use crate::controllers::{ControllerKind, Region};
use crate::error::{Error, Result};
use crate::plant::{flags, PlanarUavState, SimTrace, TraceRow, ALTITUDE_OFFSET};
use crate::polytope::Polytope;

use super::experiment::ExperimentReport;

/// Trace CSV header, in column order.
pub const TRACE_COLUMNS: [&str; 24] = [
    "t",
    "y",
    "dy",
    "z",
    "dz",
    "phi",
    "dphi",
    "ydd_cmd",
    "zdd_cmd",
    "phi_ref",
    "thrust",
    "tau",
    "c_star_y",
    "c_star_z",
    "region_y",
    "region_z",
    "solve_time_y",
    "solve_time_z",
    "flags",
    "ref_y",
    "ref_dy",
    "ref_z",
    "ref_dz",
    "altitude",
];

/// Columns holding wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 2] = ["solve_time_y", "solve_time_z"];

pub fn trace_file_name(kind: ControllerKind) -> String {
    format!("trace_{}.csv", kind.name())
}

/// Controller named by a trace file, if the name follows [`trace_file_name`].
pub fn kind_from_trace_file(path: &Path) -> Option<ControllerKind> {
    let name = path.file_name()?.to_str()?;
    ControllerKind::parse(name.strip_prefix("trace_")?.strip_suffix(".csv")?)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

pub fn write_trace_to<W: Write>(trace: &SimTrace, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    out.write_record(TRACE_COLUMNS).map_err(err)?;
    for r in &trace.rows {
        let s = &r.state;
        let rec = [
            num(r.t),
            num(s.y),
            num(s.dy),
            num(s.z),
            num(s.dz),
            num(s.phi),
            num(s.dphi),
            num(r.ydd_cmd),
            num(r.zdd_cmd),
            num(r.phi_ref),
            num(r.thrust),
            num(r.tau),
            opt(r.c_star_y),
            opt(r.c_star_z),
            r.region_y.map(|g| g.as_str().to_string()).unwrap_or_default(),
            r.region_z.map(|g| g.as_str().to_string()).unwrap_or_default(),
            num(r.solve_time_y),
            num(r.solve_time_z),
            r.flags.join(";"),
            num(r.reference[0]),
            num(r.reference[1]),
            num(r.reference[2]),
            num(r.reference[3]),
            num(r.altitude()),
        ];
        out.write_record(&rec).map_err(err)?;
    }
    out.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn write_trace(trace: &SimTrace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_to(trace, std::io::BufWriter::new(file))
}

/// Reads a trace written by [`write_trace`]; the period is taken from the
/// first two time stamps.
pub fn read_trace(path: &Path) -> Result<SimTrace> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(Error::Parse(format!("{}: unexpected trace header", path.display())));
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |col: &str| Error::Parse(format!("{}: row {}: bad value in column {col}", path.display(), line + 1));
        let f = |i: usize| -> Result<f64> { rec[i].parse::<f64>().map_err(|_| bad(TRACE_COLUMNS[i])) };
        let of = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        let region = |i: usize| -> Result<Option<Region>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                Region::parse(&rec[i]).map(Some).ok_or_else(|| bad(TRACE_COLUMNS[i]))
            }
        };
        let mut fl = Vec::new();
        for name in rec[18].split(';').filter(|s| !s.is_empty()) {
            fl.push(flags::intern(name).ok_or_else(|| bad("flags"))?);
        }
        let row = TraceRow {
            t: f(0)?,
            state: PlanarUavState { y: f(1)?, dy: f(2)?, z: f(3)?, dz: f(4)?, phi: f(5)?, dphi: f(6)? },
            ydd_cmd: f(7)?,
            zdd_cmd: f(8)?,
            phi_ref: f(9)?,
            thrust: f(10)?,
            tau: f(11)?,
            c_star_y: of(12)?,
            c_star_z: of(13)?,
            region_y: region(14)?,
            region_z: region(15)?,
            solve_time_y: f(16)?,
            solve_time_z: f(17)?,
            flags: fl,
            reference: [f(19)?, f(20)?, f(21)?, f(22)?],
        };
        if f(23)? != row.state.z + ALTITUDE_OFFSET {
            return Err(bad("altitude"));
        }
        rows.push(row);
    }
    let ts = if rows.len() >= 2 { rows[1].t - rows[0].t } else { 0.0 };
    Ok(SimTrace { ts, rows, aborted: None })
}

fn pct(v: Option<f64>) -> String {
    v.map(|p| format!("{p:+.2}")).unwrap_or_else(|| "-".into())
}

/// Writes `metrics.csv`, `timing.csv`, `report.md` and `report.json`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let err = |e: csv::Error| Error::Parse(e.to_string());
    let metrics = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&metrics).map_err(|e| csv_err(&metrics, e))?;
    w.write_record(["controller", "J", "J_pct", "ISE", "ISE_pct", "E", "E_pct", "steps", "status"]).map_err(err)?;
    for row in &report.controllers {
        let (j, i, e) = report.deltas(row);
        w.write_record([
            row.controller.name().to_string(),
            opt(row.j),
            opt(j),
            opt(row.ise),
            opt(i),
            opt(row.energy),
            opt(e),
            row.steps.to_string(),
            row.status(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&metrics, e))?;

    let timing = dir.join("timing.csv");
    let mut w = csv::Writer::from_path(&timing).map_err(|e| csv_err(&timing, e))?;
    w.write_record(["controller", "total_s", "total_pct", "mean_ms", "max_ms", "first_ms", "steady_mean_ms", "count"])
        .map_err(err)?;
    for row in &report.controllers {
        let t = &row.timing;
        w.write_record([
            row.controller.name().to_string(),
            num(t.total_s),
            opt(report.timing_delta(row)),
            num(t.mean_ms),
            num(t.max_ms),
            num(t.first_ms),
            num(t.steady_mean_ms),
            t.count.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&timing, e))?;

    let md = dir.join("report.md");
    std::fs::write(&md, render_markdown(report)).map_err(|e| Error::io(&md, e))?;
    let json = dir.join("report.json");
    let body = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&json, body).map_err(|e| Error::io(&json, e))?;
    Ok(vec![metrics, timing, md, json])
}

pub fn render_markdown(report: &ExperimentReport) -> String {
    let mut s = String::new();
    s.push_str("## Control quality\n\n| Controller | J | % | ISE | % | E | % |\n|---|---:|---:|---:|---:|---:|---:|\n");
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for row in &report.controllers {
        let (j, i, e) = report.deltas(row);
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            row.controller.name(),
            f(row.j),
            pct(j),
            f(row.ise),
            pct(i),
            f(row.energy),
            pct(e)
        ));
    }
    s.push_str(
        "\n## Time demands\n\n| Controller | total [s] | % | mean [ms] | max [ms] | first [ms] | steady mean [ms] | steps |\n|---|---:|---:|---:|---:|---:|---:|---:|\n",
    );
    for row in &report.controllers {
        let t = &row.timing;
        s.push_str(&format!(
            "| {} | {:.4} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {} |\n",
            row.controller.name(),
            t.total_s,
            pct(report.timing_delta(row)),
            t.mean_ms,
            t.max_ms,
            t.first_ms,
            t.steady_mean_ms,
            t.count
        ));
    }
    let notes: Vec<String> = report
        .controllers
        .iter()
        .filter(|r| r.error.is_some() || r.aborted.is_some() || !r.flags.is_empty())
        .map(|r| {
            let mut parts = Vec::new();
            if let Some(e) = &r.error {
                parts.push(format!("error: {e}"));
            }
            if let Some(a) = &r.aborted {
                parts.push(format!("aborted: {a}"));
            }
            if !r.flags.is_empty() {
                let fl: Vec<String> = r.flags.iter().map(|(k, v)| format!("{k} ×{v}")).collect();
                parts.push(format!("flags: {}", fl.join(", ")));
            }
            format!("- {}: {}\n", r.controller.name(), parts.join("; "))
        })
        .collect();
    if !notes.is_empty() {
        s.push_str("\n## Notes\n\n");
        for n in notes {
            s.push_str(&n);
        }
    }
    s
}

/// Halfspaces of a set as a CSV block headed by `# name`.
pub fn polytope_block(name: &str, p: &Polytope) -> String {
    let mut s = format!("# {name}\n");
    let cols: Vec<String> = (0..p.dim()).map(|j| format!("f{}", j + 1)).collect();
    s.push_str(&format!("{},g\n", cols.join(",")));
    for i in 0..p.num_rows() {
        let row: Vec<String> = p.f().row(i).iter().map(|v| num(*v)).collect();
        s.push_str(&format!("{},{}\n", row.join(","), num(p.g()[i])));
    }
    s
}
