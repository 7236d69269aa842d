use std::fmt::Write;

use crate::controllers::ControllerKind;
use crate::plant::{SimTrace, ALTITUDE_OFFSET};

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;
/// Floor for log-scale times, ms.
const TIME_FLOOR_MS: f64 = 1e-4;

fn color(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Mpc => "#1f77b4",
        ControllerKind::Mpcmb => "#ff7f0e",
        ControllerKind::Eic => "#2ca02c",
        ControllerKind::Ic => "#d62728",
        ControllerKind::Lqr => "#9467bd",
    }
}

/// Series in a fixed controller order so output does not depend on how the
/// traces were listed.
fn ordered<'a>(series: &[(ControllerKind, &'a SimTrace)]) -> Vec<(ControllerKind, &'a SimTrace)> {
    let mut v = series.to_vec();
    v.sort_by_key(|(k, _)| ControllerKind::ALL.iter().position(|a| a == k));
    v
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

#[derive(Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn from_values(vals: impl Iterator<Item = f64>) -> Range {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-9 {
            return Range { lo: lo - 0.5, hi: hi + 0.5 };
        }
        let pad = 0.05 * (hi - lo);
        Range { lo: lo - pad, hi: hi + pad }
    }

    fn ticks(&self) -> Vec<f64> {
        let step = nice_step(self.hi - self.lo, 6);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-12 * step {
            out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
            t += step;
        }
        out
    }
}

struct Frame {
    x: Range,
    y: Range,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.lo) / (self.x.hi - self.x.lo) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.lo) / (self.y.hi - self.y.lo) * (H - TOP - BOTTOM)
    }
}

fn header(s: &mut String, title: &str) {
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        (LEFT + W - RIGHT) / 2.0
    );
}

fn axes(s: &mut String, fr: &Frame, xticks: &[(f64, String)], yticks: &[(f64, String)], xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        s,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y1 - y0
    );
    for (v, label) in xticks {
        let x = fr.px(*v);
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{y0}\" x2=\"{x:.2}\" y2=\"{y1}\" stroke=\"#dddddd\"/>");
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{label}</text>", y1 + 16.0);
    }
    for (v, label) in yticks {
        let y = fr.py(*v);
        let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y:.2}\" x2=\"{x1}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>");
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>", x0 - 6.0, y + 4.0);
    }
    let _ =
        writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{xlabel}</text>", (x0 + x1) / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{ylabel}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

fn polyline(s: &mut String, pts: &[(f64, f64)], stroke: &str, dashed: bool) {
    if pts.is_empty() {
        return;
    }
    let mut d = String::with_capacity(pts.len() * 16);
    for (i, (x, y)) in pts.iter().enumerate() {
        if i > 0 {
            d.push(' ');
        }
        let _ = write!(d, "{x:.2},{y:.2}");
    }
    let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
    let _ = writeln!(s, "<polyline points=\"{d}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash}/>");
}

fn legend(s: &mut String, entries: &[(String, &str, bool)]) {
    for (i, (name, stroke, dashed)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + 20.0 * i as f64;
        let x = W - RIGHT + 14.0;
        let dash = if *dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            s,
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{:.2}\" y2=\"{y}\" stroke=\"{stroke}\" stroke-width=\"2\"{dash}/>",
            x + 28.0
        );
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\">{name}</text>", x + 34.0, y + 4.0);
    }
}

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Flown paths in the `(y, altitude)` plane together with the reference.
pub fn path_svg(series: &[(ControllerKind, &SimTrace)]) -> String {
    let series = ordered(series);
    let reference: Vec<(f64, f64)> = series
        .first()
        .map(|(_, t)| t.rows.iter().map(|r| (r.reference[0], r.reference[2] + ALTITUDE_OFFSET)).collect())
        .unwrap_or_default();
    let all = || {
        series
            .iter()
            .flat_map(|(_, t)| t.rows.iter().map(|r| (r.state.y, r.altitude())))
            .chain(reference.iter().copied())
    };
    let fr = Frame { x: Range::from_values(all().map(|p| p.0)), y: Range::from_values(all().map(|p| p.1)) };
    let mut s = String::new();
    header(&mut s, "Path in the y–z plane");
    let xt: Vec<(f64, String)> = fr.x.ticks().into_iter().map(|v| (v, label(v))).collect();
    let yt: Vec<(f64, String)> = fr.y.ticks().into_iter().map(|v| (v, label(v))).collect();
    axes(&mut s, &fr, &xt, &yt, "y [m]", "altitude [m]");
    let mut entries = vec![("reference".to_string(), "#000000", true)];
    let pts: Vec<(f64, f64)> = reference.iter().map(|&(x, y)| (fr.px(x), fr.py(y))).collect();
    polyline(&mut s, &pts, "#000000", true);
    for (kind, t) in &series {
        let pts: Vec<(f64, f64)> = t.rows.iter().map(|r| (fr.px(r.state.y), fr.py(r.altitude()))).collect();
        polyline(&mut s, &pts, color(*kind), false);
        entries.push((kind.name().to_string(), color(*kind), false));
    }
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

/// Per-step compute time of both axes on a logarithmic scale.
pub fn time_svg(series: &[(ControllerKind, &SimTrace)]) -> String {
    let series = ordered(series);
    let ms = |r: &crate::plant::TraceRow| ((r.solve_time_y + r.solve_time_z) * 1e3).max(TIME_FLOOR_MS);
    let t_range = Range::from_values(series.iter().flat_map(|(_, t)| t.rows.iter().map(|r| r.t)));
    let logs: Vec<f64> = series.iter().flat_map(|(_, t)| t.rows.iter().map(|r| ms(r).log10())).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo.floor(), hi.ceil().max(lo.floor() + 1.0)) } else { (-1.0, 1.0) };
    let fr = Frame { x: Range { lo: 0.0f64.min(t_range.lo), hi: t_range.hi }, y: Range { lo, hi } };
    let mut s = String::new();
    header(&mut s, "Controller computation time per step");
    let xt: Vec<(f64, String)> = fr.x.ticks().into_iter().map(|v| (v, label(v))).collect();
    let yt: Vec<(f64, String)> = (lo as i32..=hi as i32).map(|e| (e as f64, format!("1e{e}"))).collect();
    axes(&mut s, &fr, &xt, &yt, "t [s]", "computation time [ms]");
    let mut entries = Vec::new();
    for (kind, t) in &series {
        let pts: Vec<(f64, f64)> = t.rows.iter().map(|r| (fr.px(r.t), fr.py(ms(r).log10()))).collect();
        polyline(&mut s, &pts, color(*kind), false);
        entries.push((kind.name().to_string(), color(*kind), false));
    }
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}
