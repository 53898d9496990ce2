//! Static SVG plots. Layout and number formatting are fixed, so the same
//! traces always give the same bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tolcone_core::analysis::running_min;
use tolcone_core::surgery::explicit_direction;
use tolcone_core::{GradientPair, IterateTrace};

use crate::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    LossCurves,
    LambdaTrace,
    Stationarity,
    ParetoScatter,
    ConeDiagram,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [
        PlotKind::LossCurves,
        PlotKind::LambdaTrace,
        PlotKind::Stationarity,
        PlotKind::ParetoScatter,
        PlotKind::ConeDiagram,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlotKind::LossCurves => "loss-curves",
            PlotKind::LambdaTrace => "lambda-trace",
            PlotKind::Stationarity => "stationarity",
            PlotKind::ParetoScatter => "pareto-scatter",
            PlotKind::ConeDiagram => "cone-diagram",
        }
    }
}

impl FromStr for PlotKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BenchError::Input(format!("unknown plot kind `{s}`")))
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Line or scatter chart with labeled axes and a legend.
fn chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], scatter: bool) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 10.0,
        esc(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(ylabel)
    );
    for (i, se) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = se
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .copied()
            .collect();
        if scatter {
            for (x, y) in &pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                    sx(*x),
                    sy(*y)
                );
            }
        } else {
            let path: Vec<String> = pts
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        let ly = TOP + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="12" height="4" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + pw - 150.0,
            ly - 6.0,
            LEFT + pw - 132.0,
            ly,
            esc(se.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn check_nonempty(name: &str, t: &IterateTrace) -> Result<()> {
    if t.is_empty() {
        Err(BenchError::Input(format!("trace `{name}` has no steps")))
    } else {
        Ok(())
    }
}

fn steps(t: &IterateTrace, col: impl Fn(usize) -> Option<f64>) -> Vec<(f64, f64)> {
    (0..=t.len()).filter_map(|i| col(i).map(|v| (i as f64, v))).collect()
}

pub fn loss_curves(name: &str, t: &IterateTrace) -> Result<String> {
    check_nonempty(name, t)?;
    let (le, lp) = (t.erasure_losses(), t.preservation_losses());
    Ok(chart(
        &format!("{name}: losses ({})", t.solver),
        "step",
        "loss",
        &[
            Series {
                label: "L_e",
                points: steps(t, |i| Some(le[i])),
            },
            Series {
                label: "L_p",
                points: steps(t, |i| Some(lp[i])),
            },
        ],
        false,
    ))
}

pub fn lambda_trace(name: &str, t: &IterateTrace) -> Result<String> {
    check_nonempty(name, t)?;
    Ok(chart(
        &format!("{name}: dual weight ({})", t.solver),
        "step",
        "lambda",
        &[Series {
            label: "lambda",
            points: steps(t, |i| t.rows.get(i).map(|r| r.lambda)),
        }],
        false,
    ))
}

/// Stationarity and its running minimum on log10 scale.
pub fn stationarity(name: &str, t: &IterateTrace) -> Result<String> {
    check_nonempty(name, t)?;
    if !t.is_instrumented() {
        return Err(BenchError::Input(format!(
            "trace `{name}` has no stationarity column; rerun with instrumentation = \"full\""
        )));
    }
    let s: Vec<f64> = t.rows.iter().map(|r| r.stationarity.unwrap_or(f64::NAN)).collect();
    let m = running_min(&s);
    let log = |v: f64| if v > 0.0 { Some(v.log10()) } else { None };
    Ok(chart(
        &format!("{name}: Pareto stationarity ({})", t.solver),
        "step",
        "log10 stationarity",
        &[
            Series {
                label: "measure",
                points: steps(t, |i| s.get(i).copied().and_then(log)),
            },
            Series {
                label: "running min",
                points: steps(t, |i| m.get(i).copied().and_then(log)),
            },
        ],
        false,
    ))
}

/// One point per run at its final `(L_e, L_p)`.
pub fn pareto_scatter(traces: &[(String, IterateTrace)]) -> Result<String> {
    if traces.is_empty() {
        return Err(BenchError::Input("pareto scatter needs at least one trace".into()));
    }
    let series: Vec<Series> = traces
        .iter()
        .map(|(n, t)| Series {
            label: n,
            points: vec![(t.final_loss_e, t.final_loss_p)],
        })
        .collect();
    Ok(chart("final losses", "L_e", "L_p", &series, true))
}

/// Half-plane `{d : g·d ≥ c}` clipped to the square `[-r, r]²`.
fn clip_half_plane(g: [f64; 2], c: f64, r: f64) -> Vec<[f64; 2]> {
    let sq = [[-r, -r], [r, -r], [r, r], [-r, r]];
    let f = |p: [f64; 2]| g[0] * p[0] + g[1] * p[1] - c;
    let mut out = Vec::new();
    for i in 0..4 {
        let (a, b) = (sq[i], sq[(i + 1) % 4]);
        let (fa, fb) = (f(a), f(b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let s = fa / (fa - fb);
            out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
        }
    }
    out
}

/// One panel per tolerance: both gradients, the surgered direction, and
/// the shaded set `{d : ∇L_p·d ≥ −ε}` it is projected into.
pub fn cone_diagram(g_e: [f64; 2], g_p: [f64; 2], tolerances: &[f64]) -> Result<String> {
    if tolerances.is_empty() {
        return Err(BenchError::Input("cone diagram needs at least one tolerance".into()));
    }
    let grads = GradientPair::from_f64(&g_e, &g_p)?;
    let panel = 300.0;
    let width = panel * tolerances.len() as f64;
    let r = 2.0 * g_e.iter().chain(&g_p).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" viewBox="0 0 {width} {}" font-family="sans-serif" font-size="12">"#,
        panel + 40.0,
        panel + 40.0
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{}" fill="white"/>"#, panel + 40.0);
    for (k, &eps) in tolerances.iter().enumerate() {
        let ox = panel * k as f64;
        let half = (panel - 40.0) / 2.0;
        let (cx, cy) = (ox + panel / 2.0, 40.0 + panel / 2.0 - 20.0);
        let p = |v: [f64; 2]| (cx + v[0] / r * half, cy - v[1] / r * half);
        let d = explicit_direction(&grads, eps);
        let poly: Vec<String> = clip_half_plane(g_p, -eps, r)
            .into_iter()
            .map(|v| {
                let (x, y) = p(v);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="24" text-anchor="middle" font-size="14">tolerance {}: lambda = {}</text>"#,
            tick(eps),
            tick(d.weight())
        );
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#2ca02c" fill-opacity="0.12"/>"##,
            poly.join(" ")
        );
        let (ax0, _) = p([-r, 0.0]);
        let (ax1, _) = p([r, 0.0]);
        let (_, ay0) = p([0.0, -r]);
        let (_, ay1) = p([0.0, r]);
        let _ = writeln!(
            s,
            r##"<line x1="{ax0:.2}" y1="{cy:.2}" x2="{ax1:.2}" y2="{cy:.2}" stroke="#999"/><line x1="{cx:.2}" y1="{ay0:.2}" x2="{cx:.2}" y2="{ay1:.2}" stroke="#999"/>"##
        );
        for (v, color, label) in [
            (g_e, COLORS[0], "grad L_e"),
            (g_p, COLORS[1], "grad L_p"),
            ([d.direction[0], d.direction[1]], COLORS[2], "d*"),
        ] {
            let (x, y) = p(v);
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.2}" y1="{cy:.2}" x2="{x:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2.5"/><circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/><text x="{:.2}" y="{:.2}" fill="{color}">{label}</text>"#,
                x + 6.0,
                y - 6.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders `kind` for the named traces into `out_dir` and returns the
/// written files. Per-trace kinds write one file per trace.
pub fn plot(traces: &[(String, IterateTrace)], kind: PlotKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| BenchError::io(out_dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    match kind {
        PlotKind::ParetoScatter => files.push(("pareto-scatter.svg".into(), pareto_scatter(traces)?)),
        PlotKind::ConeDiagram => files.push((
            "cone-diagram.svg".into(),
            cone_diagram([1.0, 0.0], [-1.0, 1.0], &[0.0, 0.3])?,
        )),
        _ => {
            if traces.is_empty() {
                return Err(BenchError::Input(format!("{} needs at least one trace", kind.as_str())));
            }
            for (name, t) in traces {
                let svg = match kind {
                    PlotKind::LossCurves => loss_curves(name, t)?,
                    PlotKind::LambdaTrace => lambda_trace(name, t)?,
                    _ => stationarity(name, t)?,
                };
                files.push((format!("{name}-{}.svg", kind.as_str()), svg));
            }
        }
    }
    files
        .into_iter()
        .map(|(f, svg)| {
            let path = out_dir.join(f);
            std::fs::write(&path, svg).map_err(|e| BenchError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip() {
        for k in PlotKind::ALL {
            assert_eq!(k.as_str().parse::<PlotKind>().unwrap(), k);
        }
        assert!("heatmap".parse::<PlotKind>().is_err());
    }

    #[test]
    fn half_plane_clipping() {
        // x ≥ 0 keeps the right half of the square
        let poly = clip_half_plane([1.0, 0.0], 0.0, 1.0);
        let area: f64 = (0..poly.len())
            .map(|i| {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0;
        assert!((area.abs() - 2.0).abs() < 1e-12);
        assert!(clip_half_plane([1.0, 0.0], 5.0, 1.0).is_empty());
    }

    #[test]
    fn tick_labels() {
        assert_eq!(tick(0.0), "0");
        assert_eq!(tick(0.5), "0.5");
        assert_eq!(tick(12.0), "12");
        assert_eq!(tick(1e-5), "1.0e-5");
    }
}
