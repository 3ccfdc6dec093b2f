//! Four-panel SVG line chart of a charging trajectory: current, SOC, terminal
//! voltage, RC-pair voltage. Output depends only on the input numbers, so two
//! runs on the same trajectory produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use monoride::dynamics::{ecm_voltage, EcmParams};
use monoride::simulate::Trajectory;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 720.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 46.0;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("trajectory: {0}")]
    Trajectory(#[from] monoride::Error),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What to draw beyond the raw trajectory columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelSpec {
    /// Needed for the voltage panel and to locate the RC states.
    pub ecm: Option<EcmParams>,
    /// Dashed reference lines.
    pub current_limit: Option<f64>,
    pub soc_limit: Option<f64>,
    pub voltage_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub unit: String,
    /// `None` draws an empty frame with a note.
    pub values: Option<Vec<f64>>,
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub times: Vec<f64>,
    pub panels: Vec<Panel>,
}

/// Builds the four standard panels from a trajectory.
pub fn four_panels(traj: &Trajectory, spec: &PanelSpec) -> Result<Chart, ChartError> {
    traj.validate()?;
    let current = traj.input_series(0);
    let soc = traj.state_series(0);
    let n = traj.n_states();
    let voltage = match &spec.ecm {
        Some(p) => Some(
            traj.states
                .iter()
                .zip(&current)
                .map(|(x, u)| ecm_voltage(p, x, *u))
                .collect::<monoride::Result<Vec<f64>>>()?,
        ),
        None => None,
    };
    let rc_states = match &spec.ecm {
        Some(p) => 1..p.n_states().min(n),
        None => 1..n.min(2),
    };
    let rc = (!rc_states.is_empty()).then(|| {
        traj.states
            .iter()
            .map(|x| x[rc_states.clone()].iter().sum())
            .collect::<Vec<f64>>()
    });
    Ok(Chart {
        times: traj.times.clone(),
        panels: vec![
            Panel {
                title: "(a) Charging current".into(),
                unit: "A".into(),
                values: Some(current),
                limit: spec.current_limit,
            },
            Panel {
                title: "(b) State of charge".into(),
                unit: "-".into(),
                values: Some(soc),
                limit: spec.soc_limit,
            },
            Panel {
                title: "(c) Terminal voltage".into(),
                unit: "V".into(),
                values: voltage,
                limit: spec.voltage_limit,
            },
            Panel {
                title: "(d) RC pair voltage".into(),
                unit: "V".into(),
                values: rc,
                limit: None,
            },
        ],
    })
}

/// Reads a trajectory CSV and writes the four-panel chart to `out`.
pub fn emit_chart(traj_csv: &Path, spec: &PanelSpec, out: &Path) -> Result<(), ChartError> {
    let file = fs::File::open(traj_csv).map_err(|source| ChartError::Read {
        path: traj_csv.display().to_string(),
        source,
    })?;
    let traj = Trajectory::from_csv_reader(file)?;
    let svg = render_svg(&four_panels(&traj, spec)?);
    fs::write(out, svg).map_err(|source| ChartError::Write {
        path: out.display().to_string(),
        source,
    })
}

/// Renders panels on a 2-column grid.
pub fn render_svg(chart: &Chart) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let cols = 2usize;
    let rows = chart.panels.len().div_ceil(cols).max(1);
    let cell_w = WIDTH / cols as f64;
    let cell_h = HEIGHT / rows as f64;
    let (t_lo, t_hi) = padded_range(chart.times.iter().copied());
    for (k, panel) in chart.panels.iter().enumerate() {
        let x0 = (k % cols) as f64 * cell_w;
        let y0 = (k / cols) as f64 * cell_h;
        draw_panel(
            &mut s,
            panel,
            &chart.times,
            (t_lo, t_hi),
            x0,
            y0,
            cell_w,
            cell_h,
        );
    }
    s.push_str("</svg>\n");
    s
}

#[allow(clippy::too_many_arguments)]
fn draw_panel(
    s: &mut String,
    panel: &Panel,
    times: &[f64],
    t_range: (f64, f64),
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
) {
    let left = x0 + MARGIN_LEFT;
    let right = x0 + w - MARGIN_RIGHT;
    let top = y0 + MARGIN_TOP;
    let bottom = y0 + h - MARGIN_BOTTOM;
    let _ = writeln!(s, "<g>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" font-weight="bold">{}</text>"#,
        fmt2(left),
        fmt2(y0 + 22.0),
        escape(&panel.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="1"/>"#,
        fmt2(left),
        fmt2(top),
        fmt2(right - left),
        fmt2(bottom - top)
    );
    let (t_lo, t_hi) = t_range;
    let tx = |t: f64| left + (t - t_lo) / (t_hi - t_lo) * (right - left);
    for t in ticks(t_lo, t_hi) {
        let x = tx(t.0);
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{b}" x2="{x}" y2="{t}" stroke="#dddddd" stroke-width="0.5"/>"##,
            x = fmt2(x),
            b = fmt2(bottom),
            t = fmt2(top)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt2(x),
            fmt2(bottom + 14.0),
            t.1
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">time [s]</text>"#,
        fmt2(0.5 * (left + right)),
        fmt2(bottom + 32.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" text-anchor="middle" transform="rotate(-90 {x} {y})">[{u}]</text>"#,
        x = fmt2(x0 + 16.0),
        y = fmt2(0.5 * (top + bottom)),
        u = escape(&panel.unit)
    );
    let Some(values) = &panel.values else {
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" text-anchor="middle" fill="#888888">not available for this model</text>"##,
            fmt2(0.5 * (left + right)),
            fmt2(0.5 * (top + bottom))
        );
        let _ = writeln!(s, "</g>");
        return;
    };
    let (v_lo, v_hi) = padded_range(values.iter().copied().chain(panel.limit));
    let vy = |v: f64| bottom - (v - v_lo) / (v_hi - v_lo) * (bottom - top);
    for v in ticks(v_lo, v_hi) {
        let y = vy(v.0);
        let _ = writeln!(
            s,
            r##"<line x1="{l}" y1="{y}" x2="{r}" y2="{y}" stroke="#dddddd" stroke-width="0.5"/>"##,
            l = fmt2(left),
            r = fmt2(right),
            y = fmt2(y)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            fmt2(left - 4.0),
            fmt2(y + 4.0),
            v.1
        );
    }
    if let Some(lim) = panel.limit {
        let y = fmt2(vy(lim));
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#cc3333" stroke-width="1" stroke-dasharray="6 4"/>"##,
            fmt2(left),
            fmt2(right)
        );
    }
    let mut pts = String::new();
    for (t, v) in times.iter().zip(values) {
        if !pts.is_empty() {
            pts.push(' ');
        }
        let _ = write!(pts, "{},{}", fmt2(tx(*t)), fmt2(vy(*v)));
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>"##
    );
    let _ = writeln!(s, "</g>");
}

/// Data range widened so that flat or single-point series still get a frame.
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 1e-12 * (1.0 + lo.abs()) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// Round-number ticks inside `[lo, hi]` with their labels.
fn ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).clamp(0.0, 8.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let v = k as f64 * step;
            let mut label = format!("{v:.decimals$}");
            if label.starts_with('-') && label[1..].chars().all(|c| c == '0' || c == '.') {
                label.remove(0);
            }
            (v, label)
        })
        .collect()
}

fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Trajectory {
        Trajectory {
            times: vec![0.0, 1.0, 2.0],
            states: vec![vec![0.0, 0.0], vec![0.1, 0.01], vec![0.2, 0.015]],
            inputs: vec![vec![2.0], vec![2.0], vec![1.0]],
        }
    }

    #[test]
    fn renders_four_panels() {
        let svg = render_svg(&four_panels(&tiny(), &PanelSpec::default()).unwrap());
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("not available"));
        assert!(svg.contains("(d) RC pair voltage"));
    }

    #[test]
    fn voltage_panel_with_ecm() {
        let spec = PanelSpec {
            ecm: Some(EcmParams::default()),
            voltage_limit: Some(4.5),
            ..PanelSpec::default()
        };
        let chart = four_panels(&tiny(), &spec).unwrap();
        let v = chart.panels[2].values.as_ref().unwrap();
        assert!((v[0] - (3.0 + 0.03 * 2.0)).abs() < 1e-12);
        let svg = render_svg(&chart);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn identical_input_identical_bytes() {
        let spec = PanelSpec {
            ecm: Some(EcmParams::default()),
            ..PanelSpec::default()
        };
        let a = render_svg(&four_panels(&tiny(), &spec).unwrap());
        let b = render_svg(&four_panels(&tiny(), &spec).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn single_point_is_flat() {
        let tr = Trajectory {
            times: vec![0.0],
            states: vec![vec![0.5, 0.0]],
            inputs: vec![vec![1.0]],
        };
        let svg = render_svg(&four_panels(&tr, &PanelSpec::default()).unwrap());
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }

    #[test]
    fn empty_trajectory_rejected() {
        let tr = Trajectory {
            times: vec![],
            states: vec![],
            inputs: vec![],
        };
        assert!(four_panels(&tr, &PanelSpec::default()).is_err());
    }

    #[test]
    fn tick_labels_are_round() {
        let t = ticks(0.0, 600.0);
        assert_eq!(t.first().unwrap().1, "0");
        assert_eq!(t.last().unwrap().1, "600");
        let t = ticks(-0.05, 0.3);
        assert!(t.iter().any(|(_, l)| l == "0.0"));
        assert!(t.iter().all(|(_, l)| !l.starts_with("-0.0") || l.len() > 4));
    }
}
