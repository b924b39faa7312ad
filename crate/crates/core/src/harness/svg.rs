//! Minimal SVG line plots: stacked panels with autoscaled axes.

use std::fmt::Write;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn solid(label: &str, color: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            color: color.into(),
            dashed: false,
            points,
        }
    }

    pub fn dashed(label: &str, color: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            dashed: true,
            ..Self::solid(label, color, points)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub equal_aspect: bool,
    /// Fixed vertical extent; curves are clipped to it.
    pub y_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct SvgDoc {
    pub title: String,
    pub panels: Vec<Panel>,
}

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const HEADER: f64 = 30.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(panel: &Panel) -> ([f64; 2], [f64; 2]) {
    let (mut x, mut y) = ([f64::INFINITY, f64::NEG_INFINITY], [f64::INFINITY, f64::NEG_INFINITY]);
    for (px, py) in panel.series.iter().flat_map(|s| s.points.iter()) {
        if px.is_finite() && py.is_finite() {
            x = [x[0].min(*px), x[1].max(*px)];
            y = [y[0].min(*py), y[1].max(*py)];
        }
    }
    let widen = |r: [f64; 2]| {
        if !r[0].is_finite() {
            [0.0, 1.0]
        } else if r[1] - r[0] < 1e-12 {
            let d = r[0].abs().max(1.0) * 0.05;
            [r[0] - d, r[1] + d]
        } else {
            let d = 0.05 * (r[1] - r[0]);
            [r[0] - d, r[1] + d]
        }
    };
    let (mut x, mut y) = (widen(x), panel.y_range.unwrap_or_else(|| widen(y)));
    if panel.equal_aspect {
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = PANEL_H - MARGIN_T - MARGIN_B;
        let scale = ((x[1] - x[0]) / pw).max((y[1] - y[0]) / ph);
        let (cx, cy) = (0.5 * (x[0] + x[1]), 0.5 * (y[0] + y[1]));
        x = [cx - 0.5 * scale * pw, cx + 0.5 * scale * pw];
        y = [cy - 0.5 * scale * ph, cy + 0.5 * scale * ph];
    }
    (x, y)
}

fn ticks(r: [f64; 2]) -> Vec<f64> {
    let raw = (r[1] - r[0]) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|k| k * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (r[0] / step).ceil() * step;
    let mut out = Vec::new();
    while t <= r[1] + 1e-9 * step && out.len() < 20 {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

impl SvgDoc {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            panels: Vec::new(),
        }
    }

    pub fn push(&mut self, panel: Panel) {
        self.panels.push(panel);
    }

    pub fn render(&self) -> String {
        let height = HEADER + PANEL_H * self.panels.len().max(1) as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for (k, panel) in self.panels.iter().enumerate() {
            self.render_panel(&mut s, k, panel, HEADER + PANEL_H * k as f64);
        }
        s.push_str("</svg>\n");
        s
    }

    fn render_panel(&self, s: &mut String, k: usize, panel: &Panel, top: f64) {
        let (xr, yr) = bounds(panel);
        let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
        let (y0, y1) = (top + MARGIN_T, top + PANEL_H - MARGIN_B);
        let sx = |x: f64| x0 + (x - xr[0]) / (xr[1] - xr[0]) * (x1 - x0);
        let sy = |y: f64| y1 - (y - yr[0]) / (yr[1] - yr[0]) * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<clipPath id="panel{k}"><rect x="{x0}" y="{y0}" width="{}" height="{}"/></clipPath>"#,
            x1 - x0,
            y1 - y0
        );
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            0.5 * (x0 + x1),
            y0 - 8.0,
            escape(&panel.title)
        );
        for t in ticks(xr) {
            let (px, label) = (sx(t), format_tick(t));
            let _ = writeln!(
                s,
                r##"<line x1="{px:.1}" y1="{y1}" x2="{px:.1}" y2="{y0}" stroke="#e0e0e0"/><text x="{px:.1}" y="{}" text-anchor="middle">{label}</text>"##,
                y1 + 14.0
            );
        }
        for t in ticks(yr) {
            let py = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x0}" y1="{py:.1}" x2="{x1}" y2="{py:.1}" stroke="#e0e0e0"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                py + 4.0,
                format_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            0.5 * (x0 + x1),
            y1 + 30.0,
            escape(&panel.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
            0.5 * (y0 + y1),
            escape(&panel.y_label)
        );
        let mut legend = 0;
        for series in &panel.series {
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let dash = if series.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<polyline clip-path="url(#panel{k})" fill="none" stroke="{}" stroke-width="1.2"{dash} points="{}"/>"#,
                series.color,
                pts.join(" ")
            );
            if !series.label.is_empty() {
                let ly = y0 + 12.0 + 16.0 * legend as f64;
                let _ = writeln!(
                    s,
                    r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}"{dash}/><text x="{}" y="{}">{}</text>"#,
                    x1 + 10.0,
                    x1 + 34.0,
                    series.color,
                    x1 + 40.0,
                    ly + 4.0,
                    escape(&series.label)
                );
                legend += 1;
            }
        }
    }
}

fn format_tick(t: f64) -> String {
    if t != 0.0 && (t.abs() >= 1e4 || t.abs() < 1e-3) {
        format!("{t:.1e}")
    } else {
        format!("{}", (t * 1e6).round() / 1e6)
    }
}
