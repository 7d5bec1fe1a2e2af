//! Deterministic SVG plotting primitives.
//!
//! Fixed canvas, fixed-precision coordinates and stable iteration order:
//! identical input produces byte-identical output.

use crate::error::{AuditError, Result};

/// 10-step sequential ramp, light (low) to dark (high).
pub const RAMP10: [&str; 10] = [
    "#ffffcc", "#ffeda0", "#fed976", "#feb24c", "#fd8d3c", "#fc4e2a", "#e31a1c", "#bd0026",
    "#800026", "#4d0019",
];

/// Categorical palette for tag-colored plots.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;

/// A scatter plot request: points carry a color-class index into `legend`.
pub struct ScatterSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    /// (x, y, color class).
    pub points: &'a [(f64, f64, usize)],
    /// (color class, swatch color, label), rendered top to bottom.
    pub legend: &'a [(usize, &'a str, String)],
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Evenly spaced "nice" tick positions (1/2/5 steps) covering [min, max].
pub fn nice_ticks(min: f64, max: f64, target: usize) -> Vec<f64> {
    if !(max > min) {
        return vec![min];
    }
    let raw_step = (max - min) / target.max(1) as f64;
    let magnitude = 10f64.powf(raw_step.log10().floor());
    let normalized = raw_step / magnitude;
    let step = if normalized <= 1.0 {
        1.0
    } else if normalized <= 2.0 {
        2.0
    } else if normalized <= 5.0 {
        5.0
    } else {
        10.0
    } * magnitude;
    let start = (min / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= max + step * 1e-9 {
        // Avoid "-0.00" labels.
        ticks.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    ticks
}

struct Range {
    min: f64,
    max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if min == max {
            min -= 0.5;
            max += 0.5;
        }
        let pad = (max - min) * 0.05;
        Range { min: min - pad, max: max + pad }
    }

    fn to_px(&self, v: f64, px_min: f64, px_max: f64) -> f64 {
        px_min + (v - self.min) / (self.max - self.min) * (px_max - px_min)
    }
}

/// Render a scatter plot; errors on an empty point set.
pub fn render_scatter(spec: &ScatterSpec) -> Result<String> {
    if spec.points.is_empty() {
        return Err(AuditError::input("cannot plot an empty point set"));
    }
    let xr = Range::of(spec.points.iter().map(|p| p.0));
    let yr = Range::of(spec.points.iter().map(|p| p.1));
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

    let mut svg = String::with_capacity(4096 + spec.points.len() * 64);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        fmt((x0 + x1) / 2.0),
        esc(spec.title)
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(x0),
        fmt(y0),
        fmt(x1),
        fmt(y0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(x0),
        fmt(y0),
        fmt(x0),
        fmt(y1)
    ));

    for t in nice_ticks(xr.min, xr.max, 6) {
        let px = xr.to_px(t, x0, x1);
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(px),
            fmt(y0),
            fmt(y0 + 4.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            fmt(px),
            fmt(y0 + 16.0),
            fmt(t)
        ));
    }
    for t in nice_ticks(yr.min, yr.max, 6) {
        let py = yr.to_px(t, y0, y1);
        svg.push_str(&format!(
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"black\"/>\n",
            fmt(py),
            fmt(x0 - 4.0),
            fmt(x0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            fmt(x0 - 7.0),
            fmt(py + 3.0),
            fmt(t)
        ));
    }

    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        fmt((x0 + x1) / 2.0),
        fmt(HEIGHT - 10.0),
        esc(spec.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
        fmt((y0 + y1) / 2.0),
        esc(spec.y_label)
    ));

    // Points.
    for &(x, y, class) in spec.points {
        let color = spec
            .legend
            .iter()
            .find(|(c, _, _)| *c == class)
            .map(|(_, color, _)| *color)
            .unwrap_or("#333333");
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\"/>\n",
            fmt(xr.to_px(x, x0, x1)),
            fmt(yr.to_px(y, y0, y1)),
            color
        ));
    }

    // Legend.
    let lx = WIDTH - MARGIN_RIGHT + 14.0;
    for (i, (_, color, label)) in spec.legend.iter().enumerate() {
        let ly = MARGIN_TOP + 8.0 + i as f64 * 18.0;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\" class=\"legend-swatch\"/>\n",
            fmt(lx),
            fmt(ly),
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            fmt(lx + 17.0),
            fmt(ly + 10.0),
            esc(label)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}
