//! Minimal deterministic SVG charts.

use std::fmt::Write;

pub const PANEL_W: f64 = 560.0;
pub const PANEL_H: f64 = 340.0;
const FONT: &str = "DejaVu Sans, Arial, sans-serif";
const MARGIN_L: f64 = 120.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 40.0;

pub const PALETTE: [&str; 8] = ["#3b6ea5", "#e08a2e", "#4f9d69", "#c8553d", "#7d5ba6", "#8c6d46", "#d16ba5", "#5c5c5c"];

pub fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Fixed-precision number for coordinates.
fn n(v: f64) -> String {
    let v = if v.is_finite() { v } else { 0.0 };
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Short human label for axis ticks and annotations.
pub fn label(v: f64) -> String {
    if !v.is_finite() {
        return "NA".to_string();
    }
    let a = v.abs();
    if a >= 1e9 {
        format!("{:.1}B", v / 1e9)
    } else if a >= 1e6 {
        format!("{:.1}M", v / 1e6)
    } else if a >= 1e4 {
        format!("{:.1}K", v / 1e3)
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// A panel's body, drawn in a `PANEL_W` by `PANEL_H` box.
#[derive(Debug, Clone, Default)]
pub struct Canvas {
    body: String,
}

impl Canvas {
    pub fn new(title: &str) -> Self {
        let mut c = Canvas::default();
        c.rect(0.0, 0.0, PANEL_W, PANEL_H, "#ffffff", Some("#d0d0d0"));
        c.text(PANEL_W / 2.0, 22.0, title, 13.0, "middle", "#222222", true);
        c
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let (x, w) = if w < 0.0 { (x + w, -w) } else { (x, w) };
        let (y, h) = if h < 0.0 { (y + h, -h) } else { (y, h) };
        let stroke = stroke.map(|s| format!(" stroke=\"{s}\"")).unwrap_or_default();
        let _ = writeln!(
            self.body,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"{stroke}/>",
            n(x),
            n(y),
            n(w),
            n(h)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dashed: bool) {
        let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\"{dash}/>",
            n(x1),
            n(y1),
            n(x2),
            n(y2)
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                d.push(' ');
            }
            let _ = write!(d, "{},{}", n(*x), n(*y));
        }
        let _ = writeln!(
            self.body,
            "<polyline points=\"{d}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>"
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"/>", n(x), n(y), n(r));
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, size: f64, anchor: &str, fill: &str, bold: bool) {
        let weight = if bold { " font-weight=\"bold\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"{FONT}\" font-size=\"{}\" text-anchor=\"{anchor}\" fill=\"{fill}\"{weight}>{}</text>",
            n(x),
            n(y),
            n(size),
            esc(s)
        );
    }

    pub fn legend(&mut self, entries: &[(&str, &str)]) {
        let mut x = MARGIN_L;
        for (name, color) in entries {
            self.rect(x, PANEL_H - 16.0, 10.0, 10.0, color, None);
            self.text(x + 14.0, PANEL_H - 7.0, name, 10.0, "start", "#333333", false);
            x += 24.0 + 6.5 * name.len() as f64;
        }
    }

    /// Standalone SVG document.
    pub fn document(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{}</svg>\n",
            self.body,
            w = n(PANEL_W),
            h = n(PANEL_H)
        )
    }

    /// The panel as a translated group for a composite page.
    pub fn group(&self, x: f64, y: f64) -> String {
        format!("<g transform=\"translate({},{})\">\n{}</g>\n", n(x), n(y), self.body)
    }
}

/// Linear map from a data range onto pixels.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    pub fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if !(lo.is_finite() && hi.is_finite()) {
            (0.0, 1.0)
        } else if hi - lo <= 0.0 {
            (lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0))
        } else {
            (lo, hi)
        };
        Scale { d0: lo, d1: hi, p0, p1 }
    }

    pub fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }

    pub fn ticks(&self, count: usize) -> Vec<f64> {
        (0..=count)
            .map(|i| self.d0 + (self.d1 - self.d0) * i as f64 / count as f64)
            .collect()
    }
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn plot_area() -> (f64, f64, f64, f64) {
    (MARGIN_L, PANEL_W - MARGIN_R, MARGIN_T, PANEL_H - MARGIN_B)
}

fn axes(c: &mut Canvas, xs: &Scale, ys: &Scale, x_fmt: &dyn Fn(f64) -> String, y_fmt: &dyn Fn(f64) -> String) {
    let (x0, x1, y0, y1) = plot_area();
    c.line(x0, y1, x1, y1, "#888888", false);
    c.line(x0, y0, x0, y1, "#888888", false);
    for t in ys.ticks(4) {
        let y = ys.map(t);
        c.line(x0 - 3.0, y, x1, y, "#eeeeee", false);
        c.text(x0 - 6.0, y + 3.0, &y_fmt(t), 9.0, "end", "#555555", false);
    }
    for t in xs.ticks(4) {
        let x = xs.map(t);
        c.line(x, y1, x, y1 + 3.0, "#888888", false);
        c.text(x, y1 + 14.0, &x_fmt(t), 9.0, "middle", "#555555", false);
    }
}

/// Horizontal bars with value labels; a bar may start away from zero.
pub fn horizontal_bars(title: &str, rows: &[(String, f64, f64, String)], color_of: &dyn Fn(usize) -> String) -> Canvas {
    let mut c = Canvas::new(title);
    let (x0, x1, y0, y1) = plot_area();
    let (lo, hi) = extent(rows.iter().flat_map(|r| [r.1, r.2, 0.0]));
    let xs = Scale::new(lo, hi, x0, x1 - 40.0);
    let band = (y1 - y0) / rows.len().max(1) as f64;
    let size = (band * 0.6).clamp(6.0, 11.0);
    c.line(xs.map(0.0), y0, xs.map(0.0), y1, "#888888", false);
    for (i, (name, start, end, text)) in rows.iter().enumerate() {
        let y = y0 + band * i as f64;
        c.rect(xs.map(*start), y + band * 0.15, xs.map(*end) - xs.map(*start), band * 0.7, &color_of(i), None);
        c.text(x0 - 6.0, y + band * 0.5 + size * 0.35, name, size, "end", "#333333", false);
        c.text(xs.map(start.max(*end)) + 4.0, y + band * 0.5 + size * 0.35, text, size, "start", "#333333", false);
    }
    c
}

/// Pairs of horizontal bars per row, plus a text annotation.
pub fn paired_bars(title: &str, rows: &[(String, f64, f64, String)], names: (&str, &str)) -> Canvas {
    let mut c = Canvas::new(title);
    let (x0, x1, y0, y1) = plot_area();
    let (lo, hi) = extent(rows.iter().flat_map(|r| [r.1, r.2, 0.0]));
    let xs = Scale::new(lo, hi, x0, x1 - 70.0);
    let band = (y1 - y0 - 10.0) / rows.len().max(1) as f64;
    for (i, (name, a, b, note)) in rows.iter().enumerate() {
        let y = y0 + band * i as f64;
        c.rect(xs.map(0.0), y + band * 0.1, xs.map(*a) - xs.map(0.0), band * 0.38, PALETTE[0], None);
        c.rect(xs.map(0.0), y + band * 0.5, xs.map(*b) - xs.map(0.0), band * 0.38, PALETTE[1], None);
        c.text(x0 - 6.0, y + band * 0.55, name, 10.0, "end", "#333333", false);
        c.text(xs.map(a.max(*b)) + 4.0, y + band * 0.55, note, 10.0, "start", "#333333", false);
    }
    c.legend(&[(names.0, PALETTE[0]), (names.1, PALETTE[1])]);
    c
}

/// Point estimates with interval whiskers per row.
pub fn intervals(title: &str, rows: &[(String, f64, f64, f64, bool)], note: &str) -> Canvas {
    let mut c = Canvas::new(title);
    let (x0, x1, y0, y1) = plot_area();
    let (lo, hi) = extent(rows.iter().flat_map(|r| [r.1, r.2, r.3]));
    let xs = Scale::new(lo.min(0.0), hi, x0, x1 - 50.0);
    let band = (y1 - y0) / rows.len().max(1) as f64;
    for (i, (name, mean, l, u, flagged)) in rows.iter().enumerate() {
        let y = y0 + band * (i as f64 + 0.5);
        let color = if *flagged { PALETTE[3] } else { PALETTE[0] };
        c.line(xs.map(*l), y, xs.map(*u), y, color, *flagged);
        c.line(xs.map(*l), y - 4.0, xs.map(*l), y + 4.0, color, false);
        c.line(xs.map(*u), y - 4.0, xs.map(*u), y + 4.0, color, false);
        c.circle(xs.map(*mean), y, 3.5, color);
        c.text(x0 - 6.0, y + 3.0, name, 10.0, "end", "#333333", false);
        c.text(xs.map(*u) + 6.0, y + 3.0, &label(*mean), 9.0, "start", "#333333", false);
    }
    if !note.is_empty() {
        c.text(x0, PANEL_H - 8.0, note, 9.0, "start", "#666666", false);
    }
    c
}

/// 100% stacked horizontal bars (two parts, in percent).
pub fn stacked_percent(title: &str, rows: &[(String, f64)], names: (&str, &str)) -> Canvas {
    let mut c = Canvas::new(title);
    let (x0, x1, y0, y1) = plot_area();
    let xs = Scale::new(0.0, 100.0, x0, x1);
    let band = (y1 - y0 - 10.0) / rows.len().max(1) as f64;
    for (i, (name, first)) in rows.iter().enumerate() {
        let y = y0 + band * i as f64;
        let split = xs.map(*first);
        c.rect(x0, y + band * 0.15, split - x0, band * 0.7, PALETTE[0], None);
        c.rect(split, y + band * 0.15, x1 - split, band * 0.7, PALETTE[1], None);
        c.text(x0 - 6.0, y + band * 0.55, name, 10.0, "end", "#333333", false);
        c.text(x0 + 4.0, y + band * 0.55, &format!("{first:.1}%"), 9.0, "start", "#ffffff", false);
        c.text(x1 - 4.0, y + band * 0.55, &format!("{:.1}%", 100.0 - first), 9.0, "end", "#ffffff", false);
    }
    c.legend(&[(names.0, PALETTE[0]), (names.1, PALETTE[1])]);
    c
}

/// A named series of (x, y) points.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with optional highlighted points.
pub fn lines(
    title: &str,
    series: &[Series],
    markers: &[(f64, f64, usize)],
    x_fmt: &dyn Fn(f64) -> String,
    legend: bool,
) -> Canvas {
    let mut c = Canvas::new(title);
    let (x0, x1, y0, y1) = plot_area();
    let (xl, xh) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (yl, yh) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(markers.iter().map(|m| m.1)));
    let xs = Scale::new(xl, xh, x0, x1);
    let ys = Scale::new(yl.min(0.0), yh, y1, y0);
    axes(&mut c, &xs, &ys, x_fmt, &label);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s.points.iter().map(|(x, y)| (xs.map(*x), ys.map(*y))).collect();
        c.polyline(&pts, PALETTE[i % PALETTE.len()]);
    }
    for (x, y, i) in markers {
        c.circle(xs.map(*x), ys.map(*y), 4.0, PALETTE[i % PALETTE.len()]);
    }
    if legend {
        let entries: Vec<(&str, &str)> = series.iter().enumerate().map(|(i, s)| (s.name, PALETTE[i % PALETTE.len()])).collect();
        c.legend(&entries);
    }
    c
}

/// Scatter with a horizontal reference line at zero.
pub fn scatter(title: &str, points: &[(f64, f64)]) -> Canvas {
    let mut c = Canvas::new(title);
    let (x0, x1, y0, y1) = plot_area();
    let (xl, xh) = extent(points.iter().map(|p| p.0));
    let (yl, yh) = extent(points.iter().map(|p| p.1).chain([0.0]));
    let xs = Scale::new(xl, xh, x0, x1);
    let ys = Scale::new(yl, yh, y1, y0);
    axes(&mut c, &xs, &ys, &label, &label);
    c.line(x0, ys.map(0.0), x1, ys.map(0.0), "#888888", true);
    for (x, y) in points {
        c.circle(xs.map(*x), ys.map(*y), 2.2, PALETTE[0]);
    }
    c
}

/// Several panels on one page under a header.
pub fn page(header: &[String], panels: &[&Canvas], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns);
    let head = 24.0 + 18.0 * header.len() as f64;
    let w = PANEL_W * columns as f64 + 10.0 * (columns as f64 + 1.0);
    let h = head + (PANEL_H + 10.0) * rows as f64 + 10.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
        w = n(w),
        h = n(h)
    );
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#f7f7f7\"/>", n(w), n(h));
    for (i, line) in header.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"10.00\" y=\"{}\" font-family=\"{FONT}\" font-size=\"14.00\" text-anchor=\"start\" fill=\"#222222\">{}</text>",
            n(22.0 + 18.0 * i as f64),
            esc(line)
        );
    }
    for (i, p) in panels.iter().enumerate() {
        let col = i % columns;
        let row = i / columns;
        out.push_str(&p.group(10.0 + (PANEL_W + 10.0) * col as f64, head + (PANEL_H + 10.0) * row as f64));
    }
    out.push_str("</svg>\n");
    out
}
