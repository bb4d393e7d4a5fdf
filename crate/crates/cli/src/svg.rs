//! Plain-text SVG scatter and line plots on a fixed 640×640 canvas.

use std::fmt::Write;

pub const SIZE: f64 = 640.0;
const PAD: f64 = 48.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    /// Data range widened by 5% on each side; degenerate ranges get unit width.
    fn of<I: Iterator<Item = f64>>(values: I) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            return Self { lo: lo - 0.5, hi: hi + 0.5 };
        }
        let m = 0.05 * (hi - lo);
        Self { lo: lo - m, hi: hi + m }
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

struct Frame {
    x: Range,
    y: Range,
    left: f64,
    top: f64,
    size: f64,
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.x.map(x, self.left, self.left + self.size),
            self.y.map(y, self.top + self.size, self.top),
        )
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let (l, t, s) = (self.left, self.top, self.size);
        let _ = writeln!(
            out,
            r##"<rect x="{l:.1}" y="{t:.1}" width="{s:.1}" height="{s:.1}" fill="none" stroke="#444" stroke-width="1"/>"##
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{x_label}</text>"##,
            l + s / 2.0,
            t + s + 30.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{y_label}</text>"##,
            l - 32.0,
            t + s / 2.0,
            l - 32.0,
            t + s / 2.0
        );
        for (v, anchor, xx, yy) in [
            (self.x.lo, "start", l, t + s + 14.0),
            (self.x.hi, "end", l + s, t + s + 14.0),
        ] {
            let _ = writeln!(out, r##"<text x="{xx:.1}" y="{yy:.1}" font-size="10" text-anchor="{anchor}">{v:.3}</text>"##);
        }
        for (v, yy) in [(self.y.lo, t + s), (self.y.hi, t + 10.0)] {
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{yy:.1}" font-size="10" text-anchor="end">{v:.3}</text>"##,
                l - 4.0
            );
        }
    }
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn legend(out: &mut String, series: &[Series<'_>], x: f64, y: f64) {
    for (k, s) in series.iter().enumerate() {
        let yy = y + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r##"<circle cx="{x:.1}" cy="{:.1}" r="4" fill="{}"/><text x="{:.1}" y="{yy:.1}" font-size="11">{}</text>"##,
            yy - 4.0,
            s.color,
            x + 8.0,
            s.label
        );
    }
}

fn scatter_into(out: &mut String, series: &[Series<'_>], frame: &Frame, radius: f64) {
    for s in series {
        for &(x, y) in &s.points {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            let (cx, cy) = frame.px(x, y);
            let _ = writeln!(
                out,
                r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{radius}" fill="{}" fill-opacity="0.6"/>"##,
                s.color
            );
        }
    }
}

/// Scatter plot of 2D point sets. 1D data is drawn on the line `y = 0`.
pub fn scatter(title: &str, series: &[Series<'_>]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let frame = Frame {
        x: Range::of(all().map(|p| p.0)),
        y: Range::of(all().map(|p| p.1)),
        left: PAD,
        top: PAD,
        size: SIZE - 2.0 * PAD,
    };
    let mut out = header(SIZE, SIZE);
    let _ = writeln!(out, r##"<text x="{:.1}" y="24" font-size="14" text-anchor="middle">{title}</text>"##, SIZE / 2.0);
    frame.axes(&mut out, "x0", "x1");
    scatter_into(&mut out, series, &frame, 2.0);
    legend(&mut out, series, PAD + 8.0, PAD + 16.0);
    out.push_str("</svg>\n");
    out
}

/// Grid of square scatter panels sharing one axis range, one panel per entry.
pub fn scatter_grid(title: &str, panels: &[(String, Vec<Series<'_>>)], columns: usize) -> String {
    let all = || panels.iter().flat_map(|(_, s)| s.iter()).flat_map(|s| s.points.iter());
    let xr = Range::of(all().map(|p| p.0));
    let yr = Range::of(all().map(|p| p.1));
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns).max(1);
    let cell = SIZE / columns as f64;
    let mut out = header(SIZE, cell * rows as f64 + 32.0);
    let _ = writeln!(out, r##"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{title}</text>"##, SIZE / 2.0);
    for (k, (name, series)) in panels.iter().enumerate() {
        let (r, c) = (k / columns, k % columns);
        let frame = Frame {
            x: xr,
            y: yr,
            left: c as f64 * cell + 8.0,
            top: 32.0 + r as f64 * cell + 18.0,
            size: cell - 26.0,
        };
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{name}</text>"##,
            frame.left + frame.size / 2.0,
            frame.top - 4.0
        );
        let (l, t, s) = (frame.left, frame.top, frame.size);
        let _ = writeln!(
            out,
            r##"<rect x="{l:.1}" y="{t:.1}" width="{s:.1}" height="{s:.1}" fill="none" stroke="#444" stroke-width="1"/>"##
        );
        scatter_into(&mut out, series, &frame, 1.2);
    }
    out.push_str("</svg>\n");
    out
}

/// Line plot; with `log_y` values are plotted as `log10` and non-positive
/// points are dropped.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>], log_x: bool, log_y: bool) -> String {
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let keep = |p: &&(f64, f64)| (!log_x || p.0 > 0.0) && (!log_y || p.1 > 0.0);
    let all = || series.iter().flat_map(|s| s.points.iter()).filter(keep);
    let frame = Frame {
        x: Range::of(all().map(|p| tx(p.0))),
        y: Range::of(all().map(|p| ty(p.1))),
        left: PAD + 16.0,
        top: PAD,
        size: SIZE - 2.0 * PAD - 16.0,
    };
    let mut out = header(SIZE, SIZE);
    let _ = writeln!(out, r##"<text x="{:.1}" y="24" font-size="14" text-anchor="middle">{title}</text>"##, SIZE / 2.0);
    let xl = if log_x { format!("log10 {x_label}") } else { x_label.to_string() };
    let yl = if log_y { format!("log10 {y_label}") } else { y_label.to_string() };
    frame.axes(&mut out, &xl, &yl);
    for s in series {
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(keep)
            .map(|p| frame.px(tx(p.0), ty(p.1)))
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .collect();
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"##,
            path.join(" "),
            s.color
        );
        for (x, y) in &pts {
            let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{}"/>"##, s.color);
        }
    }
    legend(&mut out, series, frame.left + 8.0, frame.top + 16.0);
    out.push_str("</svg>\n");
    out
}

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
