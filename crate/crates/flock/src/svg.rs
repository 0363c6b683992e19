//! Minimal native SVG line charts: deterministic bytes, no external
//! renderer. Good enough for trajectory and metric plots and for golden
//! file comparisons.

use std::fmt::Write;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, color: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), color: color.into(), dashed: false, points }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    pub series: Vec<Series>,
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width: 720.0,
            height: 480.0,
            series: Vec::new(),
        }
    }

    pub fn push(&mut self, series: Series) {
        self.series.push(series);
    }

    fn data_bounds(&self) -> (f64, f64, f64, f64) {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    x_min = x_min.min(x);
                    x_max = x_max.max(x);
                    y_min = y_min.min(y);
                    y_max = y_max.max(y);
                }
            }
        }
        if !x_min.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x_min == x_max {
            x_min -= 0.5;
            x_max += 0.5;
        }
        if y_min == y_max {
            y_min -= 0.5;
            y_max += 0.5;
        }
        let x_pad = 0.04 * (x_max - x_min);
        let y_pad = 0.06 * (y_max - y_min);
        (x_min - x_pad, x_max + x_pad, y_min - y_pad, y_max + y_pad)
    }

    pub fn render(&self) -> String {
        const MARGIN_LEFT: f64 = 74.0;
        const MARGIN_RIGHT: f64 = 18.0;
        const MARGIN_TOP: f64 = 40.0;
        const MARGIN_BOTTOM: f64 = 52.0;
        let (x0, x1, y0, y1) = self.data_bounds();
        let plot_w = self.width - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = self.height - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;
        let fmt = |v: f64| -> String {
            let s = format!("{v:.4e}");
            // Compact tick labels for human-scale numbers.
            if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 10000.0) {
                format!("{v:.3}")
            } else {
                s
            }
        };

        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
            w = self.width,
            h = self.height
        );
        let _ = writeln!(
            out,
            "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>",
            w = self.width,
            h = self.height
        );
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{t}</text>",
            x = self.width / 2.0,
            t = escape(&self.title)
        );
        // Frame.
        let _ = writeln!(
            out,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>",
            x = MARGIN_LEFT,
            y = MARGIN_TOP,
            w = plot_w,
            h = plot_h
        );
        // Ticks and grid lines.
        const TICKS: usize = 5;
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let xp = sx(xv);
            let yp = sy(yv);
            let _ = writeln!(
                out,
                "<line x1=\"{xp}\" y1=\"{t}\" x2=\"{xp}\" y2=\"{b}\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>",
                t = MARGIN_TOP,
                b = MARGIN_TOP + plot_h
            );
            let _ = writeln!(
                out,
                "<line x1=\"{l}\" y1=\"{yp}\" x2=\"{r}\" y2=\"{yp}\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>",
                l = MARGIN_LEFT,
                r = MARGIN_LEFT + plot_w
            );
            let _ = writeln!(
                out,
                "<text x=\"{xp}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{v}</text>",
                y = MARGIN_TOP + plot_h + 16.0,
                v = fmt(xv)
            );
            let _ = writeln!(
                out,
                "<text x=\"{x}\" y=\"{yy}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v}</text>",
                x = MARGIN_LEFT - 6.0,
                yy = yp + 4.0,
                v = fmt(yv)
            );
        }
        // Axis labels.
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{t}</text>",
            x = MARGIN_LEFT + plot_w / 2.0,
            y = self.height - 14.0,
            t = escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"18\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {y})\">{t}</text>",
            y = MARGIN_TOP + plot_h / 2.0,
            t = escape(&self.y_label)
        );
        // Series.
        for s in &self.series {
            if s.points.is_empty() {
                continue;
            }
            let mut path = String::new();
            for &(x, y) in &s.points {
                if !x.is_finite() || !y.is_finite() {
                    continue;
                }
                let _ = write!(path, "{:.2},{:.2} ", sx(x), sy(y));
            }
            let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"1.5\"{dash} points=\"{p}\"/>",
                c = s.color,
                p = path.trim_end()
            );
        }
        // Legend.
        for (i, s) in self.series.iter().enumerate() {
            let y = MARGIN_TOP + 14.0 + 16.0 * i as f64;
            let x = MARGIN_LEFT + plot_w - 150.0;
            let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = writeln!(
                out,
                "<line x1=\"{x}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{c}\" stroke-width=\"1.5\"{dash}/>",
                x2 = x + 22.0,
                c = s.color
            );
            let _ = writeln!(
                out,
                "<text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\">{l}</text>",
                tx = x + 27.0,
                ty = y + 4.0,
                l = escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
