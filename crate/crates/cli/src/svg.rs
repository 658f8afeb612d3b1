//! Minimal static SVG charts for the diagnostic and profile outputs.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let widen = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        PAD + (v - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn y(&self, v: f64) -> f64 {
        H - PAD - (v - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn open(out: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (v, pos, anchor) in [
        (f.x0, (f.x(f.x0), H - PAD + 15.0), "middle"),
        (f.x1, (f.x(f.x1), H - PAD + 15.0), "middle"),
        (f.y0, (PAD - 5.0, f.y(f.y0)), "end"),
        (f.y1, (PAD - 5.0, f.y(f.y1)), "end"),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{}</text>"#,
            pos.0,
            pos.1,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Scatter of (mean, variance) points with the variance = mean line.
pub fn dispersion_scatter(points: &[(f64, f64)]) -> String {
    let max_x = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let max_y = points.iter().map(|p| p.1).fold(max_x, f64::max);
    let f = Frame::new(0.0, max_x, 0.0, max_y);
    let mut out = String::new();
    open(&mut out, "Per-series dispersion", "mean", "variance", &f);
    let _ = writeln!(
        out,
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="grey" stroke-dasharray="4"/>"#,
        f.x(0.0),
        f.y(0.0),
        f.x(max_x),
        f.y(max_x)
    );
    for &(m, v) in points {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}" fill-opacity="0.6"/>"#,
            f.x(m),
            f.y(v),
            PALETTE[0]
        );
    }
    out.push_str("</svg>\n");
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box plots (min, quartiles, max) of autocorrelations per lag.
pub fn acf_boxplots(acf_by_lag: &[Vec<f64>]) -> String {
    let f = Frame::new(0.5, acf_by_lag.len() as f64 + 0.5, -1.0, 1.0);
    let mut out = String::new();
    open(&mut out, "Autocorrelation by lag", "lag", "acf", &f);
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="grey" stroke-dasharray="4"/>"#,
        W - PAD,
        y = f.y(0.0)
    );
    let half = 0.3 * (f.x(1.0) - f.x(0.0));
    for (k, values) in acf_by_lag.iter().enumerate() {
        let mut v = values.clone();
        v.sort_by(f64::total_cmp);
        let cx = f.x((k + 1) as f64);
        let [lo, q1, med, q3, hi] = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| f.y(quantile(&v, q)));
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.1}" y1="{lo:.1}" x2="{cx:.1}" y2="{hi:.1}" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{q3:.1}" width="{:.1}" height="{:.1}" fill="{}" fill-opacity="0.4" stroke="black"/>"#,
            cx - half,
            2.0 * half,
            (q1 - q3).max(0.0),
            PALETTE[0]
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{med:.1}" x2="{:.1}" y2="{med:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - PAD + 15.0,
            k + 1
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One line per cluster of mean count against time.
pub fn profiles(curves: &[Vec<f64>]) -> String {
    let t_max = curves.iter().map(Vec::len).max().unwrap_or(1).max(1) as f64;
    let y_max = curves.iter().flatten().copied().fold(0.0, f64::max);
    let f = Frame::new(1.0, t_max, 0.0, y_max);
    let mut out = String::new();
    open(&mut out, "Cluster profiles", "time", "mean count", &f);
    for (g, curve) in curves.iter().enumerate() {
        let pts: Vec<String> = curve
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(t, &v)| format!("{:.1},{:.1}", f.x((t + 1) as f64), f.y(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            PALETTE[g % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{}">cluster {}</text>"#,
            W - PAD - 70.0,
            PAD + 15.0 * g as f64,
            PALETTE[g % PALETTE.len()],
            g + 1
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        for svg in [
            dispersion_scatter(&[(1.0, 2.0), (3.0, 3.5)]),
            acf_boxplots(&[vec![0.1, -0.2, 0.3], vec![0.0]]),
            profiles(&[vec![1.0, 2.0], vec![0.5, f64::NAN, 0.7]]),
            dispersion_scatter(&[]),
        ] {
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
            assert!(!svg.contains("NaN"));
        }
    }
}
