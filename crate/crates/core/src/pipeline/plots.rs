//! Minimal standalone SVG charts.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Roughly `n` round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x: (f64, f64),
    y: (f64, f64),
    svg: String,
}

impl Frame {
    fn new(title: &str, left: f64, x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let mut svg = String::new();
        let _ = write!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = write!(
            svg,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Self { left, right: WIDTH - 20.0, top: 35.0, bottom: HEIGHT - 45.0, x: pad(x), y: pad(y), svg }
    }

    fn px(&self, v: f64) -> f64 {
        self.left + (v - self.x.0) / (self.x.1 - self.x.0) * (self.right - self.left)
    }

    fn py(&self, v: f64) -> f64 {
        self.bottom - (v - self.y.0) / (self.y.1 - self.y.0) * (self.bottom - self.top)
    }

    fn axes(&mut self, xlabel: &str, ylabel: &str, y_ticks: bool) {
        let (l, r, t, b) = (self.left, self.right, self.top, self.bottom);
        let _ = write!(self.svg, r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##, r - l, b - t);
        for v in ticks(self.x.0, self.x.1, 6) {
            let x = self.px(v);
            let _ = write!(
                self.svg,
                r##"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{}" stroke="#444"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                b + 4.0,
                b + 16.0,
                label(v)
            );
        }
        if y_ticks {
            for v in ticks(self.y.0, self.y.1, 6) {
                let y = self.py(v);
                let _ = write!(
                    self.svg,
                    r##"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="#444"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                    l - 4.0,
                    l - 6.0,
                    y + 4.0,
                    label(v)
                );
            }
        }
        let _ = write!(
            self.svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            HEIGHT - 10.0,
            escape(xlabel)
        );
        if !ylabel.is_empty() {
            let cy = (t + b) / 2.0;
            let _ = write!(
                self.svg,
                r#"<text x="14" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 14 {cy:.2})">{}</text>"#,
                escape(ylabel)
            );
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dash: bool) {
        let p: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let d = if dash { r#" stroke-dasharray="4 4""# } else { "" };
        let _ = write!(
            self.svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{d}/>"#,
            p.join(" ")
        );
    }

    fn legend(&mut self, names: &[(String, &str)]) {
        for (k, (name, color)) in names.iter().enumerate() {
            let y = self.top + 14.0 + 14.0 * k as f64;
            let x = self.right - 170.0;
            let _ = write!(
                self.svg,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                x + 18.0,
                x + 24.0,
                y + 4.0,
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn extent(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// ROC curves on the unit square with the chance diagonal.
pub fn roc(series: &[Series]) -> String {
    let mut f = Frame::new("ROC curves on the test set", 50.0, (0.0, 1.0), (0.0, 1.0));
    f.axes("False positive rate", "True positive rate", true);
    f.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999", true);
    let mut names = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        f.polyline(&s.points, c, false);
        names.push((s.name.clone(), c));
    }
    f.legend(&names);
    f.finish()
}

/// A single curve with automatic bounds.
pub fn line(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let (x0, x1) = extent(points.iter().map(|p| p.0));
    let (y0, y1) = extent(points.iter().map(|p| p.1));
    let pad = 0.05 * (y1 - y0).max(1e-9);
    let mut f = Frame::new(title, 60.0, (x0, x1), (y0 - pad, y1 + pad));
    f.axes(xlabel, ylabel, true);
    if y0 < 0.0 && y1 > 0.0 {
        f.polyline(&[(x0, 0.0), (x1, 0.0)], "#999", true);
    }
    f.polyline(points, PALETTE[0], false);
    f.finish()
}

/// Horizontal bars with optional interval whiskers, drawn top to bottom.
pub fn bars(title: &str, xlabel: &str, items: &[(String, f64, Option<(f64, f64)>)]) -> String {
    let (mut lo, mut hi) = extent(items.iter().flat_map(|(_, v, ci)| {
        let (a, b) = ci.unwrap_or((*v, *v));
        [*v, a, b]
    }));
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    let mut f = Frame::new(title, 150.0, (lo, hi), (0.0, items.len().max(1) as f64));
    f.axes(xlabel, "", false);
    let row = (f.bottom - f.top) / items.len().max(1) as f64;
    let zero = f.px(0.0);
    for (k, (name, v, ci)) in items.iter().enumerate() {
        let y = f.top + row * k as f64;
        let (a, b) = (f.px(v.min(0.0)), f.px(v.max(0.0)));
        let _ = write!(
            f.svg,
            r#"<rect x="{a:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            y + row * 0.15,
            (b - a).max(0.5),
            row * 0.7,
            PALETTE[0],
            f.left - 6.0,
            y + row * 0.5 + 4.0,
            escape(name)
        );
        if let Some((l, h)) = ci {
            let cy = y + row * 0.5;
            let _ = write!(
                f.svg,
                r##"<line x1="{:.2}" y1="{cy:.2}" x2="{:.2}" y2="{cy:.2}" stroke="#222"/>"##,
                f.px(*l),
                f.px(*h)
            );
        }
    }
    let _ = write!(f.svg, r##"<line x1="{zero:.2}" y1="{}" x2="{zero:.2}" y2="{}" stroke="#222"/>"##, f.top, f.bottom);
    f.finish()
}

/// One row per feature; each point is a SHAP value colored by the feature
/// value (blue low, red high). Vertical offsets come from the point index so
/// the picture is reproducible.
pub fn beeswarm(features: &[(String, Vec<(f64, f64)>)]) -> String {
    let (lo, hi) = extent(features.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let mut f = Frame::new("SHAP values (color: feature value)", 150.0, (lo.min(0.0), hi.max(0.0)), (0.0, 1.0));
    f.axes("SHAP value (log-odds)", "", false);
    let row = (f.bottom - f.top) / features.len().max(1) as f64;
    for (k, (name, pts)) in features.iter().enumerate() {
        let cy = f.top + row * (k as f64 + 0.5);
        let _ = write!(f.svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, f.left - 6.0, cy + 4.0, escape(name));
        let (vlo, vhi) = extent(pts.iter().map(|p| p.1));
        for (i, &(phi, v)) in pts.iter().enumerate() {
            let t = if vhi > vlo { (v - vlo) / (vhi - vlo) } else { 0.5 };
            let jitter = (((i as u64).wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0 - 0.5) * row * 0.6;
            let (r, b) = ((255.0 * t) as u8, (255.0 * (1.0 - t)) as u8);
            let _ = write!(
                f.svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="rgb({r},40,{b})" fill-opacity="0.6"/>"#,
                f.px(phi),
                cy + jitter
            );
        }
    }
    let zero = f.px(0.0);
    let _ = write!(f.svg, r##"<line x1="{zero:.2}" y1="{}" x2="{zero:.2}" y2="{}" stroke="#222"/>"##, f.top, f.bottom);
    f.finish()
}

/// Histogram with labelled vertical markers.
pub fn histogram(title: &str, xlabel: &str, edges: &[f64], counts: &[usize], markers: &[(&str, f64)]) -> String {
    let total: usize = counts.iter().sum::<usize>().max(1);
    let dens: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let top = dens.iter().cloned().fold(0.0, f64::max) * 1.1;
    let mut f = Frame::new(title, 60.0, (edges[0], edges[edges.len() - 1]), (0.0, top.max(1e-9)));
    f.axes(xlabel, "Fraction of draws", true);
    for (k, &d) in dens.iter().enumerate() {
        let (x0, x1) = (f.px(edges[k]), f.px(edges[k + 1]));
        let y = f.py(d);
        let _ = write!(
            f.svg,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="white"/>"##,
            x1 - x0,
            f.bottom - y,
            PALETTE[0]
        );
    }
    for (k, (name, x)) in markers.iter().enumerate() {
        let px = f.px(*x);
        let _ = write!(
            f.svg,
            r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="{}" stroke-dasharray="4 3"/><text x="{:.2}" y="{}" fill="{}">{}</text>"##,
            f.top,
            f.bottom,
            PALETTE[1],
            px + 3.0,
            f.top + 12.0 + 12.0 * k as f64,
            PALETTE[1],
            escape(name)
        );
    }
    f.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.0, 1.0, 5);
        assert_eq!(t.len(), 6);
        assert!(t.iter().enumerate().all(|(k, v)| (v - 0.2 * k as f64).abs() < 1e-12));
        let t = ticks(-0.013, 0.041, 6);
        assert!(t.iter().all(|v| (-0.013..=0.041).contains(v)));
        assert_eq!(label(0.25), "0.25");
        assert_eq!(label(-0.0), "0");
    }

    #[test]
    fn documents_are_closed() {
        let s = roc(&[Series { name: "a<b".into(), points: vec![(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)] }]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b"));
        let h = histogram("h", "x", &[0.0, 0.5, 1.0], &[3, 1], &[("mean", 0.4)]);
        assert_eq!(h.matches("<rect").count(), 1 + 1 + 2);
    }
}
