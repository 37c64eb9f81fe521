//! Minimal SVG scatter plots.

use std::fmt::Write;

use crate::generator::Vector;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Dot,
    Cross,
    Diamond,
}

pub struct Layer<'a> {
    pub points: Vec<&'a Vector>,
    pub color: &'a str,
    pub marker: Marker,
    pub label: &'a str,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        Self {
            x: padded_range(xs),
            y: padded_range(ys),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn padded_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Scatter of coordinates `coords` of every layer, drawn in order.
pub fn scatter(title: &str, coords: [usize; 2], layers: &[Layer<'_>]) -> String {
    let all = || layers.iter().flat_map(|l| l.points.iter());
    let frame = Frame::new(all().map(|p| p[coords[0]]), all().map(|p| p[coords[1]]));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = frame.x.0 + t * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + t * (frame.y.1 - frame.y.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            frame.px(xv),
            HEIGHT - MARGIN + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            frame.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">x{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, coords[0]);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">x{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        coords[1]
    );
    for (li, layer) in layers.iter().enumerate() {
        let _ = writeln!(s, r#"<g fill="{0}" stroke="{0}">"#, layer.color);
        for p in &layer.points {
            let (x, y) = (frame.px(p[coords[0]]), frame.py(p[coords[1]]));
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            let _ = match layer.marker {
                Marker::Dot => writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.8" stroke="none"/>"#),
                Marker::Cross => writeln!(
                    s,
                    r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke-width="2.5"/>"#,
                    x - 6.0,
                    y - 6.0,
                    x + 6.0,
                    y + 6.0,
                    x - 6.0,
                    y + 6.0,
                    x + 6.0,
                    y - 6.0
                ),
                Marker::Diamond => writeln!(
                    s,
                    r#"<path d="M{x:.2} {:.2}L{:.2} {y:.2}L{x:.2} {:.2}L{:.2} {y:.2}Z"/>"#,
                    y - 6.0,
                    x + 6.0,
                    y + 6.0,
                    x - 6.0
                ),
            };
        }
        let _ = writeln!(s, "</g>");
        let ly = MARGIN + 14.0 + 16.0 * li as f64;
        let lx = WIDTH - MARGIN - 140.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{lx}" cy="{}" r="4" fill="{}"/><text x="{}" y="{ly}">{}</text>"#,
            ly - 4.0,
            layer.color,
            lx + 10.0,
            escape(layer.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn scatter_is_well_formed() {
        let pts = [DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![2.0, 3.0])];
        let svg = scatter(
            "a < b",
            [0, 1],
            &[Layer {
                points: pts.iter().collect(),
                color: "#333",
                marker: Marker::Dot,
                label: "cloud",
            }],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("a &lt; b"));
    }
}
