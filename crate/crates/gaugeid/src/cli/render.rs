//! SVG heatmaps of scalar fields on the disk.

use crate::error::{Error, Result};
use crate::field::MatrixField;
use crate::scalar::{c64, Real};
use std::fmt::Write as _;
use std::path::Path;

const PIXEL: usize = 3;
const BAR_WIDTH: usize = 18;
const BAR_GAP: usize = 16;
const LABEL_WIDTH: usize = 80;

/// Control points of a perceptually ordered palette (dark blue → yellow).
const PALETTE: [(f64, [f64; 3]); 5] = [
    (0.0, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.5, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.0, [253.0, 231.0, 37.0]),
];

fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let k = PALETTE.iter().position(|(p, _)| *p >= t).unwrap_or(PALETTE.len() - 1).max(1);
    let (p0, c0) = PALETTE[k - 1];
    let (p1, c1) = PALETTE[k];
    let s = if p1 > p0 { (t - p0) / (p1 - p0) } else { 0.0 };
    let ch = |i: usize| (c0[i] + s * (c1[i] - c0[i])).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

/// Render a real 1×1 field as SVG text. Nodes outside the unit disk are
/// left transparent; the color scale is linear between the min and max
/// over the disk.
pub fn heatmap_svg<T: Real>(field: &MatrixField<T>, title: &str) -> Result<String> {
    if field.dim() != 1 {
        return Err(Error::Shape(format!("heatmap needs a 1x1 field, got {}x{}", field.rows, field.cols)));
    }
    let g = &field.grid;
    let vals: Vec<f64> = field.data.iter().map(|z| c64(*z).re).collect();
    let peak = field.data.iter().map(|z| c64(*z).norm()).fold(0.0, f64::max);
    let imag = field.data.iter().map(|z| c64(*z).im.abs()).fold(0.0, f64::max);
    if imag > 1e-12 * peak.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition("heatmap needs a real field; take the modulus first".into()));
    }
    let inside: Vec<f64> = vals.iter().zip(&g.mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    let lo = inside.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if inside.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = g.n;
    let side = n * PIXEL;
    let width = side + BAR_GAP + BAR_WIDTH + LABEL_WIDTH;
    let height = side + 30;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#);
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(svg, r#"<g shape-rendering="crispEdges">"#);
    for iy in 0..n {
        // y grows upwards on the grid and downwards in SVG
        let row = n - 1 - iy;
        for ix in 0..n {
            let idx = g.index(ix, iy);
            if !g.mask[idx] {
                continue;
            }
            let t = (vals[idx] - lo) / span;
            let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="{PIXEL}" height="{PIXEL}" fill="{}"/>"#, ix * PIXEL, row * PIXEL, color(t));
        }
    }
    let bar_x = side + BAR_GAP;
    let steps = 64;
    let step_h = side as f64 / steps as f64;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{bar_x}" y="{:.2}" width="{BAR_WIDTH}" height="{:.2}" fill="{}"/>"#,
            k as f64 * step_h,
            step_h + 0.5,
            color(t)
        );
    }
    let _ = writeln!(svg, "</g>");
    let lx = bar_x + BAR_WIDTH + 4;
    let _ = writeln!(svg, r#"<text x="{lx}" y="12" font-family="monospace" font-size="11">{hi:.3e}</text>"#);
    let _ = writeln!(svg, r#"<text x="{lx}" y="{side}" font-family="monospace" font-size="11">{lo:.3e}</text>"#);
    let _ = writeln!(svg, r#"<text x="0" y="{}" font-family="monospace" font-size="12">{}</text>"#, side + 20, escape(title));
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_heatmap<T: Real>(field: &MatrixField<T>, path: &Path, title: &str) -> Result<()> {
    let svg = heatmap_svg(field, title)?;
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_domain, FormType};
    use num_complex::Complex;

    #[test]
    fn zero_field_is_uniform() {
        let g = build_domain::<f64>(32, 1.25).unwrap();
        let f = MatrixField::zeros(&g, 1, 1, FormType::Function);
        let svg = heatmap_svg(&f, "zero").unwrap();
        let base = color(0.0);
        let pixels: Vec<&str> = svg.lines().filter(|l| l.contains(&format!("width=\"{PIXEL}\""))).collect();
        assert_eq!(pixels.len(), g.mask.iter().filter(|m| **m).count());
        assert!(pixels.iter().all(|l| l.contains(&base)));
    }

    #[test]
    fn radial_bump_is_concentric() {
        let g = build_domain::<f64>(32, 1.25).unwrap();
        let f = MatrixField::scalar(&g, FormType::Function, |z| Complex::new((-3.0 * z.norm_sqr()).exp(), 0.0));
        let a = heatmap_svg(&f, "bump").unwrap();
        let b = heatmap_svg(&f, "bump").unwrap();
        assert_eq!(a, b);
        // pixels at equal radius share a color
        let find = |ix: usize, iy: usize| {
            let row = 31 - iy;
            let key = format!(r#"x="{}" y="{}""#, ix * PIXEL, row * PIXEL);
            a.lines().find(|l| l.contains(&key)).unwrap().to_string()
        };
        let fill = |l: String| l.split("fill=").nth(1).unwrap().to_string();
        assert_eq!(fill(find(16 + 5, 16)), fill(find(16, 16 + 5)));
        assert_eq!(fill(find(16 - 5, 16)), fill(find(16, 16 - 5)));
        assert_ne!(fill(find(16, 16)), fill(find(16 + 5, 16)));
    }

    #[test]
    fn matrix_fields_are_rejected() {
        let g = build_domain::<f64>(16, 1.25).unwrap();
        let f = MatrixField::identity(&g, 2);
        assert!(matches!(heatmap_svg(&f, "m"), Err(Error::Shape(_))));
        let c = MatrixField::scalar(&g, FormType::Function, |_| Complex::new(0.0, 1.0));
        assert!(heatmap_svg(&c, "c").is_err());
    }
}
