//! Deterministic SVG rendering of composite importance bars and mean
//! ROC/PRC curves.

use std::fmt::Write as _;

use crate::importance::CfibpBars;

pub const GRID_POINTS: usize = 101;

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Evenly spaced points on [0, 1].
pub fn grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|i| i as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// Piecewise-linear interpolation of a curve sorted by x; at vertical jumps
/// the highest y is used. Outside the curve the nearest end is held.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    match points.len() {
        0 => return 0.0,
        1 => return points[0].1,
        _ => {}
    }
    if x <= points[0].0 {
        return points.iter().take_while(|p| p.0 == points[0].0).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    }
    let last = points[points.len() - 1];
    if x >= last.0 {
        return last.1;
    }
    let k = points.partition_point(|p| p.0 <= x);
    let (a, b) = (points[k - 1], points[k]);
    if a.0 == x {
        return a.1;
    }
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Pointwise mean over curves on the fixed grid.
pub fn mean_curve(curves: &[&[(f64, f64)]]) -> Vec<(f64, f64)> {
    let usable: Vec<&&[(f64, f64)]> = curves.iter().filter(|c| !c.is_empty()).collect();
    grid()
        .into_iter()
        .map(|x| {
            let y = if usable.is_empty() {
                0.0
            } else {
                usable.iter().map(|c| interpolate(c, x)).sum::<f64>() / usable.len() as f64
            };
            (x, y)
        })
        .collect()
}

pub fn cfibp_svg(bars: &CfibpBars, title: &str) -> String {
    let row_h = 22.0;
    let (left, top, width) = (160.0, 50.0, 460.0);
    let legend_h = 20.0 * bars.algorithms.len() as f64;
    let height = top + row_h * bars.features.len().max(1) as f64 + 40.0 + legend_h;
    let max_total = bars.totals.iter().copied().fold(0.0, f64::max);
    let scale = if max_total > 0.0 { width / max_total } else { 0.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#,
        left + width + 40.0
    );
    let _ = writeln!(s, r#"<text x="{left:.0}" y="24" font-size="14">{}</text>"#, escape(title));
    for (i, f) in bars.features.iter().enumerate() {
        let y = top + row_h * i as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + 15.0, escape(f));
        let mut x = left;
        for (a, c) in bars.contributions[i].iter().enumerate() {
            let w = c * scale;
            if w > 0.0 {
                let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{:.2}" fill="{}"/>"#, row_h - 4.0, color(a));
            }
            x += w;
        }
    }
    let base = top + row_h * bars.features.len().max(1) as f64 + 20.0;
    for (a, name) in bars.algorithms.iter().enumerate() {
        let y = base + 20.0 * a as f64;
        let _ = writeln!(s, r#"<rect x="{left:.0}" y="{y:.1}" width="12" height="12" fill="{}"/>"#, color(a));
        let _ = writeln!(s, r#"<text x="{:.0}" y="{:.1}">{}</text>"#, left + 18.0, y + 11.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

pub enum Reference {
    Diagonal,
    Horizontal(f64),
}

/// Overlay of per-algorithm mean curves on the unit square.
pub fn curves_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], reference: Reference) -> String {
    let (left, top, size) = (60.0, 40.0, 400.0);
    let px = |x: f64| left + x * size;
    let py = |y: f64| top + (1.0 - y) * size;
    let legend_x = left + size + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" font-family="sans-serif" font-size="12">"#,
        legend_x + 140.0,
        top + size + 50.0
    );
    let _ = writeln!(s, r#"<text x="{left:.0}" y="24" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(s, r#"<rect x="{left:.0}" y="{top:.0}" width="{size:.0}" height="{size:.0}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.0}" y="{:.0}" text-anchor="middle">{}</text>"#, px(0.5), top + size + 35.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.0}" text-anchor="middle" transform="rotate(-90 20 {:.0})">{}</text>"#,
        py(0.5),
        py(0.5),
        escape(y_label)
    );
    let (x1, y1, x2, y2) = match reference {
        Reference::Diagonal => (0.0, 0.0, 1.0, 1.0),
        Reference::Horizontal(v) => (0.0, v, 1.0, v),
    };
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
        px(x1),
        py(y1),
        px(x2),
        py(y2)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#, color(i), path.join(" "));
        let y = top + 20.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{legend_x:.0}" y="{y:.0}" width="12" height="12" fill="{}"/>"#, color(i));
        let _ = writeln!(s, r#"<text x="{:.0}" y="{:.0}">{}</text>"#, legend_x + 18.0, y + 11.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}
