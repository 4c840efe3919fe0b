//! Minimal static SVG rendering of ROC and PR curves.

use std::fmt::Write as _;

const W: f64 = 420.0;
const H: f64 = 420.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn to_px(x: f64, y: f64) -> (f64, f64) {
    let span_w = W - 2.0 * PAD;
    let span_h = H - 2.0 * PAD;
    (PAD + x * span_w, H - PAD - y * span_h)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders step curves in the unit square; `diagonal` adds the chance line.
fn render(title: &str, x_label: &str, y_label: &str, curves: &[(&str, &[(f64, f64)])], diagonal: bool) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    let (x0, y0) = to_px(0.0, 0.0);
    let (x1, y1) = to_px(1.0, 1.0);
    writeln!(
        s,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    )
    .unwrap();
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let (tx, _) = to_px(v, 0.0);
        let (_, ty) = to_px(0.0, v);
        writeln!(s, r#"<text x="{tx}" y="{}" text-anchor="middle">{v:.2}</text>"#, y0 + 16.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, ty + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label)).unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    )
    .unwrap();
    if diagonal {
        writeln!(s, r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#999" stroke-dasharray="4 4"/>"##).unwrap();
    }
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        )
        .unwrap();
        let ly = y1 + 16.0 + 16.0 * i as f64;
        writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            x1 - 6.0,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// ROC curves from `(fpr, tpr)` points.
pub fn roc_svg(curves: &[(&str, &[(f64, f64)])]) -> String {
    render("ROC", "false positive rate", "true positive rate", curves, true)
}

/// Precision-recall curves from `(recall, precision)` points, drawn as steps.
pub fn pr_svg(curves: &[(&str, &[(f64, f64)])]) -> String {
    let stepped: Vec<(&str, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|(name, pts)| {
            let mut out = Vec::with_capacity(pts.len() * 2);
            let mut prev_r = 0.0;
            for &(r, p) in pts.iter() {
                out.push((prev_r, p));
                out.push((r, p));
                prev_r = r;
            }
            (*name, out)
        })
        .collect();
    let refs: Vec<(&str, &[(f64, f64)])> = stepped.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    render("Precision-recall", "recall", "precision", &refs, false)
}
