use std::path::Path;

use super::correlation::CorrelationReport;
use super::matrix::DistanceMatrix;
use crate::error::Result;
use crate::svg::{self, SvgDoc};

const CELL: f64 = 22.0;
const CHAR_W: f64 = 6.5;
const FONT: f64 = 11.0;

fn label_margin(labels: &[String]) -> f64 {
    let widest = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    widest as f64 * CHAR_W + 14.0
}

/// Heatmap SVG: smallest distance darkest, with a colorbar annotated by the
/// min and max values.
pub fn heatmap_svg(m: &DistanceMatrix) -> String {
    let n = m.len();
    let margin = label_margin(m.labels());
    let grid = n as f64 * CELL;
    let bar_x = margin + grid + 24.0;
    let bar_w = 16.0;
    let width = bar_x + bar_w + 90.0;
    let height = margin + grid.max(160.0) + 30.0;
    let (lo, hi) = m
        .values()
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));

    let mut doc = SvgDoc::new(width.ceil(), height.ceil());
    if let Some(metric) = m.metric() {
        doc.text(6.0, 14.0, 12.0, "", metric.name());
    }
    for (i, label) in m.labels().iter().enumerate() {
        let y = margin + (i as f64 + 0.5) * CELL + FONT / 3.0;
        doc.text(margin - 6.0, y, FONT, r#" text-anchor="end""#, label);
        let x = margin + (i as f64 + 0.5) * CELL + FONT / 3.0;
        doc.text(
            x,
            margin - 6.0,
            FONT,
            &format!(r#" text-anchor="start" transform="rotate(-90 {x:.2} {:.2})""#, margin - 6.0),
            label,
        );
    }
    for i in 0..n {
        for j in 0..n {
            let v = m.get(i, j);
            let fill = svg::hex(svg::colormap_level(svg::level_for(v, lo, hi)));
            doc.raw(&format!(
                r#"<rect x="{:.2}" y="{:.2}" width="{CELL:.2}" height="{CELL:.2}" fill="{fill}"><title>{} / {}: {}</title></rect>"#,
                margin + j as f64 * CELL,
                margin + i as f64 * CELL,
                svg::escape(&m.labels()[i]),
                svg::escape(&m.labels()[j]),
                v
            ));
        }
    }

    let bar_h = grid.max(160.0);
    let step = bar_h / svg::COLORMAP_LEVELS as f64;
    for level in 0..svg::COLORMAP_LEVELS {
        let fill = svg::hex(svg::colormap_level(level));
        // darkest (minimum) at the top
        doc.rect(bar_x, margin + level as f64 * step, bar_w, step + 0.05, &fill, "");
    }
    doc.rect(bar_x, margin, bar_w, bar_h, "none", r##" stroke="#444" stroke-width="0.5""##);
    doc.text(bar_x + bar_w + 4.0, margin + FONT, FONT, "", &format!("min {}", svg::short_number(lo)));
    doc.text(bar_x + bar_w + 4.0, margin + bar_h, FONT, "", &format!("max {}", svg::short_number(hi)));
    doc.finish()
}

pub fn export_heatmap(m: &DistanceMatrix, path: impl AsRef<Path>) -> Result<()> {
    svg::write_atomic(path.as_ref(), heatmap_svg(m).as_bytes())
}

/// Distance-vs-loss scatter with the least-squares line drawn in red.
pub fn scatter_svg(report: &CorrelationReport, source_label: &str) -> String {
    let (w, h) = (640.0, 480.0);
    let (left, right, top, bottom) = (70.0, 30.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        (lo - pad, hi + pad)
    };
    let (x0, x1) = span(&mut report.pairs.iter().map(|p| p.distance));
    let fit = |x: f64| report.slope * x + report.intercept;
    let (y0, y1) = span(&mut report.pairs.iter().map(|p| p.loss).chain([fit(x0), fit(x1)]));
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut doc = SvgDoc::new(w, h);
    doc.text(
        left,
        22.0,
        13.0,
        "",
        &format!(
            "source {source_label}: pearson r = {:.4}, spearman r = {:.4}, n = {}",
            report.pearson_r, report.spearman_r, report.n
        ),
    );
    doc.rect(left, top, pw, ph, "none", r##" stroke="#444" stroke-width="1""##);
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        doc.text(x, top + ph + 16.0, FONT, r#" text-anchor="middle""#, &svg::short_number(v));
    }
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        doc.text(left - 6.0, y + 4.0, FONT, r#" text-anchor="end""#, &svg::short_number(v));
    }
    doc.text(left + pw / 2.0, h - 18.0, 12.0, r#" text-anchor="middle""#, "distance to source");
    let (lx, ly) = (18.0, top + ph / 2.0);
    doc.text(
        lx,
        ly,
        12.0,
        &format!(r#" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})""#),
        "loss",
    );

    doc.line(sx(x0), sy(fit(x0)), sx(x1), sy(fit(x1)), "#d62728", 1.5);
    for p in &report.pairs {
        let (cx, cy) = (sx(p.distance), sy(p.loss));
        doc.circle(cx, cy, 4.0, "#1f77b4", "");
        doc.text(cx + 6.0, cy - 6.0, 9.0, "", &p.label);
    }
    doc.finish()
}

pub fn export_scatter(report: &CorrelationReport, source_label: &str, path: impl AsRef<Path>) -> Result<()> {
    svg::write_atomic(path.as_ref(), scatter_svg(report, source_label).as_bytes())
}
