use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::embedding::{pca_fit, LatentUnit};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Two-component PCA scatter of the embeddings as an SVG document.
///
/// Both axes share one scale, so directions without variance collapse to a
/// straight line. Markers are coloured by `source_id`.
pub fn render_scatter_svg(units: &[LatentUnit]) -> Result<String> {
    if units.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "scatter plot needs at least 3 embeddings, got {}",
            units.len()
        )));
    }
    let dim = units[0].dim();
    let data = DMatrix::from_fn(units.len(), dim, |i, j| units[i].z[j]);
    let k = 2.min(dim);
    let pca = pca_fit(&data, k)?;
    let ratios = pca.explained_variance_ratio();

    let points: Vec<(f64, f64)> = units
        .iter()
        .map(|u| {
            let p = pca.project(&u.z)?;
            Ok((p[0], p.get(1).copied().unwrap_or(0.0)))
        })
        .collect::<Result<_>>()?;

    let (min_x, max_x) = bounds(points.iter().map(|p| p.0));
    let (min_y, max_y) = bounds(points.iter().map(|p| p.1));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let span = ((max_x - min_x) / plot_w).max((max_y - min_y) / plot_h);
    let scale = if span > 0.0 { 0.9 / span } else { 1.0 };
    let (mid_x, mid_y) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    let cx = |x: f64| LEFT + plot_w / 2.0 + (x - mid_x) * scale;
    let cy = |y: f64| TOP + plot_h / 2.0 - (y - mid_y) * scale;

    let ids: BTreeSet<&str> = units.iter().map(|u| u.segment.source_id.as_str()).collect();
    let colours: BTreeMap<&str, &str> = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, PALETTE[i % PALETTE.len()]))
        .collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let pct = |r: Option<&f64>| r.map_or(0.0, |v| 100.0 * v);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">PC1 ({:.1}%)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - BOTTOM / 2.0,
        pct(ratios.first())
    );
    let (ly, lx) = (TOP + plot_h / 2.0, LEFT / 2.0);
    let _ = writeln!(
        svg,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">PC2 ({:.1}%)</text>"#,
        pct(ratios.get(1))
    );

    let _ = writeln!(svg, r#"<g id="points">"#);
    for (u, &(x, y)) in units.iter().zip(&points) {
        let id = escape(&u.segment.source_id);
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.8" data-source="{id}"><title>{id} @ {:.3} s</title></circle>"#,
            cx(x),
            cy(y),
            colours[u.segment.source_id.as_str()],
            u.segment.onset_s
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g id="legend">"#);
    for (i, (id, colour)) in colours.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{colour}"/>"#);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 10.0, y + 4.0, escape(id));
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Renders the scatter and writes it to `out`.
pub fn visualize(units: &[LatentUnit], out: impl AsRef<Path>) -> Result<()> {
    let svg = render_scatter_svg(units)?;
    std::fs::write(out, svg)?;
    Ok(())
}
