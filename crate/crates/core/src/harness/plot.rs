use std::fmt::Write;

use super::table::Table;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub width: f64,
    pub height: f64,
    pub log_y: bool,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle { title: String::new(), width: 720.0, height: 440.0, log_y: true }
    }
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Self-contained SVG line chart of a series CSV (first column is x). For
/// aggregate CSVs only the `*_mean` columns are drawn. On a log axis,
/// non-positive values are skipped.
pub fn plot_emit(csv: &str, style: &PlotStyle) -> Result<String> {
    let table = Table::from_csv(csv)?;
    if table.rows.is_empty() {
        return Err(Error::Schema("CSV has no rows".into()));
    }
    let has_means = table.series.iter().any(|s| s.ends_with("_mean"));
    let chosen: Vec<(usize, String)> = table
        .series
        .iter()
        .enumerate()
        .filter(|(_, s)| !has_means || s.ends_with("_mean"))
        .map(|(i, s)| (i, s.trim_end_matches("_mean").to_string()))
        .collect();
    let ty = |v: f64| if style.log_y { v.log10() } else { v };
    let usable = |v: f64| v.is_finite() && (!style.log_y || v > 0.0);

    let mut polylines: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (c, name) in &chosen {
        let pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter_map(|(x, v)| v[*c].filter(|&y| usable(y)).map(|y| (*x, ty(y))))
            .collect();
        polylines.push((name.clone(), pts));
    }
    let all: Vec<(f64, f64)> = polylines.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Schema("no plottable values".into()));
    }
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if style.log_y {
        y0 = y0.floor();
        y1 = y1.ceil();
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }

    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pw = style.width - left - right;
    let ph = style.height - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = style.width,
        h = style.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" font-size="15">{}</text>"#, left, escape(&style.title));
    let _ = writeln!(svg, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    // y ticks: decades on a log axis, five even steps otherwise
    let ticks: Vec<f64> = if style.log_y {
        let (a, b) = (y0 as i32, y1 as i32);
        let step = ((b - a) / 8).max(1);
        (a..=b).step_by(step as usize).map(f64::from).collect()
    } else {
        (0..=5).map(|i| y0 + (y1 - y0) * i as f64 / 5.0).collect()
    };
    for t in ticks {
        let y = sy(t);
        let label = if style.log_y { format!("1e{}", t as i32) } else { format!("{t:.3}") };
        let _ = writeln!(svg, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, left - 6.0, y + 4.0);
    }
    for i in 0..=5 {
        let xv = x0 + (x1 - x0) * i as f64 / 5.0;
        let x = sx(xv);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 18.0, format_tick(xv));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        style.height - 10.0,
        escape(&table.x_name)
    );

    for (i, (name, pts)) in polylines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = top + 16.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 22.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 28.0, ly + 4.0, escape(name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(x: f64) -> String {
    if x.fract().abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_series_is_one_polyline() {
        let svg = plot_emit("j,dist\n1,0.1\n2,0.01\n3,0.001\n", &PlotStyle::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn aggregate_draws_only_means() {
        let csv = "j,a_mean,a_min,a_max,b_mean,b_min,b_max,c_mean,c_min,c_max\n1,1,1,1,2,2,2,3,3,3\n2,0.5,0.5,0.5,1,1,1,2,2,2\n";
        let svg = plot_emit(csv, &PlotStyle::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn empty_csv_is_a_schema_error() {
        assert!(matches!(plot_emit("", &PlotStyle::default()), Err(Error::Schema(_))));
        assert!(matches!(plot_emit("j,d\n", &PlotStyle::default()), Err(Error::Schema(_))));
    }
}
