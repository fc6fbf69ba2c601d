use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::ResultRow;

pub const CSV_HEADER: &str = "distribution,mechanism,N,C,r,reps,seed,k_star,mean_welfare,stderr_welfare,mean_revenue,stderr_revenue,mean_items_sold,sold_all_frequency";

pub fn csv_string(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("nothing to write: no result rows"));
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvariantViolation(e.to_string()))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let text = csv_string(rows)?;
    fs::write(path, text)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Welfare,
    Revenue,
}

impl Metric {
    fn label(self) -> &'static str {
        match self {
            Metric::Welfare => "mean welfare",
            Metric::Revenue => "mean revenue",
        }
    }

    fn of(self, row: &ResultRow) -> f64 {
        match self {
            Metric::Welfare => row.mean_welfare,
            Metric::Revenue => row.mean_revenue,
        }
    }
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Line chart of `metric` against `N`, one line per mechanism.
pub fn plot_svg(rows: &[ResultRow], metric: Metric) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("nothing to plot: no result rows"));
    }
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        series
            .entry(row.mechanism.as_str())
            .or_default()
            .push((row.n as f64, metric.of(row)));
    }

    let xs = rows.iter().map(|r| r.n as f64);
    let ys = rows.iter().map(|r| metric.of(r));
    let (x_min, x_max) = bounds(xs);
    let (_, y_top) = bounds(ys);
    let y_min = 0.0;
    let y_max = if y_top > 0.0 { y_top * 1.05 } else { 1.0 };
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_min) / x_span * plot_w;
    let py = |y: f64| TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{} vs N ({})</text>"#,
        LEFT + plot_w / 2.0,
        metric.label(),
        rows[0].distribution
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let x = x_min + t * x_span;
        let y = y_min + t * (y_max - y_min);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            px(x),
            TOP + plot_h + 18.0,
            x
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            LEFT - 6.0,
            py(y) + 4.0,
            y
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            LEFT + plot_w,
            py(y),
            py(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">N (non-colluding bidders)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );

    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{name}</text>"#, lx + 30.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(rows: &[ResultRow], metric: Metric, path: &Path) -> Result<()> {
    fs::write(path, plot_svg(rows, metric)?)?;
    Ok(())
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mechanism: &str, n: usize, welfare: f64) -> ResultRow {
        ResultRow {
            distribution: "uniform".into(),
            mechanism: mechanism.into(),
            n,
            c: 10,
            r: 10,
            reps: 1,
            seed: 7,
            k_star: None,
            mean_welfare: welfare,
            stderr_welfare: None,
            mean_revenue: welfare / 2.0,
            stderr_revenue: None,
            mean_items_sold: 1.0,
            sold_all_frequency: 0.0,
        }
    }

    #[test]
    fn csv_header_and_empty_fields() {
        let mut r = row("hvcg", 3, 1.5);
        r.k_star = Some(2);
        let text = csv_string(&[r]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "uniform,hvcg,3,10,10,1,7,2,1.5,,0.75,,1.0,0.0");
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(csv_string(&[]).unwrap_err().is_invalid_argument());
        assert!(plot_svg(&[], Metric::Welfare).is_err());
    }

    #[test]
    fn plot_has_one_line_per_mechanism() {
        let rows = vec![row("a", 1, 1.0), row("b", 1, 2.0), row("a", 2, 3.0), row("b", 2, 4.0)];
        let svg = plot_svg(&rows, Metric::Revenue).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
