//! Static SVG charts of sweep results.
//!
//! Input is the harness CSV text; output is a self-contained SVG string with
//! log-log axes, decade ticks, one polyline per group, and a legend. Data
//! series use `<polyline>` elements exclusively and axes/ticks use `<line>`,
//! so structural checks can count series directly. Identical input produces
//! byte-identical output.

use crate::error::{invalid, Result};
use crate::harness::{ExperimentRecord, Method};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

/// What the x axis ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    /// x = d = (m+n)/2, one curve per method.
    Size,
    /// x = T/d, one curve per (method, d).
    PerRow,
}

impl FromStr for PlotAxis {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" => Ok(PlotAxis::Size),
            "per-row" => Ok(PlotAxis::PerRow),
            other => Err(invalid(format!(
                "unknown axis `{other}` (expected size or per-row)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotSpec {
    pub axis: PlotAxis,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 6] = [
    "#1b6ca8", "#d1495b", "#2e933c", "#8d5a97", "#e09f3e", "#335c67",
];

fn method_order(method: Method) -> u8 {
    match method {
        Method::Fgd => 0,
        Method::Mle => 1,
        Method::Zero => 2,
    }
}

/// Group key: method order plus m+n (so d sorts without comparing floats).
type GroupKey = (u8, usize);

struct Group {
    label: String,
    /// x → (sum of rmse, count), keyed by bit pattern for exact grouping.
    points: BTreeMap<u64, (f64, usize)>,
}

fn coord(x: f64) -> String {
    format!("{x:.2}")
}

/// Renders the sweep CSV as a log-log SVG line chart.
///
/// Records with non-finite or non-positive rmse (failed fits, exact-zero
/// errors) are left out. For each group the rmse values at one x are averaged
/// over replications.
pub fn emit_plot(csv_text: &str, spec: &PlotSpec) -> Result<String> {
    let records = ExperimentRecord::parse_csv(csv_text)?;
    let mut groups: BTreeMap<GroupKey, Group> = BTreeMap::new();
    for record in &records {
        if !(record.rmse.is_finite() && record.rmse > 0.0) {
            continue;
        }
        let d = (record.m + record.n) as f64 / 2.0;
        let (key, label, x) = match spec.axis {
            PlotAxis::Size => (
                (method_order(record.method), 0),
                record.method.to_string(),
                d,
            ),
            PlotAxis::PerRow => (
                (method_order(record.method), record.m + record.n),
                format!("{} d={d}", record.method),
                record.t as f64 / d,
            ),
        };
        let group = groups.entry(key).or_insert_with(|| Group {
            label,
            points: BTreeMap::new(),
        });
        let entry = group.points.entry(x.to_bits()).or_insert((0.0, 0));
        entry.0 += record.rmse;
        entry.1 += 1;
    }

    // averaged points per group, x ascending
    let series: Vec<(String, Vec<(f64, f64)>)> = groups
        .into_values()
        .map(|g| {
            let pts = g
                .points
                .into_iter()
                .map(|(bits, (sum, count))| (f64::from_bits(bits), sum / count as f64))
                .collect();
            (g.label, pts)
        })
        .collect();

    let xs: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)).collect();

    // decade-aligned log ranges; an empty chart shows one default decade
    let range = |vals: &[f64]| -> (i32, i32) {
        if vals.is_empty() {
            return (0, 1);
        }
        let lo = vals.iter().fold(f64::INFINITY, |a, &v| a.min(v)).log10().floor() as i32;
        let hi = vals.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)).log10().ceil() as i32;
        if hi > lo { (lo, hi) } else { (lo, lo + 1) }
    };
    let (x_lo, x_hi) = range(&xs);
    let (y_lo, y_hi) = range(&ys);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_pos = |v: f64| {
        MARGIN_LEFT + (v.log10() - x_lo as f64) / (x_hi - x_lo) as f64 * plot_w
    };
    let y_pos = |v: f64| {
        MARGIN_TOP + plot_h - (v.log10() - y_lo as f64) / (y_hi - y_lo) as f64 * plot_h
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(svg, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);

    let x_axis_y = MARGIN_TOP + plot_h;
    let x_end = MARGIN_LEFT + plot_w;
    let _ = writeln!(
        svg,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#000000"/>"##,
        coord(MARGIN_LEFT), coord(x_axis_y), coord(x_end), coord(x_axis_y)
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#000000"/>"##,
        coord(MARGIN_LEFT), coord(MARGIN_TOP), coord(MARGIN_LEFT), coord(x_axis_y)
    );

    for k in x_lo..=x_hi {
        let px = x_pos(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#000000"/>"##,
            coord(px), coord(x_axis_y), coord(x_axis_y + 6.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">1e{k}</text>"#,
            coord(px), coord(x_axis_y + 20.0)
        );
    }
    for k in y_lo..=y_hi {
        let py = y_pos(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="#000000"/>"##,
            coord(MARGIN_LEFT - 6.0), coord(MARGIN_LEFT), coord(py)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">1e{k}</text>"#,
            coord(MARGIN_LEFT - 10.0), coord(py + 4.0)
        );
    }

    let x_label = match spec.axis {
        PlotAxis::Size => "d",
        PlotAxis::PerRow => "T/d",
    };
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        coord(MARGIN_LEFT + plot_w / 2.0), coord(HEIGHT - 8.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">RMSE</text>"#,
        coord(MARGIN_TOP + plot_h / 2.0)
    );

    for (idx, (_, points)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let vertices: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{},{}", coord(x_pos(x)), coord(y_pos(y))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            vertices.join(" ")
        );
    }

    for (idx, (label, _)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let ly = MARGIN_TOP + 14.0 + idx as f64 * 18.0;
        let lx = x_end - 140.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{2}" x2="{}" y2="{2}" stroke="{color}" stroke-width="1.5"/>"#,
            coord(lx), coord(lx + 24.0), coord(ly)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{label}</text>"#,
            coord(lx + 30.0), coord(ly + 4.0)
        );
    }

    if series.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#,
            coord(MARGIN_LEFT + plot_w / 2.0), coord(MARGIN_TOP + plot_h / 2.0)
        );
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::CSV_HEADER;

    fn row(m: usize, t: usize, method: &str, seed: u64, rmse: f64) -> String {
        format!(
            "{m},{m},2,{t},5,{method},{:.16e},{seed},{:.16e},{:.16e},{:.16e},7,{:.16e},true",
            1e-3, rmse, rmse * (m as f64), 1e6, 0.25
        )
    }

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn no_data_annotation() {
        let csv = format!("{CSV_HEADER}\n");
        let svg = emit_plot(&csv, &PlotSpec { axis: PlotAxis::Size }).unwrap();
        assert!(svg.contains("no data"));
        assert_eq!(count(&svg, "<polyline"), 0);
        assert!(count(&svg, "<line") >= 2, "axes must still be drawn");
        assert!(svg.contains("RMSE"));
    }

    #[test]
    fn one_polyline_per_method_group() {
        let mut csv = format!("{CSV_HEADER}\n");
        for m in [50, 100, 200] {
            for method in ["fgd", "mle"] {
                for seed in 0..2 {
                    csv.push_str(&row(m, 10 * m, method, seed, 0.1 + m as f64 * 1e-4));
                    csv.push('\n');
                }
            }
        }
        let svg = emit_plot(&csv, &PlotSpec { axis: PlotAxis::Size }).unwrap();
        assert_eq!(count(&svg, "<polyline"), 2);
        // 3 x-points per group: each polyline has 3 vertices (2 separators)
        for line in svg.lines().filter(|l| l.starts_with("<polyline")) {
            let points = line.split("points=\"").nth(1).unwrap();
            let points = points.split('"').next().unwrap();
            assert_eq!(points.split(' ').count(), 3, "{points}");
        }
        assert!(svg.contains(">fgd<") && svg.contains(">mle<"));
    }

    #[test]
    fn per_row_groups_by_d() {
        let mut csv = format!("{CSV_HEADER}\n");
        for m in [100, 200] {
            for ratio in [100, 300, 1000] {
                csv.push_str(&row(m, ratio * m, "fgd", 0, 0.2));
                csv.push('\n');
            }
        }
        let svg = emit_plot(&csv, &PlotSpec { axis: PlotAxis::PerRow }).unwrap();
        assert_eq!(count(&svg, "<polyline"), 2);
        assert!(svg.contains("fgd d=100") && svg.contains("fgd d=200"));
        assert!(svg.contains(">T/d<"));
    }

    #[test]
    fn replications_average_arithmetically() {
        // group a: two replications 0.05 and 0.2 at one x; group b: single
        // value 0.125 at the same x. Arithmetic averaging makes the two curves
        // land on the same y coordinate.
        let mut csv = format!("{CSV_HEADER}\n");
        csv.push_str(&row(100, 1000, "fgd", 0, 0.05));
        csv.push('\n');
        csv.push_str(&row(100, 1000, "fgd", 1, 0.2));
        csv.push('\n');
        csv.push_str(&row(100, 1000, "mle", 0, 0.125));
        csv.push('\n');
        let svg = emit_plot(&csv, &PlotSpec { axis: PlotAxis::Size }).unwrap();
        let ys: Vec<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap();
                pts.split('"').next().unwrap().split(',').nth(1).unwrap()
            })
            .collect();
        assert_eq!(ys.len(), 2);
        assert_eq!(ys[0], ys[1], "fgd mean and mle value should coincide");
    }

    #[test]
    fn byte_deterministic() {
        let mut csv = format!("{CSV_HEADER}\n");
        for m in [60, 120] {
            csv.push_str(&row(m, 50 * m, "fgd", 3, 0.33));
            csv.push('\n');
        }
        let spec = PlotSpec { axis: PlotAxis::Size };
        let a = emit_plot(&csv, &spec).unwrap();
        let b = emit_plot(&csv, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn failed_fits_are_skipped() {
        let mut csv = format!("{CSV_HEADER}\n");
        csv.push_str(&row(80, 400, "fgd", 0, 0.4));
        csv.push('\n');
        csv.push_str(&format!(
            "80,80,2,400,5,mle,{:.16e},0,NaN,NaN,{:.16e},0,{:.16e},false\n",
            1e-3, 1e6, 0.1
        ));
        let svg = emit_plot(&csv, &PlotSpec { axis: PlotAxis::Size }).unwrap();
        assert_eq!(count(&svg, "<polyline"), 1);
    }

    #[test]
    fn bad_input_is_descriptive() {
        let err = emit_plot("m,n\n", &PlotSpec { axis: PlotAxis::Size }).unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
        let err = emit_plot("", &PlotSpec { axis: PlotAxis::Size }).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn axis_names_parse() {
        assert_eq!("size".parse::<PlotAxis>().unwrap(), PlotAxis::Size);
        assert_eq!("per-row".parse::<PlotAxis>().unwrap(), PlotAxis::PerRow);
        assert!("sideways".parse::<PlotAxis>().is_err());
    }
}
