//! Static SVG time series: species on top, resources below, with the
//! bounds box drawn as dashed horizontal lines.

use std::fmt::Write;

use foodweb::sim::Trajectory;

const WIDTH: f64 = 800.0;
const PANEL: f64 = 280.0;
const MARGIN: f64 = 50.0;
const MAX_POINTS: usize = 1500;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

type Band<'a> = Option<(&'a [f64], &'a [f64])>;

pub fn trajectory_svg(traj: &Trajectory, v_bounds: Band<'_>, x_bounds: Band<'_>) -> String {
    let height = 2.0 * PANEL + 3.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let xs: Vec<Vec<f64>> = traj.states.iter().map(|s| s.x.clone()).collect();
    let vs: Vec<Vec<f64>> = traj.states.iter().map(|s| s.v.clone()).collect();
    panel(&mut svg, "x", &traj.times, &xs, x_bounds, MARGIN);
    panel(
        &mut svg,
        "v",
        &traj.times,
        &vs,
        v_bounds,
        2.0 * MARGIN + PANEL,
    );
    svg.push_str("</svg>\n");
    svg
}

fn panel(
    svg: &mut String,
    label: &str,
    times: &[f64],
    series: &[Vec<f64>],
    band: Band<'_>,
    top: f64,
) {
    let Some(dim) = series.first().map(Vec::len) else {
        return;
    };
    let (t0, t1) = (times[0], *times.last().unwrap());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in series {
        for &y in row {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if let Some((blo, bhi)) = band {
        for &y in blo.iter().chain(bhi) {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let px = |t: f64| MARGIN + plot_w * if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    let py = |y: f64| top + PANEL * (1.0 - (y - lo) / (hi - lo));

    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{top}" width="{plot_w}" height="{PANEL}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="10" y="{}">{label}</text>"#,
        top + PANEL / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}">{lo:.4}</text>"#,
        top + PANEL + 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}">{hi:.4}</text>"#,
        top - 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">t = {t1}</text>"#,
        WIDTH - MARGIN,
        top + PANEL + 14.0
    );

    let stride = series.len().div_ceil(MAX_POINTS).max(1);
    for k in 0..dim {
        let color = COLORS[k % COLORS.len()];
        let mut points = String::new();
        for (i, (t, row)) in times.iter().zip(series).enumerate() {
            if i % stride == 0 || i + 1 == series.len() {
                let _ = write!(points, "{:.2},{:.2} ", px(*t), py(row[k]));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"><title>{label}_{}</title></polyline>"#,
            points.trim_end(),
            k + 1
        );
        if let Some((blo, bhi)) = band {
            for y in [blo[k], bhi[k]] {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{MARGIN}" x2="{}" y1="{y2:.2}" y2="{y2:.2}" stroke="{color}" stroke-dasharray="5,4" stroke-width="0.8"/>"#,
                    WIDTH - MARGIN,
                    y2 = py(y)
                );
            }
        }
    }
}
