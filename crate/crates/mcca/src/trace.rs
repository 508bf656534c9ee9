//! Deterministic SVG rendering of trajectory logs: one polyline per robot
//! over the obstacle outlines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::orca::ObstacleSegment;

const PALETTE: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Renders the tab-separated trajectory log produced by the simulator.
/// Unparseable lines (the header) are skipped. Output is deterministic for
/// identical input.
pub fn emit_svg(log: &str, obstacles: &[ObstacleSegment]) -> String {
    let mut paths: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for line in log.lines() {
        let mut f = line.split('\t');
        let (Some(_tick), Some(id), Some(x), Some(y)) = (f.next(), f.next(), f.next(), f.next())
        else {
            continue;
        };
        let (Ok(id), Ok(x), Ok(y)) = (id.parse::<u32>(), x.parse::<f64>(), y.parse::<f64>()) else {
            continue;
        };
        paths.entry(id).or_default().push((x, y));
    }

    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |x: f64, y: f64| {
        lo.0 = lo.0.min(x);
        lo.1 = lo.1.min(y);
        hi.0 = hi.0.max(x);
        hi.1 = hi.1.max(y);
    };
    for pts in paths.values() {
        for &(x, y) in pts {
            grow(x, y);
        }
    }
    for seg in obstacles {
        grow(seg.a.x, seg.a.y);
        grow(seg.b.x, seg.b.y);
    }
    if !lo.0.is_finite() {
        lo = (-1.0, -1.0);
        hi = (1.0, 1.0);
    }
    let margin = 1.0;
    let w = hi.0 - lo.0 + 2.0 * margin;
    let h = hi.1 - lo.1 + 2.0 * margin;
    let scale = 40.0;
    // World y grows upward, SVG y downward.
    let px = |x: f64| (x - lo.0 + margin) * scale;
    let py = |y: f64| (hi.1 - y + margin) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.2} {:.2}\">",
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for seg in obstacles {
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"4\"/>",
            px(seg.a.x),
            py(seg.a.y),
            px(seg.b.x),
            py(seg.b.y)
        );
    }
    for (id, pts) in &paths {
        let color = PALETTE[*id as usize % PALETTE.len()];
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2} ",
                if i == 0 { "M" } else { "L" },
                px(x),
                py(y)
            );
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            d.trim_end(),
            color
        );
        if let Some(&(x, y)) = pts.first() {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>",
                px(x),
                py(y),
                color
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
