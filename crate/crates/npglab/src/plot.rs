//! Hand-written SVG rendering of a run: the value gap on a log scale next
//! to the predicted bound, with a domination annotation recomputed from
//! the plotted data. Output is byte-stable: coordinates are formatted with
//! fixed precision and nothing depends on timing or environment.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::solver::{records_from_csv, IterateRecord};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Values at or below this are drawn at the clip line; a converged run's
/// exact zeros would otherwise leave the log scale.
const CLIP: f64 = 1e-16;

struct LogAxis {
    lo: i32,
    hi: i32,
}

impl LogAxis {
    fn from_values<'a>(values: impl Iterator<Item = &'a f64>) -> LogAxis {
        let mut min_log = f64::INFINITY;
        let mut max_log = f64::NEG_INFINITY;
        for &v in values {
            if !v.is_finite() {
                continue;
            }
            let log = v.max(CLIP).log10();
            min_log = min_log.min(log);
            max_log = max_log.max(log);
        }
        if !min_log.is_finite() || !max_log.is_finite() {
            return LogAxis { lo: -1, hi: 1 };
        }
        let mut lo = min_log.floor() as i32;
        let mut hi = max_log.ceil() as i32;
        if hi <= lo {
            hi = lo + 1;
        }
        if lo < -16 {
            lo = -16;
        }
        LogAxis { lo, hi }
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.hi - self.lo) as f64;
        let log = v.max(CLIP).log10().clamp(self.lo as f64, self.hi as f64);
        TOP + (self.hi as f64 - log) / span * (HEIGHT - TOP - BOTTOM)
    }
}

fn x_pos(t: usize, t_max: usize) -> f64 {
    let span = t_max.max(1) as f64;
    LEFT + t as f64 / span * (WIDTH - LEFT - RIGHT)
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    if points.is_empty() {
        return String::new();
    }
    let mut attr = String::new();
    for (x, y) in points {
        let _ = write!(attr, "{x:.2},{y:.2} ");
    }
    format!(
        "  <polyline fill=\"none\" {style} points=\"{}\"/>\n",
        attr.trim_end()
    )
}

/// Render a run as an SVG: value gap (solid) and predicted bound (dashed)
/// on a log axis over iterations.
pub fn render_run_svg(records: &[IterateRecord], title: &str) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Domain("nothing to plot: no records".into()));
    }
    let t_max = records.last().expect("nonempty").t;
    let axis = LogAxis::from_values(
        records
            .iter()
            .flat_map(|r| [&r.delta, &r.bound].into_iter()),
    );

    let gap_points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.delta.is_finite())
        .map(|r| (x_pos(r.t, t_max), axis.y(r.delta)))
        .collect();
    let bound_points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.bound.is_finite())
        .map(|r| (x_pos(r.t, t_max), axis.y(r.bound)))
        .collect();

    let violations = records
        .iter()
        .filter(|r| r.delta > r.bound + 1e-8)
        .count();
    let verdict = if violations == 0 {
        "gap <= bound at every iteration".to_string()
    } else {
        format!("gap exceeds bound at {violations} iterations")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" \
         viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\">"
    );
    let _ = writeln!(
        svg,
        "  <rect width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{LEFT:.0}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{}</text>",
        xml_escape(title)
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.0}\" y=\"24\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>",
        WIDTH - RIGHT,
        xml_escape(&verdict)
    );

    // Decade gridlines; skip decades when there are too many to label.
    let n_decades = (axis.hi - axis.lo) as usize;
    let step = (n_decades / 9 + 1) as i32;
    let mut exp = axis.lo;
    while exp <= axis.hi {
        let y = axis.y(10f64.powi(exp));
        let _ = writeln!(
            svg,
            "  <line x1=\"{LEFT:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>",
            WIDTH - RIGHT
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"10\" \
             text-anchor=\"end\">1e{exp}</text>",
            LEFT - 6.0,
            y + 3.0
        );
        exp += step;
    }

    // X ticks at about five positions.
    let n_ticks = 5usize.min(t_max.max(1));
    for i in 0..=n_ticks {
        let t = i * t_max.max(1) / n_ticks;
        let x = x_pos(t, t_max);
        let y0 = HEIGHT - BOTTOM;
        let _ = writeln!(
            svg,
            "  <line x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#999999\" stroke-width=\"1\"/>",
            y0 + 4.0
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"10\" \
             text-anchor=\"middle\">{t}</text>",
            y0 + 16.0
        );
    }

    // Axes.
    let _ = writeln!(
        svg,
        "  <line x1=\"{LEFT:.2}\" y1=\"{TOP:.2}\" x2=\"{LEFT:.2}\" y2=\"{:.2}\" \
         stroke=\"black\" stroke-width=\"1\"/>",
        HEIGHT - BOTTOM
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{LEFT:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
         stroke=\"black\" stroke-width=\"1\"/>",
        HEIGHT - BOTTOM,
        WIDTH - RIGHT,
        HEIGHT - BOTTOM
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"middle\">iteration</text>",
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 12.0
    );

    svg.push_str(&polyline(
        &gap_points,
        "stroke=\"#1f77b4\" stroke-width=\"1.5\"",
    ));
    svg.push_str(&polyline(
        &bound_points,
        "stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6 3\"",
    ));

    // Legend.
    let lx = LEFT + 10.0;
    let _ = writeln!(
        svg,
        "  <line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
         stroke=\"#1f77b4\" stroke-width=\"1.5\"/>",
        TOP + 10.0,
        lx + 24.0,
        TOP + 10.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">value gap</text>",
        lx + 30.0,
        TOP + 14.0
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
         stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6 3\"/>",
        TOP + 26.0,
        lx + 24.0,
        TOP + 26.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">predicted bound</text>",
        lx + 30.0,
        TOP + 30.0
    );

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render directly from the run CSV format.
pub fn render_from_csv(text: &str, title: &str) -> Result<String> {
    let records = records_from_csv(text)?;
    render_run_svg(&records, title)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
