use std::fmt::Write;

use super::{GapReport, SampleCount};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 170.0;
const LOG_MIN: f64 = -4.0;
const LOG_MAX: f64 = 4.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"];

fn y_of(gap: f64) -> f64 {
    let l = gap.max(10f64.powf(LOG_MIN)).log10().clamp(LOG_MIN, LOG_MAX);
    TOP + (LOG_MAX - l) / (LOG_MAX - LOG_MIN) * (HEIGHT - TOP - BOTTOM)
}

/// Per-pair gaps as dots on a log axis, one column per task, with the
/// chosen threshold drawn as a red bar.
pub fn render_gap_plot(report: &GapReport) -> String {
    let tasks: Vec<&String> = report.thresholds.keys().collect();
    let n = tasks.len().max(1) as f64;
    let col = (WIDTH - LEFT - RIGHT) / n;
    let x_of = |k: usize| LEFT + col * (k as f64 + 0.5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for p in (LOG_MIN as i32)..=(LOG_MAX as i32) {
        let y = y_of(10f64.powi(p));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{p}%</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let samples: Vec<SampleCount> = report.samples.clone();
    for (k, task) in tasks.iter().enumerate() {
        let x = x_of(k);
        let base = HEIGHT - BOTTOM + 10.0;
        let _ = writeln!(
            s,
            r#"<text transform="translate({x:.1},{base:.1}) rotate(60)" text-anchor="start">{task}</text>"#
        );
        for (j, smp) in samples.iter().enumerate() {
            let colour = PALETTE[j % PALETTE.len()];
            let offset = (j as f64 - (samples.len() as f64 - 1.0) / 2.0) * 6.0;
            for g in report.gaps.iter().filter(|g| &&g.task == task && g.samples == *smp) {
                if let Some(v) = g.gap_pct {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}" fill-opacity="0.7"><title>{} N={}: {v:.3}%</title></circle>"#,
                        x + offset,
                        y_of(v),
                        g.scenario,
                        smp
                    );
                }
            }
        }
        let y = y_of(report.thresholds[*task]);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#d62728" stroke-width="2"/>"##,
            x - col * 0.4,
            x + col * 0.4
        );
    }
    for (j, smp) in samples.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="14" r="4" fill="{}"/><text x="{:.1}" y="18">N={smp}</text>"#,
            LEFT + 10.0 + 80.0 * j as f64,
            PALETTE[j % PALETTE.len()],
            LEFT + 18.0 + 80.0 * j as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
