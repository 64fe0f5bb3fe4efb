//! Self-contained SVG event-study plot.

use std::fmt::Write;

use crate::aggregate::EventStudy;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    step * mag
}

/// Renders one line per study over event time, with a zero reference line, a
/// marker at `k = 0`, and interval whiskers where the studies carry them.
pub fn event_study_svg(studies: &[&EventStudy], title: &str) -> String {
    let points = studies.iter().flat_map(|s| s.entries.iter());
    let (mut k_lo, mut k_hi) = (0i64, 0i64);
    let (mut y_lo, mut y_hi) = (0.0f64, 0.0f64);
    for (k, e) in points {
        k_lo = k_lo.min(*k);
        k_hi = k_hi.max(*k);
        for v in [Some(e.estimate), e.ci_low, e.ci_high]
            .into_iter()
            .flatten()
        {
            y_lo = y_lo.min(v);
            y_hi = y_hi.max(v);
        }
    }
    if k_hi == k_lo {
        k_hi += 1;
    }
    if (y_hi - y_lo).abs() < f64::EPSILON {
        y_hi += 1.0;
        y_lo -= 1.0;
    }
    let pad = 0.05 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |k: f64| LEFT + (k - k_lo as f64) / (k_hi - k_lo) as f64 * plot_w;
    let y = |v: f64| TOP + (y_hi - v) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    // Axes ticks.
    let step = nice_step(y_hi - y_lo);
    let mut tick = (y_lo / step).ceil() * step;
    while tick <= y_hi {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.2}" x2="{LEFT}" y2="{:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            y(tick),
            y(tick),
            LEFT - 8.0,
            y(tick) + 4.0,
            format_tick(tick)
        );
        tick += step;
    }
    let k_step = ((k_hi - k_lo) as f64 / 10.0).ceil().max(1.0) as i64;
    let mut k = k_lo;
    while k <= k_hi {
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{1:.1}" x2="{0:.2}" y2="{2:.1}" stroke="black"/><text x="{0:.2}" y="{3:.1}" text-anchor="middle">{4}</text>"#,
            x(k as f64),
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0,
            k
        );
        k += k_step;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">event time k</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );

    // Reference lines.
    if y_lo < 0.0 && y_hi > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line class="zero" x1="{LEFT}" y1="{0:.2}" x2="{1:.1}" y2="{0:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
            y(0.0),
            LEFT + plot_w
        );
    }
    let _ = writeln!(
        svg,
        r##"<line class="treatment-start" x1="{0:.2}" y1="{TOP}" x2="{0:.2}" y2="{1:.1}" stroke="#888" stroke-dasharray="2 2"/>"##,
        x(0.0),
        TOP + plot_h
    );

    for (s, study) in studies.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<g class="series" data-estimator="{}" stroke="{color}" fill="{color}">"#,
            escape(&study.estimator_tag)
        );
        let pts: Vec<String> = study
            .entries
            .iter()
            .map(|(k, e)| format!("{:.2},{:.2}", x(*k as f64), y(e.estimate)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        for (k, e) in &study.entries {
            if let (Some(lo), Some(hi)) = (e.ci_low, e.ci_high) {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke-opacity="0.5"/>"#,
                    x(*k as f64),
                    y(lo),
                    y(hi)
                );
            }
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#,
                x(*k as f64),
                y(e.estimate)
            );
        }
        let ly = TOP + 15.0 + 18.0 * s as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke-width="2"/><text x="{:.1}" y="{:.1}" stroke="none">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&study.estimator_tag)
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}
