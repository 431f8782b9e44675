//! Minimal SVG line charts for the per-layer series.

use std::fmt::Write;

use spectralens::stats::MeanSeries;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["black", "steelblue", "firebrick", "seagreen"];

pub fn line_chart(title: &str, series: &[&MeanSeries]) -> String {
    let points: Vec<(usize, f64)> = series
        .iter()
        .flat_map(|s| s.values.iter().filter_map(|&(l, v)| v.map(|v| (l, v))))
        .collect();
    let (x_max, y_lo, y_hi) = points.iter().fold((1usize, 0.0f64, 0.0f64), |(x, lo, hi), &(l, v)| {
        (x.max(l), lo.min(v), hi.max(v))
    });
    let y_span = if y_hi > y_lo { y_hi - y_lo } else { 1.0 };
    let px = |l: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * l as f64 / x_max as f64;
    let py = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - y_lo) / y_span;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        py(0.0),
        WIDTH - MARGIN,
        py(0.0)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .values
            .iter()
            .filter_map(|&(l, v)| v.map(|v| format!("{:.2},{:.2}", px(l), py(v))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 16.0 * i as f64,
            s.category
        );
    }
    out.push_str("</svg>\n");
    out
}
