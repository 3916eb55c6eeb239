//! Headless SVG charts for reports.

use std::fmt::Write;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

/// Multi-series line chart with linear axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_min, x_max) = bounds(all.iter().map(|p| p.0));
    let (y_min, y_max) = bounds(all.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min).max(1e-12) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_min) / (y_max - y_min).max(1e-12) * (H - 2.0 * MARGIN);

    let mut svg = header(title);
    axes(&mut svg, x_label, y_label, x_min, x_max, y_min, y_max, &sx, &sy);
    for (i, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            s.color,
            path.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                sx(x),
                sy(y),
                s.color
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.0}" y="{:.0}" font-size="13" fill="{}">{}</text>"#,
            W - MARGIN - 150.0,
            MARGIN + 18.0 * (i + 1) as f64,
            s.color,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Fixed-width histogram of values in [0, 1].
pub fn histogram(title: &str, x_label: &str, values: &[f64], n_bins: usize) -> String {
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let b = ((v * n_bins as f64) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let max_count = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let bar_w = (W - 2.0 * MARGIN) / n_bins as f64;

    let mut svg = header(title);
    let sy = |c: f64| H - MARGIN - c / max_count * (H - 2.0 * MARGIN);
    for (i, &c) in counts.iter().enumerate() {
        let x = MARGIN + i as f64 * bar_w;
        let y = sy(c as f64);
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4878cf" stroke="white"/>"##,
            x,
            y,
            bar_w,
            H - MARGIN - y
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.0}" y="{:.0}" font-size="11" text-anchor="middle">{:.2}</text>"#,
            MARGIN + v * (W - 2.0 * MARGIN),
            H - MARGIN + 16.0,
            v
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.0}" y="{:.0}" font-size="13" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 14.0,
        x_label
    );
    svg.push_str("</svg>\n");
    svg
}

fn header(title: &str) -> String {
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" "#,
            r#"viewBox="0 0 {w} {h}">"#,
            "\n",
            r#"<rect width="{w}" height="{h}" fill="white"/>"#,
            "\n",
            r#"<text x="{cx}" y="26" font-size="16" text-anchor="middle">{title}</text>"#,
            "\n"
        ),
        w = W,
        h = H,
        cx = W / 2.0,
        title = title
    )
}

#[allow(clippy::too_many_arguments)]
fn axes(
    svg: &mut String,
    x_label: &str,
    y_label: &str,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    sx: &dyn Fn(f64) -> f64,
    sy: &dyn Fn(f64) -> f64,
) {
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN
    );
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.0}" y="{:.0}" font-size="11" text-anchor="middle">{:.2}</text>"#,
            sx(fx),
            H - MARGIN + 16.0,
            fx
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.0}" y="{:.0}" font-size="11" text-anchor="end">{:.2}</text>"#,
            MARGIN - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.0}" y="{:.0}" font-size="13" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 14.0,
        x_label
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.0}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.0})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        y_label
    );
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
