//! Minimal self-contained SVG charts: density bars per method with the
//! ground-truth density drawn as a line on top.

use std::fmt::Write as _;

use shadowgraph::evalx::Histogram;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#4a7ab5", "#d9822b", "#5aa469", "#9b59b6"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of `bars` (one color per series) with an optional reference
/// line. All histograms must share a bin width.
pub fn density_chart(title: &str, x_label: &str, bars: &[(&str, &Histogram)], line: Option<(&str, &Histogram)>) -> String {
    let all: Vec<&Histogram> = bars.iter().map(|b| b.1).chain(line.map(|l| l.1)).collect();
    let width = all.first().map_or(1.0, |h| h.width);
    let nonempty = all.iter().filter(|h| !h.counts.is_empty());
    let lo = nonempty.clone().map(|h| h.first).min().unwrap_or(0);
    let hi = nonempty.map(|h| h.first + h.counts.len() as i64).max().unwrap_or(1).max(lo + 1);
    let ymax = all
        .iter()
        .flat_map(|h| (lo..hi).map(|k| h.density_at(k)))
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.1;

    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let nbins = (hi - lo) as f64;
    let bin_px = pw / nbins;
    let x_of = |k: f64| LEFT + (k - lo as f64) * bin_px;
    let y_of = |d: f64| TOP + ph - d / ymax * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="16" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, escape(title));

    let n = bars.len().max(1) as f64;
    for (si, (_, h)) in bars.iter().enumerate() {
        let bw = bin_px * 0.8 / n;
        for k in lo..hi {
            let d = h.density_at(k);
            if d <= 0.0 {
                continue;
            }
            let x = x_of(k as f64) + bin_px * 0.1 + si as f64 * bw;
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{x:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                y_of(d),
                TOP + ph - y_of(d),
                COLORS[si % COLORS.len()]
            );
        }
    }
    if let Some((_, h)) = line {
        let pts: Vec<String> = (lo..hi)
            .map(|k| format!("{:.2},{:.2}", x_of(k as f64 + 0.5), y_of(h.density_at(k))))
            .collect();
        let _ = writeln!(s, r#"<polyline class="reference" points="{}" fill="none" stroke="black" stroke-width="2"/>"#, pts.join(" "));
    }

    // Axes, ticks and labels.
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + ph);
    let step = ((nbins / 10.0).ceil() as i64).max(1);
    for k in (lo..=hi).step_by(step as usize) {
        let x = x_of(k as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            TOP + ph + 16.0,
            fmt_tick(k as f64 * width)
        );
    }
    for i in 0..=4 {
        let d = ymax / 1.1 * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end" font-family="sans-serif">{}</text>"#,
            LEFT - 6.0,
            y_of(d) + 4.0,
            fmt_tick(d)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="16" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 16 {})">density</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);

    // Legend.
    let mut ly = TOP + 8.0;
    for (si, (name, _)) in bars.iter().enumerate() {
        let _ = writeln!(s, r#"<rect x="{}" y="{ly}" width="12" height="12" fill="{}"/>"#, W - 170.0, COLORS[si % COLORS.len()]);
        let _ = writeln!(s, r#"<text class="legend" x="{}" y="{}" font-size="12" font-family="sans-serif">{}</text>"#, W - 152.0, ly + 10.0, escape(name));
        ly += 18.0;
    }
    if let Some((name, _)) = line {
        let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="2"/>"#, W - 170.0, ly + 6.0, W - 158.0, ly + 6.0);
        let _ = writeln!(s, r#"<text class="legend" x="{}" y="{}" font-size="12" font-family="sans-serif">{}</text>"#, W - 152.0, ly + 10.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == r.trunc() {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_structure() {
        let a = Histogram::build([3.2, 3.7, 4.1, 5.5], 1.0);
        let g = Histogram::build([3.0, 4.0, 4.5, 5.0, 6.2], 1.0);
        let svg = density_chart("Size <r_eq>", "r_eq (px)", &[("learned", &a)], Some(("ground truth", &g)));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"class="bar""#).count(), 3);
        assert_eq!(svg.matches(r#"class="reference""#).count(), 1);
        assert_eq!(svg.matches(r#"class="legend""#).count(), 2);
        assert!(svg.contains("Size &lt;r_eq&gt;"));
    }

    #[test]
    fn empty_histograms_still_render() {
        let e = Histogram::build(std::iter::empty(), 1.0);
        let svg = density_chart("t", "x", &[("a", &e)], None);
        assert!(svg.contains("</svg>"));
        assert!(!svg.contains("NaN"));
    }
}
