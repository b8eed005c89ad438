//! Minimal SVG fan charts: 5-95% and 25-75% bands plus the median.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `series[p][k]` is path `p` at time `times[k]`.
pub fn fan_chart(title: &str, times: &[f64], series: &[Vec<f64>]) -> String {
    let qs = [0.05, 0.25, 0.5, 0.75, 0.95];
    let bands: Vec<[f64; 5]> = (0..times.len())
        .map(|k| {
            let mut col: Vec<f64> = series.iter().map(|s| s[k]).filter(|v| v.is_finite()).collect();
            col.sort_by(f64::total_cmp);
            if col.is_empty() {
                return [0.0; 5];
            }
            qs.map(|q| quantile(&col, q))
        })
        .collect();
    let (t0, t1) = (times[0], *times.last().unwrap());
    let lo = bands.iter().map(|b| b[0]).fold(f64::INFINITY, f64::min);
    let hi = bands.iter().map(|b| b[4]).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |t: f64| PAD + (t - t0) / (t1 - t0).max(1e-300) * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - (v - lo) / span * (H - 2.0 * PAD);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#);
    let _ = writeln!(
        out,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (lower, upper, fill) in [(0, 4, "#c6dbef"), (1, 3, "#6baed6")] {
        let mut pts = String::new();
        for (k, b) in bands.iter().enumerate() {
            let _ = write!(pts, "{:.2},{:.2} ", x(times[k]), y(b[upper]));
        }
        for (k, b) in bands.iter().enumerate().rev() {
            let _ = write!(pts, "{:.2},{:.2} ", x(times[k]), y(b[lower]));
        }
        let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}" stroke="none"/>"#, pts.trim_end());
    }
    let mut med = String::new();
    for (k, b) in bands.iter().enumerate() {
        let _ = write!(med, "{:.2},{:.2} ", x(times[k]), y(b[2]));
    }
    let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#08306b" stroke-width="1.5"/>"##, med.trim_end());
    for (v, label) in [(lo, lo), (hi, hi)] {
        let _ = writeln!(out, r#"<text x="4" y="{:.2}" font-family="sans-serif" font-size="10">{label:.3}</text>"#, y(v));
    }
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="10">t = {t0}</text>"#, H - 20.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10">t = {t1}</text>"#, W - PAD - 40.0, H - 20.0);
    out.push_str("</svg>\n");
    out
}
