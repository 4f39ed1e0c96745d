//! Static SVG line chart of NE-gap and welfare against the iteration index.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn column(header: &[&str], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|c| *c == name)
        .ok_or_else(|| Error::Parse(format!("iterations CSV has no {name} column")))
}

type Series = Vec<(f64, f64)>;

/// `(t, ne_gap_total, welfare)` rows of an iterations CSV; NaN cells are dropped per series.
fn read_series(csv: &str) -> Result<(Series, Series)> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?.split(',').collect();
    let (ti, gi, wi) = (column(&header, "t")?, column(&header, "ne_gap_total")?, column(&header, "welfare")?);
    let mut gap = Vec::new();
    let mut welfare = Vec::new();
    for (k, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            cells
                .get(i)
                .and_then(|c| c.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("row {}: bad cell in column {}", k + 1, header[i])))
        };
        let t = get(ti)?;
        let (g, w) = (get(gi)?, get(wi)?);
        if g.is_finite() {
            gap.push((t, g));
        }
        if w.is_finite() {
            welfare.push((t, w));
        }
    }
    Ok((gap, welfare))
}

pub fn svg_from_csv(csv: &str) -> Result<String> {
    let (gap, welfare) = read_series(csv)?;
    let all = gap.iter().chain(&welfare);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<polyline points="{l},{t} {l},{b} {r},{b}" fill="none" stroke="black"/>"#);
    for (v, y) in [(y0, b), (y1, t)] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{v:.3}</text>"#, l - 4.0, y + 4.0);
    }
    for (v, x) in [(x0, l), (x1, r)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" font-size="11" text-anchor="middle">{v}</text>"#, b + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">iteration</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    for (k, (name, series, color)) in [("NE-gap", &gap, "#d62728"), ("welfare", &welfare, "#1f77b4")].into_iter().enumerate() {
        let pts: Vec<String> = series.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = t + 14.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-size="12" fill="{color}">{name}</text>"#, r - 60.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_two_series() {
        let csv = "t,eta,ne_gap_total,ne_gap_0,welfare,potential,q_err_max\n\
                   1,0.5,1.0,1.0,0.5,NaN,NaN\n2,0.5,0.25,0.25,0.9,NaN,NaN\n";
        let svg = svg_from_csv(csv).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("NE-gap") && svg.contains("welfare"));
        assert!(svg_from_csv("t,eta\n1,2\n").is_err());
        // header-only input still renders axes
        assert!(svg_from_csv("t,eta,ne_gap_total,welfare\n").unwrap().starts_with("<svg"));
    }
}
