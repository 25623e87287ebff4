//! Semilog BER chart as plain SVG.

use std::fmt::Write as _;
use std::io::Read;

use serde::Deserialize;

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(snr_db, ber)`, in file order.
    pub points: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct Row {
    scheme: String,
    user: usize,
    snr_db: f64,
    ber: f64,
}

/// Groups rows by `(scheme, user)` in order of first appearance. Extra
/// columns are ignored.
pub fn read_series(input: impl Read) -> Result<Vec<Series>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: Vec<(String, usize, Series)> = Vec::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let row = rec.map_err(|e| format!("row {}: {e}", i + 1))?;
        if !row.snr_db.is_finite() || !row.ber.is_finite() || row.ber < 0.0 {
            return Err(format!("row {}: snr_db and ber must be finite and ber nonnegative", i + 1));
        }
        let pos = match out.iter().position(|(s, u, _)| *s == row.scheme && *u == row.user) {
            Some(p) => p,
            None => {
                let label = format!("{} user {}", row.scheme, row.user);
                out.push((row.scheme.clone(), row.user, Series { label, points: Vec::new() }));
                out.len() - 1
            }
        };
        out[pos].2.points.push((row.snr_db, row.ber));
    }
    if out.is_empty() {
        return Err("no data rows".into());
    }
    Ok(out.into_iter().map(|(_, _, s)| s).collect())
}

/// Renders the series. Zero-BER points are left out of the lines since they
/// have no place on a log axis.
pub fn render(series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter().copied());
    let (mut x0, mut x1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(x), b.max(x)));
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let pos = || all().filter(|p| p.1 > 0.0).map(|p| p.1);
    let lo = pos().fold(f64::INFINITY, f64::min);
    let hi = pos().fold(f64::NEG_INFINITY, f64::max);
    let (d0, mut d1) = if lo.is_finite() {
        (lo.log10().floor() as i32, hi.log10().ceil() as i32)
    } else {
        (-6, 0)
    };
    if d1 == d0 {
        d1 += 1;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (d1 as f64 - y.log10()) / (d1 - d0) as f64 * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    for d in d0..=d1 {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (x, label) in x_ticks(x0, x1) {
        let xp = px(x);
        let _ = writeln!(
            s,
            r##"<line x1="{xp:.2}" y1="{TOP:.2}" x2="{xp:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{xp:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">SNR (dB)</text>"#,
        LEFT + pw / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">BER</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 26.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Round steps giving at most about ten ticks.
fn x_ticks(x0: f64, x1: f64) -> Vec<(f64, String)> {
    let raw = (x1 - x0) / 10.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut k = (x0 / step).ceil() as i64;
    while (k as f64) * step <= x1 + 1e-9 * step {
        let x = k as f64 * step;
        out.push((x, format!("{}", (x * 1e6).round() / 1e6)));
        k += 1;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_by_scheme_and_user() {
        let csv = "scheme,user,snr_db,ber\nt-noma,1,0,0.1\nt-noma,2,0,0.2\nt-noma,1,5,0.01\n";
        let s = read_series(csv.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].points, vec![(0.0, 0.1), (5.0, 0.01)]);
        assert_eq!(s[1].label, "t-noma user 2");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_series("scheme,user,snr_db,ber\n".as_bytes()).is_err());
        assert!(read_series("scheme,user,snr_db,ber\nt,1,x,0.1\n".as_bytes()).is_err());
        assert!(read_series("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_series("scheme,user,snr_db,ber\nt,1,0,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn ticks_are_round() {
        let t: Vec<String> = x_ticks(0.0, 60.0).into_iter().map(|p| p.1).collect();
        assert_eq!(t.first().unwrap(), "0");
        assert_eq!(t.last().unwrap(), "60");
        assert_eq!(t.len(), 7);
    }

    #[test]
    fn zero_ber_is_dropped_from_lines() {
        let s = vec![Series { label: "a".into(), points: vec![(0.0, 0.1), (10.0, 0.0)] }];
        let svg = render(&s);
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 1);
    }
}
