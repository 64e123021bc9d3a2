//! Static SVG charts: skill score against threshold, one panel per lead
//! hour, and the performance diagram (POD against success ratio with CSI
//! contours and bias rays).

use std::fmt::Write as _;

use nowcast::metrics::VerificationReport;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const PANEL: f64 = 260.0;
const MARGIN: f64 = 48.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Score {
    Csi,
    Hss,
}

impl Score {
    fn label(self) -> &'static str {
        match self {
            Score::Csi => "CSI",
            Score::Hss => "HSS",
        }
    }
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
}

fn legend(out: &mut String, reports: &[VerificationReport], x: f64, y: f64) {
    for (i, r) in reports.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{yy}" x2="{}" y2="{yy}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 18.0,
            color(i),
            x + 24.0,
            yy + 4.0,
            escape(&r.model)
        );
    }
}

/// One panel per hour of the first report; thresholds are spaced evenly on
/// the x axis.
pub fn threshold_svg(reports: &[VerificationReport], score: Score) -> String {
    let hours: Vec<usize> = reports
        .first()
        .map(|r| r.hours.iter().map(|h| h.hour).collect())
        .unwrap_or_default();
    let thresholds: Vec<f64> = reports
        .first()
        .and_then(|r| r.hours.first())
        .map(|h| h.thresholds.iter().map(|t| t.threshold).collect())
        .unwrap_or_default();
    let pick = |r: &VerificationReport, hour: usize| -> Vec<Option<f64>> {
        r.hour(hour).map_or_else(Vec::new, |h| {
            h.thresholds
                .iter()
                .map(|t| match score {
                    Score::Csi => t.csi,
                    Score::Hss => t.hss,
                })
                .collect()
        })
    };
    let lo = reports
        .iter()
        .flat_map(|r| hours.iter().flat_map(move |&h| pick(r, h)))
        .flatten()
        .fold(0.0_f64, f64::min)
        .max(-1.0);
    let (y0, y1) = (if lo < 0.0 { (lo * 10.0).floor() / 10.0 } else { 0.0 }, 1.0);

    let width = MARGIN + hours.len().max(1) as f64 * (PANEL + MARGIN) + 160.0;
    let height = PANEL + 2.0 * MARGIN;
    let mut out = String::new();
    header(&mut out, width, height);
    let n = thresholds.len().max(2) - 1;
    for (p, &hour) in hours.iter().enumerate() {
        let left = MARGIN + p as f64 * (PANEL + MARGIN);
        let top = MARGIN;
        let sx = |i: usize| left + PANEL * i as f64 / n as f64;
        let sy = |v: f64| top + PANEL * (1.0 - (v - y0) / (y1 - y0));
        let _ = writeln!(
            out,
            r#"<rect x="{left}" y="{top}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{} H{hour}</text>"#,
            left + PANEL / 2.0,
            top - 10.0,
            score.label()
        );
        for k in 0..=((y1 - y0) * 5.0).round() as usize {
            let v = y0 + k as f64 * 0.2;
            let _ = writeln!(
                out,
                r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
                left + PANEL,
                left - 4.0,
                sy(v) + 4.0,
                y = sy(v)
            );
        }
        for (i, t) in thresholds.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#,
                sx(i),
                top + PANEL + 14.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">threshold (mm/hr)</text>"#,
            left + PANEL / 2.0,
            top + PANEL + 30.0
        );
        for (m, r) in reports.iter().enumerate() {
            let mut path = String::new();
            let mut pen_down = false;
            for (i, v) in pick(r, hour).into_iter().enumerate() {
                match v {
                    Some(v) => {
                        let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(i), sy(v));
                        pen_down = true;
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
                            sx(i),
                            sy(v),
                            color(m)
                        );
                    }
                    None => pen_down = false,
                }
            }
            if !path.is_empty() {
                let _ = writeln!(
                    out,
                    r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                    path.trim_end(),
                    color(m)
                );
            }
        }
    }
    legend(&mut out, reports, width - 150.0, MARGIN + 10.0);
    out.push_str("</svg>\n");
    out
}

/// Performance diagram of every report's first hour: success ratio on x,
/// probability of detection on y, one polyline per model through its
/// thresholds. Undefined points are left out.
pub fn performance_svg(reports: &[VerificationReport]) -> String {
    let size = 360.0;
    let (left, top) = (MARGIN + 10.0, MARGIN);
    let width = left + size + 200.0;
    let height = top + size + MARGIN;
    let sx = |v: f64| left + size * v;
    let sy = |v: f64| top + size * (1.0 - v);
    let mut out = String::new();
    header(&mut out, width, height);

    // CSI contours: POD = 1 / (1/CSI + 1 - 1/SR), defined where SR > CSI.
    for k in 1..10 {
        let c = k as f64 / 10.0;
        let mut path = String::new();
        for j in 0..=200 {
            let sr = c + (1.0 - c) * j as f64 / 200.0;
            let denom = 1.0 / c + 1.0 - 1.0 / sr;
            let pod = 1.0 / denom;
            if !(0.0..=1.0).contains(&pod) {
                continue;
            }
            let _ = write!(path, "{}{:.2},{:.2} ", if path.is_empty() { "M" } else { "L" }, sx(sr), sy(pod));
        }
        let _ = writeln!(out, r##"<path d="{}" fill="none" stroke="#bbb"/>"##, path.trim_end());
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" fill="#888" font-size="9">{c:.1}</text>"##,
            sx(1.0) - 16.0,
            sy(c) + 10.0
        );
    }
    // Bias rays: POD = bias * SR.
    for b in [0.3, 0.5, 0.8, 1.0, 1.3, 1.5, 2.0, 3.0, 5.0] {
        let (x, y) = if b >= 1.0 { (1.0 / b, 1.0) } else { (1.0, b) };
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.2}" fill="#666" font-size="9">{b}</text>"##,
            sx(0.0),
            sy(0.0),
            sx(x),
            sy(y),
            sx(x) + 2.0,
            sy(y) - 2.0
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{v:.1}</text><text x="{}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            sx(v),
            top + size + 14.0,
            left - 4.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">success ratio (1 - FAR)</text><text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">probability of detection</text>"#,
        left + size / 2.0,
        top + size + 32.0,
        left - 30.0,
        top + size / 2.0,
        left - 30.0,
        top + size / 2.0
    );
    let hour = reports.first().and_then(|r| r.hours.first()).map_or(0, |h| h.hour);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">Performance diagram H{hour}</text>"#,
        left + size / 2.0,
        top - 14.0
    );
    for (m, r) in reports.iter().enumerate() {
        let mut path = String::new();
        for row in r.perf_rows(hour) {
            let (Some(pod), Some(sr)) = (row.pod, row.sr) else {
                continue;
            };
            let _ = write!(path, "{}{:.2},{:.2} ", if path.is_empty() { "M" } else { "L" }, sx(sr), sy(pod));
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="8">{}</text>"#,
                sx(sr),
                sy(pod),
                color(m),
                sx(sr) + 4.0,
                sy(pod) - 3.0,
                row.threshold
            );
        }
        if !path.is_empty() {
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                path.trim_end(),
                color(m)
            );
        }
    }
    legend(&mut out, reports, left + size + 20.0, top + 10.0);
    out.push_str("</svg>\n");
    out
}
