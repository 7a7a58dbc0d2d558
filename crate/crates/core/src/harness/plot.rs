//! Standalone SVG learning curves: one panel per phase, one polyline per
//! iteration. Output contains no timing data, so it is reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, Phase};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    Accuracy,
    Loss,
    Both,
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const LEGEND_H: f64 = 28.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Per phase, per iteration: `(generation, value)` points averaged over the
/// two paths evaluated in each generation.
type Series = BTreeMap<Phase, BTreeMap<usize, Vec<(f64, f64)>>>;

fn collect(records: &[MetricsRecord], value: impl Fn(&MetricsRecord) -> f64) -> Series {
    let mut sums: BTreeMap<(Phase, usize, u64), (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_summary()) {
        let e = sums.entry((r.phase, r.iteration, r.generation)).or_insert((0.0, 0));
        e.0 += value(r);
        e.1 += 1;
    }
    let mut series: Series = BTreeMap::new();
    for ((phase, it, gen), (total, n)) in sums {
        series
            .entry(phase)
            .or_default()
            .entry(it)
            .or_default()
            .push((gen as f64, total / n as f64));
    }
    series
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn panel(out: &mut String, x0: f64, y0: f64, title: &str, curves: &BTreeMap<usize, Vec<(f64, f64)>>, y_max: f64) {
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let x_max = curves
        .values()
        .flat_map(|pts| pts.iter().map(|p| p.0))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let px = |x: f64| x0 + MARGIN_L + plot_w * x / x_max;
    let py = |y: f64| y0 + MARGIN_T + plot_h * (1.0 - y / y_max);

    let _ = writeln!(
        out,
        r#"<g class="panel"><text x="{}" y="{}" text-anchor="middle" font-size="13" font-weight="bold">{}</text>"#,
        fmt(x0 + PANEL_W / 2.0),
        fmt(y0 + 18.0),
        escape(title)
    );
    // Axes.
    let _ = writeln!(
        out,
        r#"<polyline points="{},{} {},{} {},{}" fill="none" stroke="black" stroke-width="1"/>"#,
        fmt(px(0.0)),
        fmt(py(y_max)),
        fmt(px(0.0)),
        fmt(py(0.0)),
        fmt(px(x_max)),
        fmt(py(0.0))
    );
    for i in 0..=4 {
        let y = y_max * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/><text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
            fmt(px(0.0) - 4.0),
            fmt(py(y)),
            fmt(px(0.0)),
            fmt(py(y)),
            fmt(px(0.0) - 6.0),
            fmt(py(y) + 3.0),
            tick_label(y)
        );
    }
    for i in 0..=4 {
        let x = (x_max * i as f64 / 4.0).round();
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/><text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            fmt(px(x)),
            fmt(py(0.0)),
            fmt(px(x)),
            fmt(py(0.0) + 4.0),
            fmt(px(x)),
            fmt(py(0.0) + 15.0),
            tick_label(x)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">generation</text>"#,
        fmt(px(x_max / 2.0)),
        fmt(y0 + PANEL_H - 8.0)
    );
    for (k, (iteration, pts)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if pts.len() == 1 {
            let _ = writeln!(
                out,
                r#"<circle class="iteration-{iteration}" cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                fmt(px(pts[0].0)),
                fmt(py(pts[0].1.min(y_max)))
            );
        } else {
            let points: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y.min(y_max)))))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline class="iteration-{iteration}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                points.join(" ")
            );
        }
    }
    let _ = writeln!(out, "</g>");
}

/// Renders the log as an SVG document.
pub fn render_curves(records: &[MetricsRecord], kind: CurveKind) -> Result<String> {
    if records.iter().all(|r| r.is_summary()) {
        return Err(Error::Validation("no path evaluations to plot".into()));
    }
    let mut rows: Vec<(&str, Series, f64)> = Vec::new();
    if matches!(kind, CurveKind::Accuracy | CurveKind::Both) {
        rows.push(("training accuracy", collect(records, |r| r.fitness), 1.0));
    }
    if matches!(kind, CurveKind::Loss | CurveKind::Both) {
        let loss = collect(records, |r| r.mean_train_loss);
        let top = loss
            .values()
            .flat_map(|c| c.values().flatten().map(|p| p.1))
            .fold(0.0f64, f64::max);
        let y_max = if top > 0.0 { (top * 4.0).ceil() / 4.0 } else { 1.0 };
        rows.push(("training loss", loss, y_max));
    }
    let phases: Vec<Phase> = Phase::ALL
        .into_iter()
        .filter(|p| rows[0].1.contains_key(p))
        .collect();
    let iterations: Vec<usize> = {
        let mut its: Vec<usize> = records.iter().filter(|r| !r.is_summary()).map(|r| r.iteration).collect();
        its.sort_unstable();
        its.dedup();
        its
    };
    let width = PANEL_W * phases.len() as f64;
    let height = PANEL_H * rows.len() as f64 + LEGEND_H;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif">"#,
        fmt(width),
        fmt(height),
        fmt(width),
        fmt(height)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (r, (label, series, y_max)) in rows.iter().enumerate() {
        for (c, phase) in phases.iter().enumerate() {
            let empty = BTreeMap::new();
            let curves = series.get(phase).unwrap_or(&empty);
            panel(
                &mut out,
                PANEL_W * c as f64,
                PANEL_H * r as f64,
                &format!("{phase}: {label}"),
                curves,
                *y_max,
            );
        }
    }
    // Legend: colours follow iteration order within each panel.
    let legend_y = PANEL_H * rows.len() as f64 + 16.0;
    let _ = writeln!(out, r#"<g class="legend">"#);
    for (k, it) in iterations.iter().enumerate() {
        let x = 12.0 + 110.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="14" height="4" fill="{}"/><text x="{}" y="{}" font-size="11">iteration {it}</text>"#,
            fmt(x),
            fmt(legend_y - 4.0),
            PALETTE[k % PALETTE.len()],
            fmt(x + 18.0),
            fmt(legend_y)
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_curves_to_file(records: &[MetricsRecord], kind: CurveKind, path: impl AsRef<Path>) -> Result<()> {
    let svg = render_curves(records, kind)?;
    super::write_atomic(path.as_ref(), svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::Genotype;

    fn row(phase: Phase, iteration: usize, generation: u64, path: u8, fitness: f64) -> MetricsRecord {
        MetricsRecord {
            phase,
            iteration,
            generation,
            path_index: Some(path),
            genotype: "0:1|1:2".parse::<Genotype>().unwrap(),
            fitness,
            mean_train_loss: 2.0 - fitness,
            eval_accuracy: None,
            wallclock_ms: Some(17),
            seed: 0,
        }
    }

    #[test]
    fn single_point_is_a_marker() {
        let svg = render_curves(&[row(Phase::Source, 1, 0, 0, 0.5)], CurveKind::Accuracy).unwrap();
        assert!(svg.contains("<circle class=\"iteration-1\""));
        assert!(!svg.contains("<polyline class="));
        roxmltree::Document::parse(&svg).unwrap();
    }

    #[test]
    fn empty_is_an_error() {
        assert!(render_curves(&[], CurveKind::Both).is_err());
    }

    #[test]
    fn four_iterations_four_curves_per_panel() {
        let mut rows = Vec::new();
        for it in 1..=4 {
            for phase in [Phase::Source, Phase::Destination] {
                for g in 0..5 {
                    rows.push(row(phase, it, g, 0, 0.1 * g as f64));
                    rows.push(row(phase, it, g, 1, 0.05 * g as f64));
                }
            }
        }
        let svg = render_curves(&rows, CurveKind::Both).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let panels: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("panel")).collect();
        assert_eq!(panels.len(), 4);
        for p in panels {
            let curves = p
                .descendants()
                .filter(|n| n.attribute("class").is_some_and(|c| c.starts_with("iteration-")))
                .count();
            assert_eq!(curves, 4);
        }
        for r in &mut rows {
            r.wallclock_ms = Some(98_765);
        }
        assert_eq!(render_curves(&rows, CurveKind::Both).unwrap(), svg, "wallclock must not affect the SVG");
    }
}
