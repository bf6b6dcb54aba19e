//! Deterministic SVG charts of a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use opdlab_core::ReferenceRole;

use crate::error::{HarnessError, Result};
use crate::summary::{load_run, ArmResult, Spread};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub line: bool,
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        let pad = if lo.abs() < 1e-9 { 0.5 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Chart {
    pub fn point_count(&self) -> usize {
        self.series.iter().map(|s| s.points.len()).sum()
    }

    pub fn render(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter().copied());
        let (x0, x1) = range(pts().map(|p| p.0));
        let (y0, y1) = range(pts().map(|p| p.1));
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let _ = writeln!(
                s,
                r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#ddd"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4:.3}</text>"##,
                sx(xv),
                MARGIN_TOP,
                MARGIN_TOP + ph,
                MARGIN_TOP + ph + 16.0,
                xv
            );
            let _ = writeln!(
                s,
                r##"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="#ddd"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5:.3}</text>"##,
                MARGIN_LEFT,
                sy(yv),
                MARGIN_LEFT + pw,
                MARGIN_LEFT - 6.0,
                sy(yv) + 4.0,
                yv
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if series.line && series.points.len() > 1 {
                let path: Vec<String> = series
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            for &(x, y) in &series.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"><title>{}: ({x:.4}, {y:.4})</title></circle>"#,
                    sx(x),
                    sy(y),
                    escape(&series.name)
                );
            }
            let ly = MARGIN_TOP + 8.0 + 16.0 * i as f64;
            let lx = MARGIN_LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                ly - 8.0,
                lx + 14.0,
                ly + 1.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn median(values: &[f64]) -> f64 {
    Spread::of(values).expect("non-empty").median
}

/// Median final accuracy per λ, one series per domain, over single-domain
/// arms with the plain student-base reference.
pub fn accuracy_vs_lambda(results: &[ArmResult]) -> Option<Chart> {
    let mut by_domain: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for r in results {
        let Some(lambda) = r.record.lambda else { continue };
        let plain = r.record.reference == Some(ReferenceRole::StudentBase) && !r.record.correction;
        if r.record.domains.len() != 1 || !plain {
            continue;
        }
        for (domain, row) in r.finals() {
            by_domain
                .entry(domain.to_string())
                .or_default()
                .entry(lambda.to_bits())
                .or_insert((lambda, Vec::new()))
                .1
                .push(row.eval_accuracy);
        }
    }
    if by_domain.is_empty() {
        return None;
    }
    let series = by_domain
        .into_iter()
        .map(|(domain, points)| {
            let mut pts: Vec<(f64, f64)> = points.into_values().map(|(l, v)| (l, median(&v))).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                name: domain,
                points: pts,
                line: true,
            }
        })
        .collect();
    Some(Chart {
        title: "Eval accuracy vs reward scale".into(),
        x_label: "λ (reward scale)".into(),
        y_label: "eval accuracy (median over seeds)".into(),
        series,
    })
}

/// One point per (arm, domain): median final accuracy against median length.
pub fn length_vs_accuracy(results: &[ArmResult]) -> Chart {
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in results {
        for (domain, row) in r.finals() {
            let g = groups.entry((domain.to_string(), r.record.arm.clone())).or_default();
            g.0.push(row.eval_accuracy);
            g.1.push(row.mean_length);
        }
    }
    let mut by_domain: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((domain, _), (acc, len)) in groups {
        by_domain.entry(domain).or_default().push((median(&acc), median(&len)));
    }
    Chart {
        title: "Response length vs accuracy".into(),
        x_label: "eval accuracy".into(),
        y_label: "mean response length".into(),
        series: by_domain
            .into_iter()
            .map(|(name, points)| Series {
                name,
                points,
                line: false,
            })
            .collect(),
    }
}

/// Median eval accuracy against optimizer updates, one series per (arm, domain).
pub fn training_curves(results: &[ArmResult]) -> Chart {
    let mut groups: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in results {
        let multi = r.record.domains.len() > 1;
        for row in &r.rows {
            let name = if multi {
                format!("{}/{}", r.record.arm, row.domain)
            } else {
                r.record.arm.clone()
            };
            groups
                .entry(name)
                .or_default()
                .entry(row.step)
                .or_default()
                .push(row.eval_accuracy);
        }
    }
    Chart {
        title: "Eval accuracy during training".into(),
        x_label: "optimizer updates".into(),
        y_label: "eval accuracy (median over seeds)".into(),
        series: groups
            .into_iter()
            .map(|(name, steps)| Series {
                name,
                points: steps.into_iter().map(|(s, v)| (s as f64, median(&v))).collect(),
                line: true,
            })
            .collect(),
    }
}

/// Writes every applicable chart under `<run_dir>/plots/`.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let results = load_run(run_dir)?;
    if results.iter().all(|r| r.rows.is_empty()) {
        return Err(HarnessError::EmptyPlot(format!(
            "{} has no metrics rows",
            run_dir.display()
        )));
    }
    let dir = run_dir.join("plots");
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut charts = Vec::new();
    if let Some(c) = accuracy_vs_lambda(&results) {
        charts.push(("accuracy_vs_lambda.svg", c));
    }
    charts.push(("length_vs_accuracy.svg", length_vs_accuracy(&results)));
    charts.push(("training_curves.svg", training_curves(&results)));
    let mut written = Vec::new();
    for (file, chart) in charts {
        let path = dir.join(file);
        std::fs::write(&path, chart.render()).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_counts_points() {
        let chart = Chart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                name: "a<b".into(),
                points: vec![(0.0, 0.1), (1.0, 0.2)],
                line: true,
            }],
        };
        let a = chart.render();
        assert_eq!(a, chart.render());
        assert_eq!(a.matches("<circle").count(), chart.point_count());
        assert!(a.contains("a&lt;b"));
    }

    #[test]
    fn single_point_has_a_valid_range() {
        let (lo, hi) = range([0.5].into_iter());
        assert!(lo < 0.5 && hi > 0.5);
    }
}
