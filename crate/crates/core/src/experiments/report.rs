//! Report artifacts: per-run CSV, JSON report and a self-contained SVG boxplot.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::summary::FiveNumber;
use super::synthetic::{ExperimentReport, RunRecord};

/// One row per (run, kernel), header first.
pub fn records_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_records_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

/// A labelled five-number summary.
pub struct BoxGroup<'a> {
    pub label: &'a str,
    pub stats: FiveNumber,
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

/// Vertical boxplots, whiskers at min and max. Non-finite values are clamped to the
/// plotted range.
pub fn boxplot_svg(title: &str, y_label: &str, groups: &[BoxGroup]) -> String {
    let finite = groups
        .iter()
        .flat_map(|g| [g.stats.min, g.stats.max, g.stats.q1, g.stats.q3])
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 100.0);
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let y = |v: f64| {
        let v = if v.is_finite() { v.clamp(lo, hi) } else if v > 0.0 { hi } else { lo };
        MARGIN + plot_h * (hi - v) / (hi - lo)
    };
    let slot = (WIDTH - 2.0 * MARGIN) / groups.len().max(1) as f64;
    let half = 0.25 * slot;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{MARGIN}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            MARGIN - 4.0,
            MARGIN - 6.0,
            y(v) + 4.0,
            y = y(v)
        );
    }
    for (i, g) in groups.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        let st = &g.stats;
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(st.max),
            y(st.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(st.q1),
            y(st.min)
        );
        for v in [st.min, st.max] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(v),
                cx + half / 2.0,
                y(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.6" stroke="black"/>"#,
            cx - half,
            y(st.q3),
            2.0 * half,
            (y(st.q1) - y(st.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(st.median),
            cx + half,
            y(st.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 18.0,
            escape(g.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Boxplot of test Fit% per kernel.
pub fn experiment_svg(report: &ExperimentReport) -> String {
    let groups: Vec<BoxGroup> = report
        .summary
        .iter()
        .filter_map(|s| {
            s.test_fit.map(|stats| BoxGroup {
                label: s.kernel.name(),
                stats,
            })
        })
        .collect();
    boxplot_svg(
        &format!("Experiment {}: test Fit% over {} runs", report.config.id, report.config.runs),
        "Fit%",
        &groups,
    )
}

/// Writes `runs.csv`, `report.json` and `boxplot.svg` into `dir`.
pub fn write_experiment(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
    };
    write("runs.csv", records_csv(&report.records)?)?;
    write("report.json", report_json(report)?)?;
    write("boxplot.svg", experiment_svg(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperopt::KernelKind;

    fn record(run: usize, kernel: KernelKind, fit: Option<f64>) -> RunRecord {
        RunRecord {
            run,
            seed: run as u64,
            kernel,
            train_fit: fit,
            test_fit: fit,
            test_rmse: fit.map(|f| 100.0 - f),
            noise_std: Some(4.0),
            iterations: 3,
            final_loss: Some(-1.5),
            converged: true,
            error: if fit.is_none() { Some("ill-conditioned, gave up".into()) } else { None },
        }
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![
            record(0, KernelKind::Pk, Some(91.25)),
            record(0, KernelKind::Mpk, None),
            record(1, KernelKind::Pk, Some(0.1 + 0.2)),
        ];
        let text = records_csv(&recs).unwrap();
        assert!(text.starts_with("run,seed,kernel,train_fit,test_fit"));
        assert_eq!(parse_records_csv(&text).unwrap(), recs);
    }

    #[test]
    fn svg_is_self_contained() {
        let stats = FiveNumber {
            min: 80.0,
            q1: 85.0,
            median: 90.0,
            q3: 95.0,
            max: 99.0,
        };
        let svg = boxplot_svg(
            "a < b",
            "Fit%",
            &[BoxGroup { label: "pk", stats }, BoxGroup { label: "mpk", stats }],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("href"));
        assert_eq!(svg.matches("<rect").count(), 3);
    }
}
