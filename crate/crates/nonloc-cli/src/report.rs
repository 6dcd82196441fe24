//! Report files: a per-scale CSV, a one-line summary CSV, and a JSON-lines
//! stream. Rendering is pure string building over shortest round-trip float
//! formatting, so a rerun of the same scenario writes identical bytes.

use std::path::Path;

use crate::error::Result;
use crate::scenario::RunReport;

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn render_report_csv(report: &RunReport) -> String {
    let mut out = String::from("delta,value,stderr,n_samples\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt(row.delta),
            fmt(row.value),
            fmt(row.stderr),
            row.n_samples
        ));
    }
    out
}

pub fn render_summary_csv(report: &RunReport) -> String {
    format!(
        "predicted,extrapolated,rel_dev,verdict,fingerprint\n{},{},{},{},{}\n",
        fmt(report.predicted),
        fmt(report.extrapolated),
        fmt(report.rel_dev),
        if report.pass { "pass" } else { "fail" },
        report.fingerprint
    )
}

pub fn render_jsonl(report: &RunReport) -> String {
    let mut out = String::new();
    let full_support = report.family == "rho0";
    for row in &report.rows {
        let mut object = serde_json::json!({
            "delta": row.delta,
            "value": row.value,
            "stderr": row.stderr,
            "n_samples": row.n_samples,
        });
        let entries = object.as_object_mut().expect("built as an object");
        if full_support {
            // the complementary exponent the full-support kernel is indexed
            // by in closed forms
            entries.insert("s".into(), serde_json::json!(1.0 - row.delta));
        }
        if let Some(ratio) = row.cheeger_ratio {
            entries.insert("cheeger_ratio".into(), serde_json::json!(ratio));
        }
        out.push_str(&serde_json::to_string(&object).expect("rows serialize"));
        out.push('\n');
    }
    let summary = serde_json::json!({
        "extrapolated": report.extrapolated,
        "uncertainty": report.uncertainty,
        "predicted": report.predicted,
        "rel_dev": report.rel_dev,
        "verdict": if report.pass { "pass" } else { "fail" },
        "fingerprint": report.fingerprint,
        "version": report.version,
    });
    out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
    out.push('\n');
    out
}

/// Writes `report.csv`, `summary.csv`, and `report.jsonl` under `dir`,
/// creating it first. Any filesystem refusal surfaces as an error (exit 2
/// at the command level).
pub fn emit(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), render_report_csv(report))?;
    std::fs::write(dir.join("summary.csv"), render_summary_csv(report))?;
    std::fs::write(dir.join("report.jsonl"), render_jsonl(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::DeltaRow;

    fn sample_report(family: &str) -> RunReport {
        RunReport {
            family: family.to_string(),
            rows: vec![
                DeltaRow {
                    delta: 0.08,
                    value: 0.32,
                    stderr: 0.0,
                    n_samples: 0,
                    cheeger_ratio: Some(0.32),
                },
                DeltaRow {
                    delta: 0.04,
                    value: 0.33,
                    stderr: 0.0,
                    n_samples: 0,
                    cheeger_ratio: Some(0.33),
                },
            ],
            extrapolated: 1.0 / 3.0,
            uncertainty: 0.0,
            predicted: 1.0 / 3.0,
            rel_dev: 0.0,
            pass: true,
            fingerprint: "aa".repeat(32),
            version: "0.1.0",
            cheeger: Some(1.0),
        }
    }

    #[test]
    fn csv_columns_are_exact() {
        let report = sample_report("rho1");
        let csv = render_report_csv(&report);
        assert!(csv.starts_with("delta,value,stderr,n_samples\n"));
        assert!(csv.contains("0.08,0.32,0,0\n"));
        let summary = render_summary_csv(&report);
        assert!(summary.starts_with("predicted,extrapolated,rel_dev,verdict,fingerprint\n"));
        assert!(summary.contains(",pass,"));
    }

    #[test]
    fn jsonl_carries_the_complementary_exponent_only_for_the_full_support_kernel() {
        let with = render_jsonl(&sample_report("rho0"));
        assert!(with.lines().next().unwrap().contains("\"s\":0.92"));
        let without = render_jsonl(&sample_report("rho1"));
        assert!(!without.lines().next().unwrap().contains("\"s\""));
        // every line parses back
        for line in with.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let report = sample_report("rho0");
        assert_eq!(render_jsonl(&report), render_jsonl(&report));
        assert_eq!(render_report_csv(&report), render_report_csv(&report));
    }
}
