//! Result presentation and the APCER/HTER cross-consistency audit.
//!
//! Internally all rates are fractions; this module is the only place
//! percentages exist. Two presentations are supported: `ErrorRates`
//! (lower is better everywhere) and `Accuracy`, which prints
//! `100·(1 − APCER)` and `100·(1 − BPCER)` detection accuracies as in the
//! WUT-Ear benchmark tables while keeping HTER as an error.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};
use crate::metrics::MetricsReport;

/// Maximum |expected − reported| HTER residual, in percentage points,
/// accepted by [`audit_consistency`]. Absorbs two-decimal display rounding.
pub const AUDIT_TOLERANCE_PERCENT: f64 = 0.05;

/// Presentation style for [`render_tables`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableStyle {
    /// APCER/BPCER/HTER printed as percent errors.
    ErrorRates,
    /// APCER/BPCER printed as percent accuracies; HTER stays an error.
    Accuracy,
}

/// Text table plus CSV for one metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTables {
    pub text: String,
    pub csv: String,
}

/// Decimal rounding, half away from zero, to two places.
pub fn round_half_up_2(x: f64) -> f64 {
    (x * 100.0 + 0.5).floor() / 100.0
}

fn pct2(fraction: f64) -> String {
    format!("{:.2}", round_half_up_2(fraction * 100.0))
}

/// Renders a metrics report as an aligned text table and a CSV document.
///
/// The CSV always carries raw fractions (one row per PAIS plus one
/// bona-fide row); percent formatting appears only in the text table.
pub fn render_tables(report: &MetricsReport, style: TableStyle) -> RenderedTables {
    let (apcer_col, bpcer_col) = match style {
        TableStyle::ErrorRates => ("APCER (%)", "BPCER (%)"),
        TableStyle::Accuracy => ("APCER acc. (%)", "BPCER acc. (%)"),
    };

    let key_width = report
        .per_pais
        .keys()
        .map(|k| k.len())
        .chain(["bona fide".len()])
        .max()
        .unwrap_or(9)
        .max(4);

    let mut text = String::new();
    let _ = writeln!(text, "threshold tau: {}", report.tau);
    let _ = writeln!(
        text,
        "{:<key_width$}  {:>8}  {:>14}  {:>9}",
        "PAIS", "N", apcer_col, "HTER (%)"
    );
    for (abbr, m) in &report.per_pais {
        let apcer_display = match style {
            TableStyle::ErrorRates => pct2(m.apcer),
            TableStyle::Accuracy => pct2(1.0 - m.apcer),
        };
        let _ = writeln!(
            text,
            "{:<key_width$}  {:>8}  {:>14}  {:>9}",
            abbr,
            m.n_pais,
            apcer_display,
            pct2(m.hter)
        );
    }
    let bpcer_display = match style {
        TableStyle::ErrorRates => pct2(report.bpcer),
        TableStyle::Accuracy => pct2(1.0 - report.bpcer),
    };
    let _ = writeln!(
        text,
        "{:<key_width$}  {:>8}  {:>14}",
        "bona fide", report.n_bf, bpcer_display
    );
    let _ = writeln!(text, "{bpcer_col} shown on the bona fide row");
    let _ = writeln!(
        text,
        "worst-case APCER (%): {}",
        pct2(report.apcer_max)
    );

    let mut csv = String::from("kind,key,n,apcer,bpcer,hter\n");
    for (abbr, m) in &report.per_pais {
        let _ = writeln!(csv, "pais,{abbr},{},{},,{}", m.n_pais, m.apcer, m.hter);
    }
    let _ = writeln!(csv, "bonafide,,{},,{},", report.n_bf, report.bpcer);

    RenderedTables { text, csv }
}

/// One key's audit outcome: does `(100 − apcer_accuracy) / 2` (with
/// bona-fide error taken as zero) reproduce the reported HTER?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFinding {
    pub key: String,
    pub expected_hter: f64,
    pub reported_hter: f64,
    /// |expected − reported| in percentage points.
    pub residual: f64,
    pub pass: bool,
}

/// Cross-checks APCER-accuracy percentages against HTER percentages,
/// key by key. Both maps must cover exactly the same keys.
pub fn audit_consistency(
    apcer_accuracy: &BTreeMap<String, f64>,
    hter: &BTreeMap<String, f64>,
) -> Result<Vec<AuditFinding>> {
    let a_keys: Vec<&String> = apcer_accuracy.keys().collect();
    let h_keys: Vec<&String> = hter.keys().collect();
    if a_keys != h_keys {
        return Err(PadError::Domain(format!(
            "audit key sets differ: APCER has [{}], HTER has [{}]",
            a_keys.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            h_keys.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
        )));
    }
    let mut findings = Vec::new();
    for (key, acc) in apcer_accuracy {
        let reported = hter[key];
        let expected = (100.0 - acc) / 2.0;
        let residual = (expected - reported).abs();
        findings.push(AuditFinding {
            key: key.clone(),
            expected_hter: expected,
            reported_hter: reported,
            residual,
            pass: residual <= AUDIT_TOLERANCE_PERCENT,
        });
    }
    Ok(findings)
}

/// One row of the published WUT-Ear evaluation: APCER printed as a
/// detection accuracy and HTER printed as an error, both in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub pais: &'static str,
    pub method: &'static str,
    pub apcer_accuracy: f64,
    pub hter: f64,
}

/// The 14 published (PAIS × method) rows of the WUT-Ear evaluation.
pub fn reference_results() -> Vec<ReferenceRow> {
    const ROWS: [(&str, &str, f64, f64); 14] = [
        ("Dell-GA7", "PADNet-1", 76.74, 11.63),
        ("Dell-GA7", "PADNet-2", 75.84, 12.08),
        ("Dell-GS9", "PADNet-1", 82.32, 8.84),
        ("Dell-GS9", "PADNet-2", 74.89, 12.555),
        ("Dell-NL1020", "PADNet-1", 99.39, 0.30),
        ("Dell-NL1020", "PADNet-2", 99.21, 0.39),
        ("S3D-GA7", "PADNet-1", 99.83, 0.08),
        ("S3D-GA7", "PADNet-2", 99.66, 0.17),
        ("S3D-GS9", "PADNet-1", 94.48, 2.76),
        ("S3D-GS9", "PADNet-2", 91.77, 4.11),
        ("S3D-NL1020", "PADNet-1", 98.2, 0.9),
        ("S3D-NL1020", "PADNet-2", 98.2, 0.9),
        ("Print-GA7", "PADNet-1", 97.57, 1.21),
        ("Print-GA7", "PADNet-2", 96.97, 1.51),
    ];
    ROWS.iter()
        .map(|&(pais, method, apcer_accuracy, hter)| ReferenceRow {
            pais,
            method,
            apcer_accuracy,
            hter,
        })
        .collect()
}

/// The reference rows as audit inputs, keyed `<PAIS>/<method>`.
pub fn reference_audit_maps() -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let mut acc = BTreeMap::new();
    let mut hter = BTreeMap::new();
    for row in reference_results() {
        let key = format!("{}/{}", row.pais, row.method);
        acc.insert(key.clone(), row.apcer_accuracy);
        hter.insert(key, row.hter);
    }
    (acc, hter)
}

/// Reads an audit CSV: header `key,value_percent`, one key per line.
pub fn read_audit_csv(path: &std::path::Path) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PadError::io(path, std::io::Error::other(e.to_string())))?;
    let headers = reader
        .headers()
        .map_err(|e| PadError::Format(format!("{}: {e}", path.display())))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != ["key", "value_percent"] {
        return Err(PadError::Format(format!(
            "{}: expected header `key,value_percent`, got `{}`",
            path.display(),
            got.join(",")
        )));
    }
    let mut map = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| PadError::Format(format!("{}: {e}", path.display())))?;
        let value: f64 = row[1].parse().map_err(|_| {
            PadError::Parse(format!(
                "{}: value `{}` for key `{}` is not a number",
                path.display(),
                &row[1],
                &row[0]
            ))
        })?;
        if map.insert(row[0].to_string(), value).is_some() {
            return Err(PadError::Format(format!(
                "{}: duplicate key `{}`",
                path.display(),
                &row[0]
            )));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{metrics_report, GroundTruth, ScoreRecord};

    fn sample_report() -> MetricsReport {
        let mut records = Vec::new();
        // 10000 Dell-GA7 attacks with 2326 missed: APCER 23.26%.
        for i in 0..10_000 {
            records.push(ScoreRecord {
                sample_id: format!("a{i}"),
                ground_truth: GroundTruth::Attack,
                pais: Some("Dell-GA7".into()),
                score: if i < 2326 { 0.0 } else { 1.0 },
            });
        }
        for i in 0..50 {
            records.push(ScoreRecord {
                sample_id: format!("b{i}"),
                ground_truth: GroundTruth::BonaFide,
                pais: None,
                score: 0.0,
            });
        }
        metrics_report(&records, 0.5).unwrap()
    }

    #[test]
    fn accuracy_style_prints_detection_accuracy() {
        let report = sample_report();
        let rendered = render_tables(&report, TableStyle::Accuracy);
        assert!(rendered.text.contains("76.74"), "{}", rendered.text);
        let rendered_err = render_tables(&report, TableStyle::ErrorRates);
        assert!(rendered_err.text.contains("23.26"), "{}", rendered_err.text);
    }

    #[test]
    fn zero_apcer_prints_both_ways() {
        let records = vec![
            ScoreRecord {
                sample_id: "a".into(),
                ground_truth: GroundTruth::Attack,
                pais: Some("X".into()),
                score: 1.0,
            },
            ScoreRecord {
                sample_id: "b".into(),
                ground_truth: GroundTruth::BonaFide,
                pais: None,
                score: 0.0,
            },
        ];
        let report = metrics_report(&records, 0.5).unwrap();
        let err = render_tables(&report, TableStyle::ErrorRates);
        let acc = render_tables(&report, TableStyle::Accuracy);
        assert!(err.text.contains("0.00"));
        assert!(acc.text.contains("100.00"));
    }

    #[test]
    fn csv_row_count_is_pais_plus_one() {
        let report = sample_report();
        let rendered = render_tables(&report, TableStyle::ErrorRates);
        let data_rows = rendered.csv.lines().count() - 1;
        assert_eq!(data_rows, report.per_pais.len() + 1);
        // Raw fractions, not percents.
        assert!(rendered.csv.contains("0.2326"), "{}", rendered.csv);
    }

    #[test]
    fn styles_are_mutually_recoverable() {
        let report = sample_report();
        for m in report.per_pais.values() {
            let err = round_half_up_2(m.apcer * 100.0);
            let acc = round_half_up_2((1.0 - m.apcer) * 100.0);
            assert!((acc - (100.0 - err)).abs() < 1e-9);
        }
    }

    #[test]
    fn audit_passes_reference_rows() {
        let (acc, hter) = reference_audit_maps();
        let findings = audit_consistency(&acc, &hter).unwrap();
        assert_eq!(findings.len(), 14);
        for f in &findings {
            assert!(f.pass, "{}: residual {}", f.key, f.residual);
            assert!(f.residual <= AUDIT_TOLERANCE_PERCENT);
        }
        // Exact residual spot checks.
        let by_key: BTreeMap<&str, &AuditFinding> =
            findings.iter().map(|f| (f.key.as_str(), f)).collect();
        assert!(by_key["Dell-GA7/PADNet-1"].residual < 1e-12);
        assert!((by_key["S3D-GA7/PADNet-1"].residual - 0.005).abs() < 1e-9);
    }

    #[test]
    fn audit_flags_inconsistent_pair() {
        let mut acc = BTreeMap::new();
        acc.insert("X".to_string(), 50.0);
        let mut hter = BTreeMap::new();
        hter.insert("X".to_string(), 10.0);
        let findings = audit_consistency(&acc, &hter).unwrap();
        assert!(!findings[0].pass);
        assert!((findings[0].residual - 15.0).abs() < 1e-12);
    }

    #[test]
    fn audit_rejects_key_mismatch() {
        let mut acc = BTreeMap::new();
        acc.insert("X".to_string(), 50.0);
        let hter = BTreeMap::new();
        assert!(audit_consistency(&acc, &hter).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up_2(12.5), 12.5);
        // f64 0.305 sits above the decimal tie, so half-up gives 0.31.
        assert_eq!(round_half_up_2(0.305), 0.31);
        assert_eq!(round_half_up_2(76.74000000000001), 76.74);
        // 1.125 is an exact binary tie; half-up resolves it upward.
        assert_eq!(format!("{:.2}", round_half_up_2(1.125)), "1.13");
    }
}
