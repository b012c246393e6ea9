//! ISO/IEC 30107-3 presentation-attack-detection error rates.
//!
//! APCER is computed per PAIS (presentation attack instrument species),
//! BPCER over all bona-fide presentations, and HTER as their arithmetic
//! mean at a fixed decision threshold τ. Scores are attack likelihoods in
//! [0, 1]; a presentation is classified as an attack when `score >= τ`
//! (ties classify as attack). All rates are kept as fractions in [0, 1];
//! percent formatting lives in the report layer.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};

/// True class of a presentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    BonaFide,
    Attack,
}

impl GroundTruth {
    pub fn as_str(&self) -> &'static str {
        match self {
            GroundTruth::BonaFide => "bonafide",
            GroundTruth::Attack => "attack",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bonafide" | "bona_fide" => Ok(GroundTruth::BonaFide),
            "attack" => Ok(GroundTruth::Attack),
            other => Err(PadError::Parse(format!(
                "unknown ground truth label `{other}` (expected `bonafide` or `attack`)"
            ))),
        }
    }
}

/// One scored presentation, before thresholding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub ground_truth: GroundTruth,
    /// PAIS abbreviation; present iff `ground_truth` is `Attack`.
    pub pais: Option<String>,
    /// Attack likelihood in [0, 1].
    pub score: f64,
}

/// A thresholded decision. `res` is always derived from `score` and the
/// evaluation threshold, never set directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub sample_id: String,
    pub score: f64,
    res: bool,
    pub ground_truth: GroundTruth,
    pub pais: Option<String>,
}

impl Decision {
    /// Builds a decision at threshold `tau`, validating the score domain and
    /// the PAIS presence rule (attacks carry a PAIS, bona fide do not).
    pub fn new(
        sample_id: impl Into<String>,
        score: f64,
        ground_truth: GroundTruth,
        pais: Option<String>,
        tau: f64,
    ) -> Result<Self> {
        match (ground_truth, &pais) {
            (GroundTruth::Attack, None) => {
                return Err(PadError::Domain(
                    "attack decision is missing its PAIS".into(),
                ))
            }
            (GroundTruth::BonaFide, Some(p)) => {
                return Err(PadError::Domain(format!(
                    "bona-fide decision carries a PAIS (`{p}`)"
                )))
            }
            _ => {}
        }
        let res = classify(score, tau)?;
        Ok(Decision {
            sample_id: sample_id.into(),
            score,
            res,
            ground_truth,
            pais,
        })
    }

    pub fn from_record(record: &ScoreRecord, tau: f64) -> Result<Self> {
        Decision::new(
            record.sample_id.clone(),
            record.score,
            record.ground_truth,
            record.pais.clone(),
            tau,
        )
    }

    /// 1 = classified as attack presentation, 0 = classified as bona fide.
    pub fn res(&self) -> bool {
        self.res
    }

    /// Same decision re-thresholded at a different τ.
    pub fn at_tau(&self, tau: f64) -> Result<Self> {
        Decision::new(
            self.sample_id.clone(),
            self.score,
            self.ground_truth,
            self.pais.clone(),
            tau,
        )
    }
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(PadError::Domain(format!(
            "{name} must be a finite value in [0, 1], got {value}"
        )));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 0.0 || tau >= 1.0 {
        return Err(PadError::Domain(format!(
            "threshold tau must lie strictly inside (0, 1), got {tau}"
        )));
    }
    Ok(())
}

/// Thresholds an attack-likelihood score: `true` (attack) iff `score >= tau`.
///
/// The boundary is inclusive: a score exactly at τ classifies as an attack.
pub fn classify(score: f64, tau: f64) -> Result<bool> {
    check_rate("score", score)?;
    check_tau(tau)?;
    Ok(score >= tau)
}

/// Attack presentation classification error rate over one PAIS:
/// the fraction of attack presentations classified as bona fide,
/// `(1/N_PAIS) · Σ (1 − res_i)`.
///
/// All decisions must be attacks sharing one PAIS.
pub fn apcer(decisions: &[Decision]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(PadError::Domain(
            "APCER is undefined on an empty decision list".into(),
        ));
    }
    let first_pais = match (&decisions[0].ground_truth, &decisions[0].pais) {
        (GroundTruth::Attack, Some(p)) => p.clone(),
        _ => {
            return Err(PadError::Domain(
                "APCER requires attack decisions only".into(),
            ))
        }
    };
    let mut missed = 0usize;
    for d in decisions {
        if d.ground_truth != GroundTruth::Attack {
            return Err(PadError::Domain(
                "APCER requires attack decisions only".into(),
            ));
        }
        match &d.pais {
            Some(p) if *p == first_pais => {}
            Some(p) => {
                return Err(PadError::Domain(format!(
                    "APCER requires a single PAIS, found both `{first_pais}` and `{p}`"
                )))
            }
            None => {
                return Err(PadError::Domain(
                    "attack decision is missing its PAIS".into(),
                ))
            }
        }
        if !d.res {
            missed += 1;
        }
    }
    Ok(missed as f64 / decisions.len() as f64)
}

/// Bona-fide presentation classification error rate: the fraction of
/// bona-fide presentations classified as attacks, `Σ res_i / N_BF`.
pub fn bpcer(decisions: &[Decision]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(PadError::Domain(
            "BPCER is undefined on an empty decision list".into(),
        ));
    }
    let mut rejected = 0usize;
    for d in decisions {
        if d.ground_truth != GroundTruth::BonaFide {
            return Err(PadError::Domain(
                "BPCER requires bona-fide decisions only".into(),
            ));
        }
        if d.res {
            rejected += 1;
        }
    }
    Ok(rejected as f64 / decisions.len() as f64)
}

/// Half total error rate: `(apcer + bpcer) / 2`.
pub fn hter(apcer_value: f64, bpcer_value: f64) -> Result<f64> {
    check_rate("apcer", apcer_value)?;
    check_rate("bpcer", bpcer_value)?;
    Ok((apcer_value + bpcer_value) / 2.0)
}

/// Per-PAIS slice of a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaisMetrics {
    pub apcer: f64,
    pub hter: f64,
    /// Number of attack presentations of this PAIS.
    pub n_pais: usize,
}

/// APCER/BPCER/HTER at one threshold, broken down by PAIS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tau: f64,
    pub bpcer: f64,
    /// Keyed by PAIS abbreviation; ordering is deterministic.
    pub per_pais: BTreeMap<String, PaisMetrics>,
    /// Number of bona-fide presentations.
    pub n_bf: usize,
    /// Worst-case APCER over all PAIS (ISO summary convention).
    pub apcer_max: f64,
}

/// Computes the full report at threshold `tau`. Every decision's `res` is
/// recomputed from its score at `tau`, so the same records can be evaluated
/// at any threshold.
pub fn metrics_report(records: &[ScoreRecord], tau: f64) -> Result<MetricsReport> {
    check_tau(tau)?;
    let decisions: Vec<Decision> = records
        .iter()
        .map(|r| Decision::from_record(r, tau))
        .collect::<Result<_>>()?;

    let bona_fide: Vec<Decision> = decisions
        .iter()
        .filter(|d| d.ground_truth == GroundTruth::BonaFide)
        .cloned()
        .collect();
    if bona_fide.is_empty() {
        return Err(PadError::Domain(
            "BPCER undefined: no bona-fide presentations in input".into(),
        ));
    }

    let mut groups: BTreeMap<String, Vec<Decision>> = BTreeMap::new();
    for d in decisions.iter().filter(|d| d.ground_truth == GroundTruth::Attack) {
        let key = d.pais.clone().expect("attack decisions always carry a PAIS");
        groups.entry(key).or_default().push(d.clone());
    }
    if groups.is_empty() {
        return Err(PadError::Domain(
            "APCER undefined: no attack presentations in input".into(),
        ));
    }

    let bpcer_value = bpcer(&bona_fide)?;
    let mut per_pais = BTreeMap::new();
    let mut apcer_max = 0.0f64;
    for (abbr, group) in &groups {
        let apcer_value = apcer(group)?;
        apcer_max = apcer_max.max(apcer_value);
        per_pais.insert(
            abbr.clone(),
            PaisMetrics {
                apcer: apcer_value,
                hter: hter(apcer_value, bpcer_value)?,
                n_pais: group.len(),
            },
        );
    }

    Ok(MetricsReport {
        tau,
        bpcer: bpcer_value,
        per_pais,
        n_bf: bona_fide.len(),
        apcer_max,
    })
}

/// Reads a score file: header `sample_id,ground_truth,pais,score`, one
/// record per line, UTF-8, LF. The `pais` field is empty for bona fide.
pub fn read_score_file(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                PadError::io(path, std::io::Error::other(e.to_string()))
            }
            _ => PadError::Format(format!("{}: {e}", path.display())),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| PadError::Format(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["sample_id", "ground_truth", "pais", "score"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(PadError::Format(format!(
            "{}: expected header `{}`, got `{}`",
            path.display(),
            expected.join(","),
            got.join(",")
        )));
    }

    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| PadError::Format(format!("{}: {e}", path.display())))?;
        if row.len() != 4 {
            return Err(PadError::Format(format!(
                "{}: line {}: expected 4 fields, got {}",
                path.display(),
                line + 2,
                row.len()
            )));
        }
        let ground_truth = GroundTruth::parse(&row[1])?;
        let pais = if row[2].is_empty() {
            None
        } else {
            Some(row[2].to_string())
        };
        let score: f64 = row[3].parse().map_err(|_| {
            PadError::Parse(format!(
                "{}: line {}: score `{}` is not a number",
                path.display(),
                line + 2,
                &row[3]
            ))
        })?;
        check_rate("score", score)?;
        records.push(ScoreRecord {
            sample_id: row[0].to_string(),
            ground_truth,
            pais,
            score,
        });
    }
    Ok(records)
}

/// Writes a score file in the format accepted by [`read_score_file`].
pub fn write_score_file(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| PadError::io(path, std::io::Error::other(e.to_string())))?;
    writer
        .write_record(["sample_id", "ground_truth", "pais", "score"])
        .map_err(|e| PadError::io(path, std::io::Error::other(e.to_string())))?;
    for r in records {
        writer
            .write_record([
                r.sample_id.as_str(),
                r.ground_truth.as_str(),
                r.pais.as_deref().unwrap_or(""),
                &format!("{}", r.score),
            ])
            .map_err(|e| PadError::io(path, std::io::Error::other(e.to_string())))?;
    }
    writer
        .flush()
        .map_err(|e| PadError::io(path, e))?;
    Ok(())
}
