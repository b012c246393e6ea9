//! Manifest construction from a directory tree, validation, and the
//! published WUT-Ear reference counts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{PadError, Result};
use crate::metrics::GroundTruth;

use super::devices::{self, BONA_FIDE_CAPTURE_DEVICE};
use super::filename::{self, parse_bona_fide_name, parse_filename, ParsedName};
use super::{Manifest, PaisDescriptor, Position, SampleRecord, Side};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// A file the scanner could not turn into a sample, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Manifest plus the skipped-files report.
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub manifest: Manifest,
    pub skipped: Vec<SkippedFile>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn collect_files(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| PadError::io(root, e))?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| PadError::io(root, e))?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Scans `root` for images named per the capture grammar and assembles a
/// manifest. Attack files must parse exactly; bona-fide files must follow
/// the `subject<id>_<L|R>_<position>_<index>` convention to be ingested
/// (anything else lands in the skipped report with its reason).
pub fn build_manifest(root: &Path) -> Result<BuildOutcome> {
    if !root.is_dir() {
        return Err(PadError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root not found"),
        ));
    }
    let mut files = Vec::new();
    collect_files(root, &mut files)?;

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    let mut catalog: BTreeMap<String, PaisDescriptor> = BTreeMap::new();

    for path in files {
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n.to_string(),
            None => {
                skipped.push(SkippedFile {
                    path,
                    reason: "non-UTF-8 filename".into(),
                });
                continue;
            }
        };
        // The toolkit's own sidecar files live beside fixture images.
        if name == "manifest.json" || name.ends_with(".run.json") {
            continue;
        }
        if !is_image(&path) {
            skipped.push(SkippedFile {
                path,
                reason: "unsupported extension (expected jpg/jpeg/png)".into(),
            });
            continue;
        }
        match parse_filename(&name) {
            Ok(ParsedName::Attack { capture_device, .. }) => {
                let pais = filename::pais_for_attack_name(&name)?;
                catalog.entry(pais.abbreviation.clone()).or_insert(pais.clone());
                samples.push(SampleRecord {
                    path,
                    label: GroundTruth::Attack,
                    subject_id: None,
                    side: Side::Unknown,
                    position: Position::Unknown,
                    pais: Some(pais.abbreviation),
                    capture_device,
                });
            }
            Ok(ParsedName::BonaFide) => match parse_bona_fide_name(&name) {
                Some(meta) => samples.push(SampleRecord {
                    path,
                    label: GroundTruth::BonaFide,
                    subject_id: Some(meta.subject_id),
                    side: meta.side,
                    position: meta.position,
                    pais: None,
                    capture_device: BONA_FIDE_CAPTURE_DEVICE.to_string(),
                }),
                None => skipped.push(SkippedFile {
                    path,
                    reason: "bona-fide name does not follow subject<id>_<L|R>_<position>_<index>"
                        .into(),
                }),
            },
            Err(e) => skipped.push(SkippedFile {
                path,
                reason: e.to_string(),
            }),
        }
    }

    if samples.is_empty() {
        return Err(PadError::Domain(format!(
            "no recognized samples under {}",
            root.display()
        )));
    }
    let manifest = Manifest::new(samples, catalog.into_values().collect())?;
    Ok(BuildOutcome { manifest, skipped })
}

/// One validation finding. An empty finding list means the manifest passed.
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// Derived per-representor count differs from the claimed total.
    CountMismatch {
        representor: String,
        derived: usize,
        claimed: usize,
    },
    /// A sample references a PAIS missing from the catalog.
    UnknownPais { path: PathBuf, abbreviation: String },
    /// A bona-fide sample has no subject id.
    MissingSubject { path: PathBuf },
    /// A sample path does not exist or is not a readable file.
    MissingFile { path: PathBuf },
    /// Two catalog entries share an abbreviation.
    DuplicateAbbreviation { abbreviation: String },
    /// A sample violates the label/PAIS presence rule.
    LabelPaisMismatch { path: PathBuf },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::CountMismatch {
                representor,
                derived,
                claimed,
            } => write!(
                f,
                "count mismatch for `{representor}`: derived {derived}, claimed {claimed}"
            ),
            Finding::UnknownPais { path, abbreviation } => write!(
                f,
                "{}: PAIS `{abbreviation}` not in catalog",
                path.display()
            ),
            Finding::MissingSubject { path } => {
                write!(f, "{}: bona-fide sample without subject id", path.display())
            }
            Finding::MissingFile { path } => write!(f, "{}: file missing", path.display()),
            Finding::DuplicateAbbreviation { abbreviation } => {
                write!(f, "duplicate PAIS abbreviation `{abbreviation}`")
            }
            Finding::LabelPaisMismatch { path } => write!(
                f,
                "{}: label and PAIS presence disagree",
                path.display()
            ),
        }
    }
}

/// Audits a manifest: per-representor derived totals against claimed totals,
/// catalog membership, subject ids on bona fide, and file existence.
/// Returns findings instead of failing, one per violation.
pub fn validate_manifest(manifest: &Manifest) -> Vec<Finding> {
    let mut findings = Vec::new();

    let mut seen = std::collections::BTreeSet::new();
    for d in &manifest.pais_catalog {
        if !seen.insert(d.abbreviation.clone()) {
            findings.push(Finding::DuplicateAbbreviation {
                abbreviation: d.abbreviation.clone(),
            });
        }
    }

    for s in &manifest.samples {
        match (s.label, &s.pais) {
            (GroundTruth::Attack, None) | (GroundTruth::BonaFide, Some(_)) => {
                findings.push(Finding::LabelPaisMismatch {
                    path: s.path.clone(),
                })
            }
            _ => {}
        }
        if let Some(p) = &s.pais {
            if !seen.contains(p) {
                findings.push(Finding::UnknownPais {
                    path: s.path.clone(),
                    abbreviation: p.clone(),
                });
            }
        }
        if s.label == GroundTruth::BonaFide && s.subject_id.is_none() {
            findings.push(Finding::MissingSubject {
                path: s.path.clone(),
            });
        }
        if !s.path.is_file() {
            findings.push(Finding::MissingFile {
                path: s.path.clone(),
            });
        }
    }

    // Group derived attack counts by representor and compare with claims.
    if !manifest.claimed_totals.is_empty() {
        let mut derived: BTreeMap<String, usize> = BTreeMap::new();
        for s in &manifest.samples {
            if let Some(p) = &s.pais {
                if let Some(d) = manifest.descriptor(p) {
                    *derived.entry(d.representor.clone()).or_insert(0) += 1;
                }
            }
        }
        for (representor, claimed) in &manifest.claimed_totals {
            let derived_total = derived.get(representor).copied().unwrap_or(0);
            if derived_total != *claimed {
                findings.push(Finding::CountMismatch {
                    representor: representor.clone(),
                    derived: derived_total,
                    claimed: *claimed,
                });
            }
        }
    }

    findings
}

/// Published per-PAIS image counts of the WUT-Ear fake database, grouped by
/// representor with the stated group totals.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCounts {
    pub representor: &'static str,
    pub per_pais: &'static [(&'static str, usize)],
    pub stated_total: usize,
}

/// The reference attack counts: three representor groups, seven PAIS.
pub fn reference_counts() -> Vec<GroupCounts> {
    vec![
        GroupCounts {
            representor: "Dell UltraSharp 32 Ultra HD 4K Monitor",
            per_pais: &[("Dell-GA7", 2134), ("Dell-GS9", 2827), ("Dell-NL1020", 101)],
            stated_total: 5062,
        },
        GroupCounts {
            representor: "SAMSUNG C27JG50QQUX monitor",
            per_pais: &[("S3D-GA7", 16), ("S3D-GS9", 2026), ("S3D-NL1020", 1369)],
            stated_total: 3411,
        },
        GroupCounts {
            representor: "Brother MFC-9340CDW printer",
            per_pais: &[("Print-GA7", 189)],
            stated_total: 189,
        },
    ]
}

/// Builds a manifest stub realizing the reference counts, with every sample
/// pointing at `placeholder` (any existing file). Used to audit the stated
/// group totals without the source images.
pub fn reference_manifest_stub(placeholder: &Path) -> Result<Manifest> {
    let mut samples = Vec::new();
    let mut catalog = Vec::new();
    let mut claimed_totals = BTreeMap::new();
    for group in reference_counts() {
        claimed_totals.insert(group.representor.to_string(), group.stated_total);
        for &(abbr, count) in group.per_pais {
            let descriptor = devices::canonical_pais(abbr)?;
            for _ in 0..count {
                samples.push(SampleRecord {
                    path: placeholder.to_path_buf(),
                    label: GroundTruth::Attack,
                    subject_id: None,
                    side: Side::Unknown,
                    position: Position::Unknown,
                    pais: Some(abbr.to_string()),
                    capture_device: descriptor.capture_device.clone(),
                });
            }
            catalog.push(descriptor);
        }
    }
    let mut manifest = Manifest::new(samples, catalog)?;
    manifest.claimed_totals = claimed_totals;
    Ok(manifest)
}
