//! Dataset manifests for bona-fide and attack ear images.
//!
//! Follows the WUT-Ear conventions: attack captures are named
//! `Cap_<capture>_<Disp|Print>_<device>_<index>`, bona-fide captures are
//! named `subject<id>_<L|R>_<position>_<index>`, and each attack belongs to
//! a PAIS (presentation attack instrument species) identified by a short
//! abbreviation such as `Dell-GA7` or `Print-GA7`.

mod devices;
mod filename;
mod fixture;
mod manifest;
mod split;

pub use devices::{
    canonical_pais, capture_device_name, known_pais_abbreviations, representor_name,
    BONA_FIDE_CAPTURE_DEVICE,
};
pub use filename::{parse_bona_fide_name, parse_filename, BonaFideMeta, ParsedName};
pub use fixture::{synthesize_fixture, FixtureConfig, FixtureOutcome};
pub use manifest::{
    build_manifest, reference_counts, reference_manifest_stub, validate_manifest, BuildOutcome,
    Finding, GroupCounts, SkippedFile, MANIFEST_SCHEMA_VERSION,
};
pub use split::{split, SplitOutcome, SplitSpec, LOCO_BONA_FIDE_TEST_FRACTION};

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{PadError, Result};
use crate::metrics::GroundTruth;

/// How an attack artifact is presented to the capture device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackType {
    /// A monitor replaying the ear image (replay attack).
    Display,
    /// A printed photograph on paper.
    PhotoPrint,
}

/// A presentation attack instrument species: attack type × representor
/// device × capture device, keyed by a short abbreviation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaisDescriptor {
    pub attack_type: AttackType,
    /// The artifact-display device: a monitor or a printer.
    pub representor: String,
    /// The camera acquiring the presentation.
    pub capture_device: String,
    pub abbreviation: String,
}

/// Ear side in a bona-fide capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Unknown,
}

/// Camera position relative to the ear in a bona-fide capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Up,
    Down,
    Front,
    Forward,
    Back,
    Unknown,
}

impl Position {
    pub const ALL: [Position; 5] = [
        Position::Up,
        Position::Down,
        Position::Front,
        Position::Forward,
        Position::Back,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Position::Up => "up",
            Position::Down => "down",
            Position::Front => "front",
            Position::Forward => "forward",
            Position::Back => "back",
            Position::Unknown => "unknown",
        }
    }
}

/// One image with its label and capture metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub path: PathBuf,
    pub label: GroundTruth,
    /// Present on bona-fide samples; attacks are not traceable to subjects.
    pub subject_id: Option<String>,
    pub side: Side,
    pub position: Position,
    /// PAIS abbreviation; present iff `label` is `Attack`.
    pub pais: Option<String>,
    pub capture_device: String,
}

impl SampleRecord {
    fn check_label_rule(&self) -> Result<()> {
        match (self.label, &self.pais) {
            (GroundTruth::Attack, None) => Err(PadError::Domain(format!(
                "attack sample {} has no PAIS",
                self.path.display()
            ))),
            (GroundTruth::BonaFide, Some(p)) => Err(PadError::Domain(format!(
                "bona-fide sample {} carries PAIS `{p}`",
                self.path.display()
            ))),
            _ => Ok(()),
        }
    }
}

/// A validated collection of samples plus the PAIS catalog they refer to.
///
/// Counts are always derived from the sample list. `claimed_totals`, when
/// present, records externally stated per-representor image totals that
/// [`validate_manifest`] audits against the derived counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub samples: Vec<SampleRecord>,
    pub pais_catalog: Vec<PaisDescriptor>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub claimed_totals: BTreeMap<String, usize>,
}

impl Manifest {
    pub fn new(samples: Vec<SampleRecord>, pais_catalog: Vec<PaisDescriptor>) -> Result<Self> {
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            samples,
            pais_catalog,
            claimed_totals: BTreeMap::new(),
        };
        manifest.check_well_formed()?;
        Ok(manifest)
    }

    /// Structural rules that hold for every manifest: the label/PAIS
    /// presence rule per sample, catalog membership of every sample PAIS,
    /// and abbreviation uniqueness within the catalog.
    pub fn check_well_formed(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.pais_catalog {
            if !seen.insert(d.abbreviation.as_str()) {
                return Err(PadError::Domain(format!(
                    "duplicate PAIS abbreviation `{}` in catalog",
                    d.abbreviation
                )));
            }
        }
        for s in &self.samples {
            s.check_label_rule()?;
            if let Some(p) = &s.pais {
                if !seen.contains(p.as_str()) {
                    return Err(PadError::Domain(format!(
                        "sample {} references PAIS `{p}` absent from catalog",
                        s.path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Derived per-PAIS attack counts.
    pub fn pais_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            if let Some(p) = &s.pais {
                *counts.entry(p.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Derived bona-fide sample count.
    pub fn bona_fide_count(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.label == GroundTruth::BonaFide)
            .count()
    }

    /// Sorted unique subject ids over bona-fide samples.
    pub fn subjects(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .samples
            .iter()
            .filter(|s| s.label == GroundTruth::BonaFide)
            .filter_map(|s| s.subject_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn descriptor(&self, abbreviation: &str) -> Option<&PaisDescriptor> {
        self.pais_catalog
            .iter()
            .find(|d| d.abbreviation == abbreviation)
    }

    /// Serializes to pretty JSON; byte-stable for identical content.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| PadError::Format(format!("manifest serialization: {e}")))?;
        std::fs::write(path, json + "\n").map_err(|e| PadError::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PadError::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| PadError::Format(format!("{}: {e}", path.display())))?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(PadError::Format(format!(
                "{}: unsupported manifest schema_version {} (expected {})",
                path.display(),
                manifest.schema_version,
                MANIFEST_SCHEMA_VERSION
            )));
        }
        manifest.check_well_formed()?;
        Ok(manifest)
    }
}
