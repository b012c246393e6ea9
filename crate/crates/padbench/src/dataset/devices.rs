//! Device-code tables shared by the filename grammar and the PAIS catalog.

use crate::error::{PadError, Result};

use super::{AttackType, PaisDescriptor};

/// Capture device used for all bona-fide acquisitions.
pub const BONA_FIDE_CAPTURE_DEVICE: &str = "Samsung Galaxy A7";

/// (code, full name, abbreviation fragment) for recognition/capture devices.
const CAPTURE_DEVICES: [(&str, &str, &str); 3] = [
    ("SGA7", "Samsung Galaxy A7", "GA7"),
    ("SGS9", "Samsung Galaxy S9", "GS9"),
    ("N1020", "Nokia Lumia 1020", "NL1020"),
];

/// (code, full name, abbreviation fragment) for display representors.
const DISPLAY_DEVICES: [(&str, &str, &str); 2] = [
    ("4K", "Dell UltraSharp 32 Ultra HD 4K Monitor", "Dell"),
    ("3D", "SAMSUNG C27JG50QQUX monitor", "S3D"),
];

/// (code, full name, abbreviation fragment) for printer representors.
const PRINTER_DEVICES: [(&str, &str, &str); 1] =
    [("MFC", "Brother MFC-9340CDW printer", "Print")];

pub(super) fn capture_by_code(code: &str) -> Option<(&'static str, &'static str)> {
    CAPTURE_DEVICES
        .iter()
        .find(|(c, _, _)| *c == code)
        .map(|(_, name, abbr)| (*name, *abbr))
}

pub(super) fn display_by_code(code: &str) -> Option<(&'static str, &'static str)> {
    DISPLAY_DEVICES
        .iter()
        .find(|(c, _, _)| *c == code)
        .map(|(_, name, abbr)| (*name, *abbr))
}

pub(super) fn printer_by_code(code: &str) -> Option<(&'static str, &'static str)> {
    PRINTER_DEVICES
        .iter()
        .find(|(c, _, _)| *c == code)
        .map(|(_, name, abbr)| (*name, *abbr))
}

/// Full name of a capture device from its filename code.
pub fn capture_device_name(code: &str) -> Option<&'static str> {
    capture_by_code(code).map(|(name, _)| name)
}

/// Full name of a representor (display or printer) from its filename code.
pub fn representor_name(code: &str) -> Option<&'static str> {
    display_by_code(code)
        .or_else(|| printer_by_code(code))
        .map(|(name, _)| name)
}

/// All PAIS abbreviations expressible with the known device codes,
/// in catalog order (displays first, printers last).
pub fn known_pais_abbreviations() -> Vec<String> {
    let mut out = Vec::new();
    for (_, _, rep) in DISPLAY_DEVICES.iter().chain(PRINTER_DEVICES.iter()) {
        for (_, _, cap) in &CAPTURE_DEVICES {
            out.push(format!("{rep}-{cap}"));
        }
    }
    out
}

/// Resolves a PAIS abbreviation such as `Dell-GA7` or `Print-GA7` to its
/// full descriptor.
pub fn canonical_pais(abbreviation: &str) -> Result<PaisDescriptor> {
    let (rep_part, cap_part) = abbreviation.split_once('-').ok_or_else(|| {
        PadError::Parse(format!(
            "PAIS abbreviation `{abbreviation}` is not of the form <representor>-<capture>"
        ))
    })?;

    let capture = CAPTURE_DEVICES
        .iter()
        .find(|(_, _, abbr)| *abbr == cap_part)
        .map(|(_, name, _)| *name)
        .ok_or_else(|| {
            PadError::Parse(format!(
                "unknown capture abbreviation `{cap_part}` in PAIS `{abbreviation}`"
            ))
        })?;

    if let Some((_, name, _)) = DISPLAY_DEVICES.iter().find(|(_, _, abbr)| *abbr == rep_part) {
        return Ok(PaisDescriptor {
            attack_type: AttackType::Display,
            representor: (*name).to_string(),
            capture_device: capture.to_string(),
            abbreviation: abbreviation.to_string(),
        });
    }
    if let Some((_, name, _)) = PRINTER_DEVICES.iter().find(|(_, _, abbr)| *abbr == rep_part) {
        return Ok(PaisDescriptor {
            attack_type: AttackType::PhotoPrint,
            representor: (*name).to_string(),
            capture_device: capture.to_string(),
            abbreviation: abbreviation.to_string(),
        });
    }
    Err(PadError::Parse(format!(
        "unknown representor abbreviation `{rep_part}` in PAIS `{abbreviation}`"
    )))
}

/// Builds the descriptor for a (capture code, representor code) pair as it
/// appears in attack filenames.
pub(super) fn pais_from_codes(capture_code: &str, representor_code: &str) -> Result<PaisDescriptor> {
    let (capture, cap_abbr) = capture_by_code(capture_code).ok_or_else(|| {
        PadError::Parse(format!("unknown capture device code `{capture_code}`"))
    })?;
    if let Some((name, rep_abbr)) = display_by_code(representor_code) {
        return Ok(PaisDescriptor {
            attack_type: AttackType::Display,
            representor: name.to_string(),
            capture_device: capture.to_string(),
            abbreviation: format!("{rep_abbr}-{cap_abbr}"),
        });
    }
    if let Some((name, rep_abbr)) = printer_by_code(representor_code) {
        return Ok(PaisDescriptor {
            attack_type: AttackType::PhotoPrint,
            representor: name.to_string(),
            capture_device: capture.to_string(),
            abbreviation: format!("{rep_abbr}-{cap_abbr}"),
        });
    }
    Err(PadError::Parse(format!(
        "unknown representor device code `{representor_code}`"
    )))
}

/// Filename codes for a PAIS abbreviation, the inverse of
/// [`pais_from_codes`]. Returns (capture code, kind token, representor code).
pub(super) fn codes_for_pais(abbreviation: &str) -> Result<(String, &'static str, String)> {
    let descriptor = canonical_pais(abbreviation)?;
    let cap_code = CAPTURE_DEVICES
        .iter()
        .find(|(_, name, _)| *name == descriptor.capture_device)
        .map(|(code, _, _)| (*code).to_string())
        .expect("canonical descriptor uses a known capture device");
    let (kind, rep_code) = match descriptor.attack_type {
        AttackType::Display => (
            "Disp",
            DISPLAY_DEVICES
                .iter()
                .find(|(_, name, _)| *name == descriptor.representor)
                .map(|(code, _, _)| (*code).to_string())
                .expect("canonical descriptor uses a known display"),
        ),
        AttackType::PhotoPrint => (
            "Print",
            PRINTER_DEVICES
                .iter()
                .find(|(_, name, _)| *name == descriptor.representor)
                .map(|(code, _, _)| (*code).to_string())
                .expect("canonical descriptor uses a known printer"),
        ),
    };
    Ok((cap_code, kind, rep_code))
}
