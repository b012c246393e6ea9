//! Filename grammar for attack and bona-fide captures.
//!
//! Attack files: `Cap_<capture>_Disp_<display>_<index>` or
//! `Cap_<capture>_Print_<printer>_<index>`, e.g. `Cap_N1020_Disp_3D_0012.jpg`
//! (captured with a Nokia Lumia 1020 off a SAMSUNG C27JG50QQUX monitor).
//! Any name lacking the `Cap_` prefix denotes a bona-fide capture; the
//! bona-fide convention is `subject<id>_<L|R>_<position>_<index>`.

use crate::error::{PadError, Result};

use super::devices;
use super::{AttackType, Position, Side};

/// Result of parsing a filename against the attack grammar.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedName {
    Attack {
        capture_device: String,
        representor: String,
        attack_type: AttackType,
    },
    /// No `Cap_` prefix: a bona-fide capture.
    BonaFide,
}

/// Subject metadata extracted from a bona-fide filename.
#[derive(Debug, Clone, PartialEq)]
pub struct BonaFideMeta {
    pub subject_id: String,
    pub side: Side,
    pub position: Position,
}

fn stem(name: &str) -> &str {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    match base.rsplit_once('.') {
        Some((stem, ext)) if !ext.is_empty() && !stem.is_empty() => stem,
        _ => base,
    }
}

/// Parses a filename. Names with the `Cap_` prefix must follow the attack
/// grammar exactly; an unknown device token is a parse error naming that
/// token. Everything else is a bona-fide marker.
pub fn parse_filename(name: &str) -> Result<ParsedName> {
    if name.is_empty() {
        return Err(PadError::Parse("empty filename".into()));
    }
    let stem = stem(name);
    if !stem.starts_with("Cap_") {
        return Ok(ParsedName::BonaFide);
    }

    let tokens: Vec<&str> = stem.split('_').collect();
    if tokens.len() < 4 {
        return Err(PadError::Parse(format!(
            "attack name `{name}` has {} underscore-separated tokens, expected at least 4 \
             (Cap_<capture>_<Disp|Print>_<device>)",
            tokens.len()
        )));
    }
    let capture_code = tokens[1];
    let kind = tokens[2];
    let device_code = tokens[3];

    let (capture_device, _) = devices::capture_by_code(capture_code)
        .ok_or_else(|| {
            PadError::Parse(format!(
                "unknown capture device code `{capture_code}` in `{name}`"
            ))
        })?;

    match kind {
        "Disp" => {
            let (representor, _) = devices::display_by_code(device_code).ok_or_else(|| {
                PadError::Parse(format!(
                    "unknown display device code `{device_code}` in `{name}`"
                ))
            })?;
            Ok(ParsedName::Attack {
                capture_device: capture_device.to_string(),
                representor: representor.to_string(),
                attack_type: AttackType::Display,
            })
        }
        "Print" => {
            let (representor, _) = devices::printer_by_code(device_code).ok_or_else(|| {
                PadError::Parse(format!(
                    "unknown printer device code `{device_code}` in `{name}`"
                ))
            })?;
            Ok(ParsedName::Attack {
                capture_device: capture_device.to_string(),
                representor: representor.to_string(),
                attack_type: AttackType::PhotoPrint,
            })
        }
        other => Err(PadError::Parse(format!(
            "unknown attack kind token `{other}` in `{name}` (expected `Disp` or `Print`)"
        ))),
    }
}

/// PAIS descriptor for an attack filename; errors on bona-fide names.
pub(super) fn pais_for_attack_name(name: &str) -> Result<super::PaisDescriptor> {
    let stem = stem(name);
    let tokens: Vec<&str> = stem.split('_').collect();
    match parse_filename(name)? {
        ParsedName::Attack { .. } => devices::pais_from_codes(tokens[1], tokens[3]),
        ParsedName::BonaFide => Err(PadError::Parse(format!(
            "`{name}` is not an attack capture name"
        ))),
    }
}

/// Parses the bona-fide convention `subject<id>_<L|R>_<position>_<index>`.
/// Returns `None` when the name does not follow the convention.
pub fn parse_bona_fide_name(name: &str) -> Option<BonaFideMeta> {
    let stem = stem(name);
    let tokens: Vec<&str> = stem.split('_').collect();
    if tokens.len() != 4 {
        return None;
    }
    let subject_id = tokens[0].strip_prefix("subject")?;
    if subject_id.is_empty() || !subject_id.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let side = match tokens[1] {
        "L" => Side::Left,
        "R" => Side::Right,
        _ => return None,
    };
    let position = Position::ALL
        .iter()
        .copied()
        .find(|p| p.as_str() == tokens[2])?;
    if tokens[3].is_empty() || !tokens[3].chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some(BonaFideMeta {
        subject_id: subject_id.to_string(),
        side,
        position,
    })
}
