//! Deterministic synthetic fixtures: procedural bona-fide and attack images
//! named per the capture grammar, plus the intended ground-truth manifest.
//!
//! Bona-fide textures are smooth and dark; display attacks add a bright
//! high-frequency moiré grid and print attacks a halftone dot lattice, so
//! the two classes are separable by construction (a nearest-centroid
//! classifier on raw pixels suffices).

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PadError, Result};
use crate::metrics::GroundTruth;

use super::devices::{self, BONA_FIDE_CAPTURE_DEVICE};
use super::{AttackType, Manifest, PaisDescriptor, Position, SampleRecord, Side};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub n_subjects: usize,
    pub n_bonafide_per_subject: usize,
    /// PAIS abbreviations to synthesize attacks for (e.g. `Dell-GA7`).
    pub pais_list: Vec<String>,
    pub n_attack_per_pais: usize,
    /// Square image side in pixels, at least 32.
    pub image_size: u32,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct FixtureOutcome {
    /// Ground-truth manifest over the generated files, ordered exactly as
    /// a directory scan would order them.
    pub manifest: Manifest,
}

struct SmoothParams {
    base: [f64; 3],
    amplitude: f64,
    freq: (f64, f64),
    phase: (f64, f64),
}

fn smooth_value(p: &SmoothParams, channel: usize, u: f64, v: f64) -> f64 {
    p.base[channel]
        + p.amplitude * (TAU * (p.freq.0 * u + p.phase.0)).sin() * (TAU * (p.freq.1 * v + p.phase.1)).cos()
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn render<F>(size: u32, pixel: F) -> image::RgbImage
where
    F: Fn(u32, u32, usize, f64, f64) -> f64,
{
    image::RgbImage::from_fn(size, size, |x, y| {
        let u = x as f64 / size as f64;
        let v = y as f64 / size as f64;
        image::Rgb([
            clamp_u8(pixel(x, y, 0, u, v)),
            clamp_u8(pixel(x, y, 1, u, v)),
            clamp_u8(pixel(x, y, 2, u, v)),
        ])
    })
}

fn bona_fide_image(rng: &mut ChaCha8Rng, size: u32) -> image::RgbImage {
    let tint: [f64; 3] = [
        rng.gen_range(-15.0..15.0),
        rng.gen_range(-15.0..15.0),
        rng.gen_range(-15.0..15.0),
    ];
    let params = SmoothParams {
        base: [70.0 + tint[0], 85.0 + tint[1], 75.0 + tint[2]],
        amplitude: 30.0,
        freq: (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0)),
        phase: (rng.gen::<f64>(), rng.gen::<f64>()),
    };
    render(size, move |_x, _y, c, u, v| smooth_value(&params, c, u, v))
}

fn attack_image(rng: &mut ChaCha8Rng, size: u32, attack_type: AttackType) -> image::RgbImage {
    let tint: [f64; 3] = [
        rng.gen_range(-10.0..10.0),
        rng.gen_range(-10.0..10.0),
        rng.gen_range(-10.0..10.0),
    ];
    let params = SmoothParams {
        base: [175.0 + tint[0], 165.0 + tint[1], 185.0 + tint[2]],
        amplitude: 20.0,
        freq: (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0)),
        phase: (rng.gen::<f64>(), rng.gen::<f64>()),
    };
    match attack_type {
        AttackType::Display => {
            // Screen re-capture look: strong high-frequency interference grid.
            let k = (rng.gen_range(9.0..15.0), rng.gen_range(9.0..15.0));
            let psi = (rng.gen::<f64>(), rng.gen::<f64>());
            render(size, move |_x, _y, c, u, v| {
                smooth_value(&params, c, u, v)
                    + 35.0 * (TAU * (k.0 * u + psi.0)).sin() * (TAU * (k.1 * v + psi.1)).sin()
            })
        }
        AttackType::PhotoPrint => {
            // Print look: periodic halftone dots punched into the base.
            let period = rng.gen_range(5u32..8u32);
            render(size, move |x, y, c, u, v| {
                let mut value = smooth_value(&params, c, u, v);
                if x % period < period / 2 && y % period < period / 2 {
                    value -= 65.0;
                }
                value
            })
        }
    }
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| PadError::io(path, std::io::Error::other(e.to_string())))
}

/// Generates the fixture under `root` (created if needed) and returns the
/// ground-truth manifest. Byte-identical output for identical config.
pub fn synthesize_fixture(root: &Path, config: &FixtureConfig) -> Result<FixtureOutcome> {
    if config.n_subjects < 1
        || config.n_bonafide_per_subject < 1
        || config.n_attack_per_pais < 1
        || config.pais_list.is_empty()
    {
        return Err(PadError::Domain(
            "fixture counts must all be at least 1 and pais_list non-empty".into(),
        ));
    }
    if config.image_size < 32 {
        return Err(PadError::Domain(format!(
            "image_size must be at least 32, got {}",
            config.image_size
        )));
    }
    let mut catalog: BTreeMap<String, PaisDescriptor> = BTreeMap::new();
    for abbr in &config.pais_list {
        let descriptor = devices::canonical_pais(abbr)?;
        if catalog.insert(abbr.clone(), descriptor).is_some() {
            return Err(PadError::Domain(format!(
                "duplicate PAIS `{abbr}` in fixture config"
            )));
        }
    }

    std::fs::create_dir_all(root).map_err(|e| PadError::io(root, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::new();

    for subject in 1..=config.n_subjects {
        let subject_id = format!("{subject:03}");
        for i in 0..config.n_bonafide_per_subject {
            let side = if i % 2 == 0 { Side::Left } else { Side::Right };
            let position = Position::ALL[i % Position::ALL.len()];
            let name = format!(
                "subject{subject_id}_{}_{}_{i:02}.png",
                match side {
                    Side::Left => "L",
                    _ => "R",
                },
                position.as_str()
            );
            let path = root.join(&name);
            save_png(&bona_fide_image(&mut rng, config.image_size), &path)?;
            samples.push(SampleRecord {
                path,
                label: GroundTruth::BonaFide,
                subject_id: Some(subject_id.clone()),
                side,
                position,
                pais: None,
                capture_device: BONA_FIDE_CAPTURE_DEVICE.to_string(),
            });
        }
    }

    for abbr in &config.pais_list {
        let descriptor = catalog[abbr].clone();
        let (cap_code, kind, rep_code) = devices::codes_for_pais(abbr)?;
        for i in 0..config.n_attack_per_pais {
            let name = format!("Cap_{cap_code}_{kind}_{rep_code}_{i:04}.png");
            let path = root.join(&name);
            save_png(
                &attack_image(&mut rng, config.image_size, descriptor.attack_type),
                &path,
            )?;
            samples.push(SampleRecord {
                path,
                label: GroundTruth::Attack,
                subject_id: None,
                side: Side::Unknown,
                position: Position::Unknown,
                pais: Some(abbr.clone()),
                capture_device: descriptor.capture_device.clone(),
            });
        }
    }

    // Order as a lexicographic directory scan would.
    samples.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest::new(samples, catalog.into_values().collect())?;
    Ok(FixtureOutcome { manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_manifest;

    fn small_config(seed: u64) -> FixtureConfig {
        FixtureConfig {
            n_subjects: 2,
            n_bonafide_per_subject: 4,
            pais_list: vec!["Dell-GA7".into()],
            n_attack_per_pais: 4,
            image_size: 64,
            seed,
        }
    }

    #[test]
    fn counts_match_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = synthesize_fixture(dir.path(), &small_config(7)).unwrap();
        // 2 subjects x 4 images + 1 PAIS x 4 attacks = 12 files.
        let files: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        assert_eq!(files.len(), 12);
        assert_eq!(outcome.manifest.bona_fide_count(), 8);
        assert_eq!(outcome.manifest.pais_counts()["Dell-GA7"], 4);
    }

    #[test]
    fn same_seed_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        synthesize_fixture(dir_a.path(), &small_config(7)).unwrap();
        synthesize_fixture(dir_b.path(), &small_config(7)).unwrap();
        let mut names: Vec<_> = std::fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between identically seeded runs");
        }
    }

    #[test]
    fn round_trip_equals_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let config = FixtureConfig {
            n_subjects: 3,
            n_bonafide_per_subject: 5,
            pais_list: vec!["Dell-GA7".into(), "Print-GA7".into()],
            n_attack_per_pais: 3,
            image_size: 48,
            seed: 99,
        };
        let outcome = synthesize_fixture(dir.path(), &config).unwrap();
        let built = build_manifest(dir.path()).unwrap();
        assert!(built.skipped.is_empty(), "{:?}", built.skipped);
        assert_eq!(built.manifest, outcome.manifest);
    }

    #[test]
    fn class_means_are_separated() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = synthesize_fixture(dir.path(), &small_config(3)).unwrap();
        let mean_of = |path: &std::path::Path| -> f64 {
            let img = image::open(path).unwrap().to_rgb8();
            let sum: f64 = img.pixels().map(|p| p.0.iter().map(|&v| v as f64).sum::<f64>()).sum();
            sum / (img.width() * img.height() * 3) as f64
        };
        for s in &outcome.manifest.samples {
            let m = mean_of(&s.path);
            match s.label {
                GroundTruth::BonaFide => assert!(m < 128.0, "{}: mean {m}", s.path.display()),
                GroundTruth::Attack => assert!(m > 128.0, "{}: mean {m}", s.path.display()),
            }
        }
    }

    #[test]
    fn config_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(1);
        config.image_size = 16;
        assert!(synthesize_fixture(dir.path(), &config).is_err());

        let mut config = small_config(1);
        config.pais_list.clear();
        assert!(synthesize_fixture(dir.path(), &config).is_err());

        let mut config = small_config(1);
        config.pais_list = vec!["Nope-GA7".into()];
        assert!(synthesize_fixture(dir.path(), &config).is_err());
    }
}
