//! Train/test splitting: subject-disjoint random splits and the
//! leave-one-PAIS-out protocol.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PadError, Result};
use crate::metrics::GroundTruth;

use super::Manifest;

/// Bona-fide/remaining-attack test fraction used by the leave-one-PAIS-out
/// mode, which holds out a PAIS rather than taking a fraction parameter.
pub const LOCO_BONA_FIDE_TEST_FRACTION: f64 = 0.2;

/// Split protocol. Each variant carries exactly the fields its mode uses.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Bona-fide subjects are disjoint between train and test; attacks
    /// without a subject are assigned per-sample by the same seeded stream.
    RandomBySubject { test_fraction: f64, seed: u64 },
    /// Every sample of the held-out PAIS goes to test and none to train;
    /// the rest is split subject-disjointly as in the random mode.
    LeaveOnePaisOut { held_out_pais: String, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train: Manifest,
    pub test: Manifest,
}

fn partition(
    manifest: &Manifest,
    test_fraction: f64,
    seed: u64,
    held_out_pais: Option<&str>,
) -> Result<SplitOutcome> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(PadError::Domain(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let subjects = manifest.subjects();
    if subjects.len() < 2 {
        return Err(PadError::Domain(format!(
            "subject-disjoint split needs at least 2 bona-fide subjects, found {}",
            subjects.len()
        )));
    }

    let mut shuffled = subjects.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n_test = ((subjects.len() as f64 * test_fraction).round() as usize)
        .clamp(1, subjects.len() - 1);
    let test_subjects: std::collections::BTreeSet<&str> =
        shuffled[..n_test].iter().map(|s| s.as_str()).collect();

    // Separate stream for subjectless attacks so adding subjects never
    // perturbs the attack assignment for the same seed.
    let mut attack_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut train = Vec::new();
    let mut test = Vec::new();
    for sample in &manifest.samples {
        let to_test = if held_out_pais.is_some() && sample.pais.as_deref() == held_out_pais {
            true
        } else {
            match (&sample.label, &sample.subject_id) {
                (_, Some(id)) => test_subjects.contains(id.as_str()),
                (GroundTruth::Attack, None) => attack_rng.gen::<f64>() < test_fraction,
                (GroundTruth::BonaFide, None) => {
                    return Err(PadError::Domain(format!(
                        "bona-fide sample {} has no subject id; cannot split by subject",
                        sample.path.display()
                    )))
                }
            }
        };
        if to_test {
            test.push(sample.clone());
        } else {
            train.push(sample.clone());
        }
    }

    Ok(SplitOutcome {
        train: Manifest::new(train, manifest.pais_catalog.clone())?,
        test: Manifest::new(test, manifest.pais_catalog.clone())?,
    })
}

/// Splits a manifest per `spec`. Deterministic for a fixed seed.
pub fn split(manifest: &Manifest, spec: &SplitSpec) -> Result<SplitOutcome> {
    manifest.check_well_formed()?;
    match spec {
        SplitSpec::RandomBySubject {
            test_fraction,
            seed,
        } => partition(manifest, *test_fraction, *seed, None),
        SplitSpec::LeaveOnePaisOut {
            held_out_pais,
            seed,
        } => {
            if manifest.descriptor(held_out_pais).is_none() {
                return Err(PadError::Domain(format!(
                    "held-out PAIS `{held_out_pais}` not present in manifest catalog"
                )));
            }
            partition(
                manifest,
                LOCO_BONA_FIDE_TEST_FRACTION,
                *seed,
                Some(held_out_pais),
            )
        }
    }
}
