//! Property tests for invariants that hold over all inputs, not just the
//! worked examples.

use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;

use padbench::dataset::{canonical_pais, split, Manifest, Position, SampleRecord, Side, SplitSpec};
use padbench::metrics::{classify, hter, metrics_report, GroundTruth, ScoreRecord};
use padbench::report::round_half_up_2;

fn score_records(max_len: usize) -> impl Strategy<Value = Vec<ScoreRecord>> {
    let record = (0..3u8, 0.0f64..=1.0).prop_map(|(group, score)| (group, score));
    proptest::collection::vec(record, 2..max_len).prop_map(|raw| {
        let mut records = Vec::with_capacity(raw.len() + 2);
        for (i, (group, score)) in raw.into_iter().enumerate() {
            if group == 0 {
                records.push(ScoreRecord {
                    sample_id: format!("b{i}"),
                    ground_truth: GroundTruth::BonaFide,
                    pais: None,
                    score,
                });
            } else {
                records.push(ScoreRecord {
                    sample_id: format!("a{i}"),
                    ground_truth: GroundTruth::Attack,
                    pais: Some(format!("P{group}")),
                    score,
                });
            }
        }
        // Both classes must be present for a report to exist.
        records.push(ScoreRecord {
            sample_id: "b-pad".into(),
            ground_truth: GroundTruth::BonaFide,
            pais: None,
            score: 0.25,
        });
        records.push(ScoreRecord {
            sample_id: "a-pad".into(),
            ground_truth: GroundTruth::Attack,
            pais: Some("P1".into()),
            score: 0.75,
        });
        records
    })
}

proptest! {
    #[test]
    fn classify_is_threshold_comparison(score in 0.0f64..=1.0, tau in 0.01f64..=0.99) {
        prop_assert_eq!(classify(score, tau).unwrap(), score >= tau);
    }

    #[test]
    fn hter_is_symmetric_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let ab = hter(a, b).unwrap();
        let ba = hter(b, a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= a.max(b));
    }

    #[test]
    fn report_is_permutation_invariant(records in score_records(60), tau in 0.05f64..=0.95) {
        let forward = metrics_report(&records, tau).unwrap();
        let mut reversed = records.clone();
        reversed.reverse();
        prop_assert_eq!(&forward, &metrics_report(&reversed, tau).unwrap());

        // HTER is exactly the mean of APCER and BPCER for every PAIS.
        for m in forward.per_pais.values() {
            prop_assert_eq!(m.hter, (m.apcer + forward.bpcer) / 2.0);
        }
        let max = forward
            .per_pais
            .values()
            .map(|m| m.apcer)
            .fold(0.0f64, f64::max);
        prop_assert_eq!(forward.apcer_max, max);
    }

    #[test]
    fn raising_tau_is_monotone(records in score_records(60), lo in 0.05f64..=0.5, delta in 0.01f64..=0.4) {
        let hi = lo + delta;
        let low = metrics_report(&records, lo).unwrap();
        let high = metrics_report(&records, hi).unwrap();
        prop_assert!(high.bpcer <= low.bpcer);
        for (key, m) in &high.per_pais {
            prop_assert!(m.apcer >= low.per_pais[key].apcer, "{}", key);
        }
    }

    #[test]
    fn display_styles_recover_each_other(rate in 0.0f64..=1.0) {
        let err = round_half_up_2(rate * 100.0);
        let acc = round_half_up_2((1.0 - rate) * 100.0);
        // Mutual recoverability to printed precision.
        prop_assert!((acc - (100.0 - err)).abs() <= 0.01 + 1e-9);
        prop_assert!((round_half_up_2(rate * 100.0) - rate * 100.0).abs() <= 0.005 + 1e-9);
    }
}

/// In-memory manifests for split properties; splitting never reads files.
fn synthetic_manifest(
    n_subjects: usize,
    per_subject: usize,
    pais: &[&str],
    attacks_per_pais: usize,
) -> Manifest {
    let mut samples = Vec::new();
    for s in 1..=n_subjects {
        for i in 0..per_subject {
            samples.push(SampleRecord {
                path: PathBuf::from(format!("subject{s:03}_L_up_{i:02}.png")),
                label: GroundTruth::BonaFide,
                subject_id: Some(format!("{s:03}")),
                side: Side::Left,
                position: Position::Up,
                pais: None,
                capture_device: "Samsung Galaxy A7".into(),
            });
        }
    }
    let mut catalog = Vec::new();
    for abbr in pais {
        let descriptor = canonical_pais(abbr).unwrap();
        for i in 0..attacks_per_pais {
            samples.push(SampleRecord {
                path: PathBuf::from(format!("Cap_{abbr}_{i:04}.png")),
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
    Manifest::new(samples, catalog).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_exactly(
        n_subjects in 2usize..6,
        per_subject in 1usize..4,
        attacks in 1usize..6,
        fraction in 0.1f64..0.9,
        seed in 0u64..1000,
    ) {
        let manifest = synthetic_manifest(n_subjects, per_subject, &["Dell-GA7", "S3D-GS9"], attacks);
        let outcome = split(
            &manifest,
            &SplitSpec::RandomBySubject { test_fraction: fraction, seed },
        )
        .unwrap();

        // No sample in both partitions; union covers the input.
        let train_paths: BTreeSet<_> = outcome.train.samples.iter().map(|s| &s.path).collect();
        let test_paths: BTreeSet<_> = outcome.test.samples.iter().map(|s| &s.path).collect();
        prop_assert!(train_paths.is_disjoint(&test_paths));
        prop_assert_eq!(
            train_paths.len() + test_paths.len(),
            manifest.samples.len()
        );

        // Bona-fide subjects are disjoint.
        let train_subjects: BTreeSet<_> = outcome.train.subjects().into_iter().collect();
        let test_subjects: BTreeSet<_> = outcome.test.subjects().into_iter().collect();
        prop_assert!(train_subjects.is_disjoint(&test_subjects));
    }

    #[test]
    fn loco_never_leaks_held_out(
        n_subjects in 2usize..5,
        attacks in 1usize..6,
        seed in 0u64..1000,
    ) {
        let manifest = synthetic_manifest(n_subjects, 2, &["Dell-GA7", "Print-GA7"], attacks);
        let outcome = split(
            &manifest,
            &SplitSpec::LeaveOnePaisOut { held_out_pais: "Print-GA7".into(), seed },
        )
        .unwrap();
        prop_assert_eq!(
            outcome
                .train
                .samples
                .iter()
                .filter(|s| s.pais.as_deref() == Some("Print-GA7"))
                .count(),
            0
        );
        prop_assert_eq!(
            outcome
                .test
                .samples
                .iter()
                .filter(|s| s.pais.as_deref() == Some("Print-GA7"))
                .count(),
            attacks
        );
    }
}
