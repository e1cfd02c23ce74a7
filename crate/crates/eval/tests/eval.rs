use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vivid_eval::*;

/// O(P·N) pair counting straight from the definition.
fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

#[test]
fn auc_hand_cases() {
    let s = [0.9, 0.8, 0.3, 0.2];
    assert_eq!(auc(&s, &[true, true, false, false]), Some(1.0));
    assert_eq!(auc(&s, &[true, false, true, false]), Some(0.75));
    assert_eq!(auc_oracle(&s, &[true, false, true, false]), 0.75);
    assert_eq!(auc(&[0.4; 4], &[true, false, true, false]), Some(0.5));
}

#[test]
fn auc_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(2..40);
        // coarse scores so ties are common
        let levels = rng.gen_range(2..12);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        match auc(&scores, &labels) {
            Some(a) => {
                assert!((a - auc_oracle(&scores, &labels)).abs() <= 1e-9);
                checked += 1;
            }
            None => assert!(labels.iter().all(|&l| l) || labels.iter().all(|&l| !l)),
        }
    }
}

#[test]
fn macro_auc_skips_degenerate_classes() {
    let m = macro_auc(&[
        (vec![0.9, 0.1], vec![true, false]),
        (vec![0.9, 0.1], vec![true, true]),
        (vec![0.2, 0.8], vec![true, false]),
    ]);
    assert_eq!(m.per_class, [Some(1.0), None, Some(0.0)]);
    assert_eq!(m.skipped, [1]);
    assert_eq!(m.macro_avg, 0.5);
}

#[test]
fn f1_hand_cases() {
    // TP=2, FP=1, FN=1, TN=2
    let scores = [0.9, 0.7, 0.6, 0.2, 0.1, 0.3];
    let labels = [true, true, false, true, false, false];
    let f = f1(&scores, &labels, 0.5).unwrap();
    assert!((f - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(macro_f1(&[(vec![0.9, 0.1], vec![true, false])], 0.5).macro_avg, 1.0);
    let m = macro_f1(
        &[(vec![0.1, 0.2], vec![true, false]), (vec![0.1], vec![false])],
        0.5,
    );
    assert_eq!(m.per_class, [Some(0.0), None]);
    assert_eq!(m.macro_avg, 0.0);
}

fn gaussian_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
        .collect()
}

#[test]
fn probe_recovers_linear_signal_and_excludes_missing_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = gaussian_rows(400, 6, &mut rng);
    let labels: Labels = x
        .iter()
        .enumerate()
        .map(|(i, r)| vec![Some(r[0] + 0.5 * r[3] > 0.0), if i % 3 == 0 { None } else { Some(r[2] < 0.1) }])
        .collect();
    let cfg = ProbeConfig {
        steps: 1500,
        ..Default::default()
    };
    let res = probe_features(&x, &labels, &["a".into(), "b".into()], &cfg).unwrap();
    assert!(res.macro_auc > 0.97, "{res:?}");
    assert_eq!(res.test_samples, 80);
    assert_eq!(res.test_positives[0] + res.test_negatives[0], 80);
    assert!(res.test_positives[1] + res.test_negatives[1] < 80);
    let json = serde_json::to_string(&res).unwrap();
    assert!(json.contains("\"macro_auc\""));
}

#[test]
fn probe_on_noise_is_near_chance() {
    let mut aucs = Vec::new();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = gaussian_rows(1000, 8, &mut rng);
        let labels: Labels = (0..1000).map(|_| vec![Some(rng.gen_bool(0.5)); 3]).collect();
        let cfg = ProbeConfig {
            steps: 300,
            seed,
            ..Default::default()
        };
        aucs.push(probe_features(&x, &labels, &["a".into(), "b".into(), "c".into()], &cfg).unwrap().macro_auc);
    }
    let mean = aucs.iter().sum::<f64>() / 5.0;
    assert!((0.45..=0.55).contains(&mean), "{aucs:?}");
}

#[test]
fn class_without_test_labels_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gaussian_rows(50, 3, &mut rng);
    let labels: Labels = x.iter().map(|r| vec![Some(r[0] > 0.0), None]).collect();
    let cfg = ProbeConfig {
        steps: 50,
        ..Default::default()
    };
    let res = probe_features(&x, &labels, &["a".into(), "gone".into()], &cfg).unwrap();
    assert_eq!(res.auc[1], None);
    assert!(res.skipped.iter().any(|s| s.starts_with("gone")));
    assert!(res.macro_auc.is_finite());
}

#[test]
fn split_is_seeded_and_disjoint() {
    let (a, b) = split_indices(100, 0.2, 7);
    assert_eq!((a.len(), b.len()), (80, 20));
    assert_eq!(split_indices(100, 0.2, 7), (a.clone(), b.clone()));
    let mut all: Vec<usize> = a.into_iter().chain(b).collect();
    all.sort();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
}
