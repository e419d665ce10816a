use super::*;
use crate::quality::Circle;
use proptest::prelude::*;
use rand::Rng;

fn disk(size: usize) -> Circle {
    let c = (size - 1) as f64 / 2.0;
    Circle::new(c, c, 0.4 * size as f64)
}

fn textured(size: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64)> =
        (0..6).map(|_| (rng.random_range(0.05..0.4), rng.random_range(0.05..0.4), rng.random_range(0.0..6.3))).collect();
    GrayImage::from_fn(size, size, |x, y| {
        0.5 + 0.08 * terms.iter().map(|&(a, b, p)| (a * x as f64 + b * y as f64 + p).sin()).sum::<f64>()
    })
    .unwrap()
}

#[test]
fn feature_count() {
    assert_eq!(zernike_count(ZERNIKE_ORDER), 36);
    assert_eq!(FEATURE_LEN, 46);
    assert_eq!(zernike_count(0), 1);
    assert_eq!(zernike_count(3), 6);
}

#[test]
fn gauss_legendre_integrates_polynomials() {
    let nodes = gauss_legendre(8);
    assert!((nodes.iter().map(|n| n.1).sum::<f64>() - 1.0).abs() < 1e-14);
    for k in 0..16 {
        let q: f64 = nodes.iter().map(|&(x, w)| w * x.powi(k)).sum();
        assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-13, "x^{k}: {q}");
    }
}

#[test]
fn radial_polynomials_match_closed_forms() {
    for &r in &[0.0, 0.3, 0.7, 1.0] {
        assert!((radial_polynomial(2, 0, r) - (2.0 * r * r - 1.0)).abs() < 1e-12);
        assert!((radial_polynomial(3, 1, r) - (3.0 * r.powi(3) - 2.0 * r)).abs() < 1e-12);
        assert!((radial_polynomial(4, 0, r) - (6.0 * r.powi(4) - 6.0 * r * r + 1.0)).abs() < 1e-12);
        assert!((radial_polynomial(5, 5, r) - r.powi(5)).abs() < 1e-15);
    }
    // every R_n^m is 1 on the unit circle
    assert!((radial_polynomial(10, 2, 1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn constant_image_has_only_the_mean_moment() {
    let img = GrayImage::constant(64, 64, 0.6).unwrap();
    let z = zernike(&img, &disk(64), 10).unwrap();
    assert!((z[0] - 0.6).abs() < 1e-12);
    assert!(z[1..].iter().all(|&v| v < 1e-6 * z[0]), "{z:?}");
}

#[test]
fn linear_ramp_projects_onto_first_order() {
    let size = 64;
    let d = disk(size);
    let img = GrayImage::from_fn(size, size, |x, _| 0.5 + 0.4 * (x as f64 - d.cx) / d.r).unwrap();
    let z = zernike(&img, &d, 10).unwrap();
    // order: (0,0) (1,1) (2,0) (2,2) ...; Z_11 of ρ cos θ is 1/2
    assert!((z[0] - 0.5).abs() < 1e-9);
    assert!((z[1] - 0.2).abs() < 1e-9);
    assert!(z[2..].iter().all(|&v| v < 1e-9), "{z:?}");
}

#[test]
fn zernike_magnitudes_survive_quarter_turns() {
    let size = 64;
    let img = textured(size, 2);
    let z0 = zernike(&img, &disk(size), 10).unwrap();
    let z1 = zernike(&img.rot90(), &disk(size), 10).unwrap();
    for (a, b) in z0.iter().zip(&z1) {
        assert!((a - b).abs() <= 1e-2 * a.abs().max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn negative_order_is_rejected() {
    assert!(zernike(&GrayImage::constant(32, 32, 0.5).unwrap(), &disk(32), -1).is_err());
}

#[test]
fn riu2_codes() {
    assert_eq!(riu2(0), 0);
    assert_eq!(riu2(0xff), 8);
    assert_eq!(riu2(0b0000_0111), 3);
    assert_eq!(riu2(0b1000_0011), 3);
    assert_eq!(riu2(0b0101_0101), 9);
    assert_eq!(riu2(0b0001_0001), 9);
    let distinct: std::collections::BTreeSet<usize> = (0..=255u8).map(riu2).collect();
    assert_eq!(distinct.len(), LBP_BINS);
}

#[test]
fn lbpv_of_constant_image_is_zero() {
    assert_eq!(lbpv(&GrayImage::constant(32, 32, 0.4).unwrap()), [0.0; LBP_BINS]);
}

#[test]
fn lbpv_is_invariant_to_quarter_turns() {
    let img = textured(40, 5);
    let (a, b) = (lbpv(&img), lbpv(&img.rot90()));
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn checkerboard_lbpv_by_hand() {
    // bright centres see dark edge neighbours and equal diagonals: the
    // alternating pattern 0b1010_1010 → non-uniform bin 9. Dark centres see
    // only neighbours ≥ themselves → code 8. Both have variance 1/4.
    let img = GrayImage::from_fn(32, 32, |x, y| ((x + y) % 2) as f64).unwrap();
    let h = lbpv(&img);
    assert!((h[9] - 0.5).abs() < 1e-12 && (h[8] - 0.5).abs() < 1e-12, "{h:?}");
}

fn labelled(n_real: usize, n_attack: usize, with_ids: bool) -> Vec<Sample> {
    (0..n_real + n_attack)
        .map(|i| Sample {
            features: vec![i as f64],
            attack: i >= n_real,
            identity: with_ids.then_some((i % 25) as u64),
        })
        .collect()
}

#[test]
fn folds_partition_and_stratify() {
    let s = labelled(100, 100, false);
    let f = assign_folds(&s, 5, 1).unwrap();
    for k in 0..5 {
        let test: Vec<usize> = (0..200).filter(|&i| f[i] == k).collect();
        assert_eq!(test.len(), 40);
        assert_eq!(test.iter().filter(|&&i| s[i].attack).count(), 20);
    }
    assert_eq!(f, assign_folds(&s, 5, 1).unwrap());
}

#[test]
fn folds_keep_identities_together() {
    let s = labelled(100, 100, true);
    let f = assign_folds(&s, 5, 3).unwrap();
    for id in 0..25u64 {
        let folds: std::collections::BTreeSet<usize> =
            (0..200).filter(|&i| s[i].identity == Some(id)).map(|i| f[i]).collect();
        assert_eq!(folds.len(), 1, "identity {id} split across {folds:?}");
    }
    for k in 0..5 {
        let n = f.iter().filter(|&&v| v == k).count();
        assert!((30..=50).contains(&n), "fold {k} has {n}");
    }
}

#[test]
fn too_few_samples_per_class_fail() {
    assert!(assign_folds(&labelled(10, 4, false), 5, 0).is_err());
    assert!(assign_folds(&labelled(10, 10, false), 1, 0).is_err());
}

fn separable(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2 * n)
        .map(|i| {
            let attack = i >= n;
            // every coordinate keeps a margin of 1 between the classes
            let features: Vec<f64> = (0..FEATURE_LEN)
                .map(|_| if attack { rng.random_range(0.5..2.0) } else { rng.random_range(-2.0..-0.5) })
                .collect();
            Sample { features, attack, identity: None }
        })
        .collect()
}

#[test]
fn separable_features_are_classified_perfectly() {
    let cv = cross_validate(&separable(50, 4), &PadConfig::default()).unwrap();
    assert_eq!(cv.mean_accuracy, 1.0);
    assert_eq!(cv.pooled_eer, 0.0);
    assert!(cv.folds.iter().all(|f| f.eer == 0.0 && f.test_size == 20));
    assert!(cv.scores.iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn training_is_deterministic_and_persists_exactly() {
    let cfg = PadConfig { epochs: 10, ..PadConfig::default() };
    let s = separable(20, 6);
    let a = cross_validate(&s, &cfg).unwrap();
    let b = cross_validate(&s, &cfg).unwrap();
    assert_eq!(a.scores, b.scores);
    assert_eq!(a.models, b.models);
    let m = &a.models[0];
    let back = PadModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().to_bytes().unwrap()).unwrap()).unwrap();
    assert_eq!(&back, m);
    let rows: Vec<&[f64]> = s.iter().map(|x| x.features.as_slice()).collect();
    assert_eq!(back.predict(&rows).unwrap(), m.predict(&rows).unwrap());
    assert_eq!(back.metadata.iter().find(|(k, _)| k == "fold").unwrap().1, "0");
}

#[test]
fn wrong_feature_length_is_rejected() {
    let cfg = PadConfig { epochs: 1, ..PadConfig::default() };
    let m = fit(&separable(5, 1), &cfg, 0).unwrap();
    assert!(m.predict(&[&[0.0; 3]]).is_err());
    assert!(PadModel::from_checkpoint(&Checkpoint::default()).is_err());
}

#[test]
fn toy_print_attacks_are_detected() {
    use crate::data::{print_attack, toy_pool, ToyRanges};
    let pool = toy_pool(120, 30, 64, &ToyRanges::default(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (real, fake) = pool.split_at(60);
    let real_imgs: Vec<GrayImage> = real.iter().map(|s| s.image.clone()).collect();
    let attack_imgs: Vec<GrayImage> = fake.iter().map(|s| print_attack(&s.image, &mut rng)).collect();
    let ids: Vec<u64> = real.iter().chain(fake).map(|s| s.identity).collect();
    let cv = train_pad(&real_imgs, &attack_imgs, Some(&ids), &PadConfig::default()).unwrap();
    assert!(cv.mean_accuracy > 0.9, "accuracy {}", cv.mean_accuracy);
    assert!(cv.pooled_eer < 0.1, "eer {}", cv.pooled_eer);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn features_are_finite_and_nonnegative(seed in 0u64..1000) {
        let img = textured(48, seed);
        let f = features(&img, &SegmentConfig::default());
        prop_assert_eq!(f.len(), FEATURE_LEN);
        prop_assert!(f.iter().all(|v| v.is_finite() && *v >= 0.0));
        let lbp: f64 = f[FEATURE_LEN - LBP_BINS..].iter().sum();
        prop_assert!((lbp - 1.0).abs() < 1e-9);
        prop_assert_eq!(f, features(&img, &SegmentConfig::default()));
    }

    #[test]
    fn every_sample_is_tested_exactly_once(n_real in 5usize..40, n_attack in 5usize..40, ids in any::<bool>(), seed in 0u64..100) {
        let s = labelled(n_real, n_attack, ids);
        let f = assign_folds(&s, 5, seed).unwrap();
        prop_assert!(f.iter().all(|&k| k < 5));
        prop_assert_eq!(f.len(), s.len());
    }
}
