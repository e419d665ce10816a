use super::*;
use crate::data::{toy_iris, ToyIrisSpec};
use crate::quality::Circle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_template(seed: u64) -> IrisTemplate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q: Vec<u8> = (0..RADIAL * ANGULAR).map(|_| rng.random_range(0..4)).collect();
    IrisTemplate::from_cells(&q, &vec![true; RADIAL * ANGULAR]).unwrap()
}

fn rms(a: &[f64]) -> f64 {
    (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt()
}

fn texture_energy(p: &PolarImage) -> f64 {
    let m = p.data().iter().sum::<f64>() / p.data().len() as f64;
    rms(&p.data().iter().map(|v| v - m).collect::<Vec<_>>())
}

fn concentric_seg(size: usize) -> Segmentation {
    let c = (size - 1) as f64 / 2.0;
    Segmentation::from_circles(Circle::new(c, c, 0.15 * size as f64), Circle::new(c, c, 0.375 * size as f64)).unwrap()
}

#[test]
fn radial_pattern_gives_constant_rows() {
    let size = 128;
    let c = (size - 1) as f64 / 2.0;
    let img = GrayImage::from_fn(size, size, |x, y| {
        let d = (x as f64 - c).hypot(y as f64 - c);
        0.5 + 0.3 * (d / 3.0).sin()
    })
    .unwrap();
    let polar = normalize(&img, &concentric_seg(size));
    for r in 0..RADIAL {
        let row = polar.row(r);
        let m = row.iter().sum::<f64>() / ANGULAR as f64;
        let var = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / ANGULAR as f64;
        assert!(var < 1e-3, "row {r} variance {var}");
    }
}

#[test]
fn image_rotation_shifts_columns() {
    // rotate the rendered texture analytically, so the only resampling is
    // the normalization itself; 256 px keeps the finest texture well above
    // the pixel pitch
    let size = 256;
    let render = |rotation| {
        let spec = ToyIrisSpec { identity_seed: 5, rotation, ..ToyIrisSpec::default() };
        let (img, seg) = toy_iris(&spec, size).unwrap();
        normalize(&img, &seg)
    };
    let (a, b) = (render(0.0), render(2.0 * PI / ANGULAR as f64));
    let diff: Vec<f64> = (0..RADIAL)
        .flat_map(|r| (0..ANGULAR).map(move |j| (r, j)))
        .map(|(r, j)| b.get(r, j) - a.get(r, (j + ANGULAR - 1) % ANGULAR))
        .collect();
    let rel = rms(&diff) / texture_energy(&a);
    assert!(rel < 0.05, "relative RMS {rel}");
}

#[test]
fn normalization_absorbs_dilation() {
    let size = 128;
    let render = |dilation| {
        let spec = ToyIrisSpec { identity_seed: 9, dilation, ..ToyIrisSpec::default() };
        let (img, seg) = toy_iris(&spec, size).unwrap();
        normalize(&img, &seg)
    };
    let (a, b) = (render(0.8), render(1.25));
    let diff: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let rel = rms(&diff) / texture_energy(&a);
    assert!(rel < 0.10, "relative RMS {rel}");
}

#[test]
fn encoding_is_deterministic() {
    let (img, seg) = toy_iris(&ToyIrisSpec::default(), 64).unwrap();
    assert_eq!(template(&img, &seg), template(&img, &seg));
}

#[test]
fn constant_polar_image_is_fully_masked() {
    let t = encode(&PolarImage::from_fn(|_, _| 0.4));
    assert_eq!(t.valid_cells(), 0);
}

#[test]
fn noise_occupies_all_phase_quadrants() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = encode(&PolarImage::from_fn(|_, _| rng.random_range(0.0..1.0)));
    let mut counts = [0usize; 4];
    for r in 0..RADIAL {
        for c in 0..ANGULAR {
            counts[t.quadrant(r, c) as usize] += 1;
        }
    }
    let n = (RADIAL * ANGULAR) as f64;
    for (q, &k) in counts.iter().enumerate() {
        let frac = k as f64 / n;
        assert!((frac - 0.25).abs() < 0.10, "quadrant {q}: {frac}");
    }
    assert_eq!(t.valid_cells(), RADIAL * ANGULAR);
}

#[test]
fn log_gabor_peaks_at_centre_frequency() {
    let g = log_gabor();
    let peak = (0..ANGULAR).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
    // 256 / 18 ≈ 14.2 cycles
    assert_eq!(peak, 14);
    assert_eq!(g[0], 0.0);
    assert!(g[ANGULAR / 2..].iter().all(|&v| v == 0.0));
}

#[test]
fn self_match_is_zero_and_complement_is_one() {
    let t = random_template(1);
    assert_eq!(match_templates(&t, &t), Some(0.0));
    assert_eq!(hamming_at(&t, &t.complement(), 0), Some(1.0));
}

#[test]
fn independent_templates_disagree_on_half_the_bits() {
    let n = 30;
    let ts: Vec<IrisTemplate> = (0..n).map(random_template).collect();
    let (mut raw, mut best, mut k) = (0.0, 0.0, 0.0);
    for i in 0..n as usize {
        for j in i + 1..n as usize {
            raw += hamming_at(&ts[i], &ts[j], 0).unwrap();
            best += match_templates(&ts[i], &ts[j]).unwrap();
            k += 1.0;
        }
    }
    let (raw, best) = (raw / k, best / k);
    assert!((raw - 0.5).abs() < 0.05, "{raw}");
    assert!(best <= raw && (best - 0.5).abs() < 0.05, "{best}");
}

#[test]
fn rotation_moves_cells() {
    let t = random_template(4);
    let r = t.rotated(3);
    for row in [0, 17, 31] {
        for c in [0, 1, 100, 255] {
            assert_eq!(r.quadrant(row, (c + 3) % ANGULAR), t.quadrant(row, c));
        }
    }
    assert_eq!(hamming_at(&t, &r, -3), Some(0.0));
    assert_eq!(match_templates(&t, &r), Some(0.0));
}

#[test]
fn small_overlap_is_unmatchable() {
    let mut valid = vec![false; RADIAL * ANGULAR];
    valid[..50].iter_mut().for_each(|v| *v = true);
    let t = IrisTemplate::from_cells(&vec![0; RADIAL * ANGULAR], &valid).unwrap();
    assert_eq!(hamming_at(&t, &t, 0), None);
    assert_eq!(match_templates(&t, &t), None);
}

#[test]
fn malformed_cells_are_rejected() {
    assert!(IrisTemplate::from_cells(&[0; 10], &[true; 10]).is_err());
    assert!(IrisTemplate::from_cells(&vec![4; RADIAL * ANGULAR], &vec![true; RADIAL * ANGULAR]).is_err());
}

#[test]
fn genuine_match_tolerates_small_rotations() {
    let capture = |capture_seed, cols: f64| {
        let spec = ToyIrisSpec {
            identity_seed: 21,
            capture_seed,
            noise_amplitude: 0.02,
            rotation: cols * 2.0 * PI / ANGULAR as f64,
            ..ToyIrisSpec::default()
        };
        let (img, seg) = toy_iris(&spec, 128).unwrap();
        template(&img, &seg)
    };
    let a = capture(1, 0.0);
    let base = match_templates(&a, &capture(2, 0.0)).unwrap();
    assert!(base < 0.2, "{base}");
    for k in [-8.0, -3.0, 1.0, 5.0, 8.0] {
        let s = match_templates(&a, &capture(2, k)).unwrap();
        assert!((s - base).abs() < 0.02, "shift {k}: {s} vs {base}");
    }
}

#[test]
fn unsegmentable_images_still_enroll() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = GrayImage::from_fn(64, 64, |_, _| rng.random_range(0.0..1.0)).unwrap();
    let e = enroll(&noise, &SegmentConfig::default());
    assert!(e.template.valid_cells() >= MIN_OVERLAP);
    let flat = GrayImage::constant(64, 64, 0.5).unwrap();
    let e = enroll(&flat, &SegmentConfig::default());
    assert!(e.fallback);
}

fn probes(ids: &[u64], seed0: u64) -> Vec<Probe> {
    ids.iter()
        .enumerate()
        .map(|(i, &identity)| Probe { identity, template: random_template(seed0 + i as u64) })
        .collect()
}

#[test]
fn copies_of_gallery_images_are_always_accepted() {
    // three noisy variants of a base template per identity
    let base: Vec<IrisTemplate> = (0..4).map(|i| random_template(100 + i)).collect();
    let mut real = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (id, t) in base.iter().enumerate() {
        for _ in 0..3 {
            let mut q = Vec::with_capacity(RADIAL * ANGULAR);
            for r in 0..RADIAL {
                for c in 0..ANGULAR {
                    let v = t.quadrant(r, c);
                    q.push(if rng.random_bool(0.15) { v ^ 1 } else { v });
                }
            }
            let template = IrisTemplate::from_cells(&q, &vec![true; RADIAL * ANGULAR]).unwrap();
            real.push(Probe { identity: id as u64, template });
        }
    }
    let synthetic: Vec<Probe> = real.iter().step_by(3).cloned().collect();
    let report = attack_eval(&real, &synthetic).unwrap();
    assert_eq!(report.synthetic_far_at_zero_frr.frr, 0.0);
    assert_eq!(report.synthetic_far_at_zero_frr.far, 1.0);
    assert_eq!(report.real_eer, 0.0);
    assert_eq!(report.frr_at_zero_synthetic_far.far, 0.0);
    // copies score 0 against themselves, so no threshold separates them
    assert_eq!(report.frr_at_zero_synthetic_far.frr, 1.0);
}

#[test]
fn separated_populations_cost_nothing() {
    let mut real = probes(&[0, 0, 1, 1], 0);
    real[1].template = real[0].template.clone();
    real[3].template = real[2].template.clone();
    let synthetic = probes(&[0, 1], 50);
    let report = attack_eval(&real, &synthetic).unwrap();
    assert_eq!(report.scores.genuine, vec![0.0, 0.0]);
    assert_eq!(report.frr_at_zero_synthetic_far.frr, 0.0);
    assert_eq!(report.synthetic_far_at_zero_frr.far, 0.0);
    assert_eq!(report.synthetic_eer, 0.0);
    assert_eq!(report.scores.real_impostor.len(), 4);
    assert_eq!(report.scores.synthetic_impostor.len(), 4);
}

#[test]
fn unknown_claimed_identity_and_empty_populations_fail() {
    let real = probes(&[0, 0, 1], 0);
    assert!(attack_eval(&real, &probes(&[7], 9)).is_err());
    assert!(attack_eval(&probes(&[0, 1], 0), &probes(&[0], 9)).is_err());
}

#[test]
fn unmatchable_pairs_are_counted() {
    let mut real = probes(&[0, 0, 1], 0);
    real[1].template = IrisTemplate::from_cells(&vec![0; RADIAL * ANGULAR], &vec![false; RADIAL * ANGULAR]).unwrap();
    let set = score_sets(&real, &probes(&[1], 7)).unwrap();
    assert_eq!(set.unmatchable.genuine, 1);
    assert_eq!(set.unmatchable.real_impostor, 1);
    assert_eq!(set.genuine.len(), 0);
    assert_eq!(set.real_impostor.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matching_is_symmetric_and_reflexive(a in 0u64..1000, b in 0u64..1000, k in -8isize..=8) {
        let (ta, tb) = (random_template(a), random_template(b).rotated(k));
        prop_assert_eq!(match_templates(&ta, &tb), match_templates(&tb, &ta));
        prop_assert_eq!(match_templates(&ta, &ta), Some(0.0));
        prop_assert_eq!(tb.rotated(-k), random_template(b));
    }
}
