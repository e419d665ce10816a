use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::image::GrayImage;
use crate::tensor::{BatchNormMode, Param, Tensor};

fn tiny(image_size: usize) -> GanConfig {
    GanConfig {
        image_size,
        latent_dim: 6,
        base_channels: 2,
        batch_size: 4,
        steps: 4,
        ..GanConfig::default()
    }
}

#[test]
fn loss_fixed_point_and_limits() {
    let ln2 = std::f64::consts::LN_2;
    assert!((d_loss(&[0.5, 0.5], &[0.5]).unwrap() - 2.0 * ln2).abs() < 1e-12);
    assert!((g_loss(&[0.5, 0.5]).unwrap() - ln2).abs() < 1e-12);
    assert!(d_loss(&[1.0], &[0.0]).unwrap() < 1e-6);
    let g: Vec<f64> = [0.1, 0.4, 0.8, 0.999].iter().map(|&p| g_loss(&[p]).unwrap()).collect();
    assert!(g.windows(2).all(|w| w[0] > w[1]));
    assert!(d_loss(&[], &[0.5]).is_err());
    assert!(g_loss(&[]).is_err());
}

#[test]
fn logit_losses_match_probability_losses() {
    let real = Tensor::<f64>::from_f64(&[3, 1], &[0.3, -1.2, 2.0]).unwrap();
    let fake = Tensor::<f64>::from_f64(&[2, 1], &[-0.4, 0.9]).unwrap();
    let p = |t: &Tensor<f64>| t.sigmoid().to_f64_vec();
    let d = d_loss_logits(&real, &fake).unwrap().item().unwrap();
    assert!((d - d_loss(&p(&real), &p(&fake)).unwrap()).abs() < 1e-12);
    let g = g_loss_logits(&fake).unwrap().item().unwrap();
    assert!((g - g_loss(&p(&fake)).unwrap()).abs() < 1e-12);
    let zero = Tensor::<f64>::zeros(&[4, 1]);
    assert!((d_loss_logits(&zero, &zero).unwrap().item().unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn generator_gradient_at_fixed_point_is_nonzero() {
    let fake = Tensor::<f64>::zeros(&[3, 1]).with_grad();
    g_loss_logits(&fake).unwrap().backward().unwrap();
    let g = fake.grad().unwrap();
    assert!(g.iter().all(|v| v.is_finite() && *v != 0.0));
}

#[test]
fn quartile_examples() {
    let scores: Vec<f64> = (1..=8).map(f64::from).collect();
    assert_eq!(first_quartile(&scores).unwrap(), 2.75);
    let items: Vec<usize> = (1..=8).collect();
    assert_eq!(quartile_gate(&items, &scores).unwrap(), vec![3, 4, 5, 6, 7, 8]);
    assert_eq!(quartile_gate_indices(&[0.0, 10.0, 10.0, 10.0]).unwrap(), vec![1, 2, 3]);
    assert!(quartile_gate_indices(&[0.4; 6]).unwrap().is_empty());
    assert!(quartile_gate_indices(&[]).is_err());
    assert!(quartile_gate(&[1, 2], &[0.5]).is_err());
    assert!(quartile_gate_indices(&[f64::NAN, 1.0]).is_err());
}

proptest! {
    #[test]
    fn gate_does_not_lower_mean(scores in prop::collection::vec(0.0..1.0f64, 1..40)) {
        let kept = quartile_gate(&scores, &scores).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        if !kept.is_empty() {
            prop_assert!(mean(&kept) >= mean(&scores) - 1e-12);
        }
        let q1 = first_quartile(&scores).unwrap();
        prop_assert!(kept.iter().all(|&k| k > q1));
    }
}

#[test]
fn attach_quality_planes() {
    let imgs = vec![GrayImage::constant(32, 32, 0.25).unwrap(), GrayImage::constant(32, 32, 1.0).unwrap()];
    let batch = image_batch::<f64>(&imgs).unwrap();
    let x = attach_quality(&batch, &[0.2, 0.9]).unwrap();
    assert_eq!(x.shape(), &[2, 2, 32, 32]);
    let d = x.to_f64_vec();
    let plane = |s: usize, c: usize| &d[(s * 2 + c) * 1024..(s * 2 + c + 1) * 1024];
    assert!(plane(0, 0).iter().all(|&v| v == -0.5));
    assert!((plane(0, 1).iter().sum::<f64>() / 1024.0 - 0.2).abs() < 1e-12);
    assert!((plane(1, 1).iter().sum::<f64>() / 1024.0 - 0.9).abs() < 1e-12);

    let one = image_batch::<f64>(&imgs[..1]).unwrap();
    let x = attach_quality(&one, &[0.7]).unwrap().to_f64_vec();
    assert!((x[1024..].iter().sum::<f64>() - 716.8).abs() < 1e-9);
    assert!(attach_quality(&one, &[0.0]).unwrap().to_f64_vec()[1024..].iter().all(|&v| v == 0.0));
    assert!(attach_quality(&one, &[1.5]).is_err());
    assert!(attach_quality(&one, &[0.1, 0.2]).is_err());
}

#[test]
fn image_batch_round_trip() {
    let img = GrayImage::from_fn(16, 16, |x, y| (x * 16 + y) as f64 / 255.0).unwrap();
    let back = to_images(&image_batch::<f64>(std::slice::from_ref(&img)).unwrap()).unwrap();
    assert!(img.pixels().iter().zip(back[0].pixels()).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn config_validation_and_echo() {
    assert!(GanConfig { image_size: 48, ..GanConfig::default() }.validate().is_err());
    assert!(GanConfig { batch_size: 1, ..GanConfig::default() }.validate().is_err());
    assert!(GanConfig { learning_rate: 0.0, ..GanConfig::default() }.validate().is_err());
    let cfg = GanConfig { seed: 99, quality_gate: false, learning_rate: 3e-4, ..GanConfig::default() };
    let mut back = GanConfig::default();
    let pairs = cfg.to_pairs();
    back.apply_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
    assert_eq!(back, cfg);
    assert!(back.apply_pairs([("colour", "red")]).is_err());
}

#[test]
fn architecture_walk_matches_forward() {
    for size in IMAGE_SIZES {
        let cfg = tiny(size);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Generator::<f32>::new(&cfg, &mut rng).unwrap();
        let mut d = Discriminator::<f32>::new(&cfg, &mut rng).unwrap();
        let mut trace = Vec::new();
        let z = sample_latent::<f32>(2, cfg.latent_dim, &mut rng);
        let img = g.forward_traced(&z, BatchNormMode::Train, &mut trace).unwrap();
        let declared: Vec<Vec<usize>> = g
            .architecture()
            .iter()
            .map(|l| [vec![2], l.output.clone()].concat())
            .collect();
        assert_eq!(trace, declared);
        assert_eq!(img.shape(), &[2, 1, size, size]);

        let x = attach_quality(&img.detach(), &[0.5, 0.5]).unwrap();
        let mut trace = Vec::new();
        d.forward_traced(&x, BatchNormMode::Train, &mut trace).unwrap();
        let declared: Vec<Vec<usize>> = d
            .architecture()
            .iter()
            .map(|l| [vec![2], l.output.clone()].concat())
            .collect();
        assert_eq!(trace, declared);
    }
}

#[test]
fn output_ranges() {
    let cfg = tiny(32);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = Generator::<f64>::new(&cfg, &mut rng).unwrap();
    let mut d = Discriminator::<f64>::new(&cfg, &mut rng).unwrap();
    let z = sample_latent::<f64>(4, cfg.latent_dim, &mut rng);
    let img = g.forward(&z, BatchNormMode::Train).unwrap();
    assert!(img.to_f64_vec().iter().all(|v| (-1.0..=1.0).contains(v)));
    let p = d
        .probabilities(&attach_quality(&img, &[0.1, 0.2, 0.3, 0.4]).unwrap(), BatchNormMode::Train)
        .unwrap();
    assert_eq!(p.len(), 4);
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn quality_channel_is_live() {
    let cfg = tiny(32);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut d = Discriminator::<f64>::new(&cfg, &mut rng).unwrap();
    let img = image_batch::<f64>(&[GrayImage::constant(32, 32, 0.4).unwrap()]).unwrap();
    let a = d.probabilities(&attach_quality(&img, &[0.1]).unwrap(), BatchNormMode::Eval).unwrap();
    let b = d.probabilities(&attach_quality(&img, &[0.9]).unwrap(), BatchNormMode::Eval).unwrap();
    assert_ne!(a, b);
}

/// Central differences of `f` over a sample of coordinates of each
/// parameter, compared with the analytic gradient by relative norm.
fn check_params(params: &[Param<f64>], mut f: impl FnMut() -> Tensor<f64>, coords_per_param: usize) -> f64 {
    let h = 1e-5;
    params.iter().for_each(|p| p.tensor.zero_grad());
    f().backward().unwrap();
    let mut num = Vec::new();
    let mut ana = Vec::new();
    for p in params {
        let g = p.tensor.grad().unwrap_or_else(|| vec![0.0; p.tensor.numel()]);
        let n = p.tensor.numel();
        let step = (n / coords_per_param).max(1);
        for i in (0..n).step_by(step) {
            let orig = p.tensor.data()[i];
            p.tensor.data_mut()[i] = orig + h;
            let up = f().item().unwrap();
            p.tensor.data_mut()[i] = orig - h;
            let down = f().item().unwrap();
            p.tensor.data_mut()[i] = orig;
            num.push((up - down) / (2.0 * h));
            ana.push(g[i]);
        }
    }
    let diff: f64 = num.iter().zip(&ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = num.iter().map(|a| a * a).sum::<f64>().sqrt().max(ana.iter().map(|a| a * a).sum::<f64>().sqrt());
    diff / scale.max(1e-12)
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    let cfg = tiny(32);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut d = Discriminator::<f64>::new(&cfg, &mut rng).unwrap();
    let mut random_batch = |q: &[f64]| {
        let n = q.len() * 32 * 32;
        let px: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        attach_quality(&Tensor::<f64>::from_f64(&[q.len(), 1, 32, 32], &px).unwrap(), q).unwrap()
    };
    let real = random_batch(&[0.3, 0.6, 0.9]);
    let fake = random_batch(&[0.1, 0.2, 0.5]);
    let params = d.params().to_vec();
    let err = check_params(
        &params,
        || {
            let r = d.forward(&real, BatchNormMode::Train).unwrap();
            let f = d.forward(&fake, BatchNormMode::Train).unwrap();
            d_loss_logits(&r, &f).unwrap()
        },
        12,
    );
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn generator_gradients_through_discriminator() {
    let cfg = tiny(32);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = Generator::<f64>::new(&cfg, &mut rng).unwrap();
    let mut d = Discriminator::<f64>::new(&cfg, &mut rng).unwrap();
    d.set_trainable(false);
    let z = sample_latent::<f64>(3, cfg.latent_dim, &mut rng);
    let params = g.params().to_vec();
    let err = check_params(
        &params,
        || {
            let img = g.forward(&z, BatchNormMode::Train).unwrap();
            let x = attach_quality(&img, &[0.4, 0.5, 0.6]).unwrap();
            g_loss_logits(&d.forward(&x, BatchNormMode::Train).unwrap()).unwrap()
        },
        12,
    );
    assert!(err < 1e-3, "relative error {err}");
    assert!(d.params().iter().all(|p| p.tensor.grad().is_none()));
}

fn pool(n: usize) -> Vec<GrayImage> {
    (0..n)
        .map(|i| {
            GrayImage::from_fn(32, 32, |x, y| {
                let d = (x as f64 - 15.5).hypot(y as f64 - 15.5);
                if d < 5.0 + (i % 3) as f64 {
                    0.1
                } else {
                    0.3 + 0.4 * ((x + i) % 5) as f64 / 5.0
                }
            })
            .unwrap()
        })
        .collect()
}

/// Cheap stand-in for the quality score: mean brightness.
fn brightness(img: &GrayImage) -> f64 {
    img.mean()
}

fn checksum(params: &[Param<f32>]) -> Vec<u32> {
    params.iter().flat_map(|p| p.tensor.to_vec()).map(f32::to_bits).collect()
}

#[test]
fn updates_touch_only_their_network() {
    let mut trainer = Trainer::new(&tiny(32), &pool(12), brightness).unwrap();
    let batch = trainer.prepare_batch().unwrap();
    let (g0, d0) = (checksum(trainer.generator().params()), checksum(trainer.discriminator().params()));
    trainer.update_discriminator(&batch).unwrap();
    let (g1, d1) = (checksum(trainer.generator().params()), checksum(trainer.discriminator().params()));
    assert_eq!(g0, g1);
    assert_ne!(d0, d1);
    trainer.update_generator(&batch).unwrap();
    let (g2, d2) = (checksum(trainer.generator().params()), checksum(trainer.discriminator().params()));
    assert_eq!(d1, d2);
    assert_ne!(g1, g2);
}

#[test]
fn training_is_deterministic() {
    let cfg = tiny(32);
    let a = train(&cfg, &pool(12), brightness).unwrap();
    let b = train(&cfg, &pool(12), brightness).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(checksum(a.generator.params()), checksum(b.generator.params()));
    assert_eq!(a.log.steps.len(), cfg.steps);
    assert!(a.log.steps.iter().all(|s| s.d_loss.is_finite() && s.g_loss.is_finite()));
    assert_eq!(a.log.real_pool_total, 12);
    assert!(a.log.real_pool_kept < 12);
}

#[test]
fn gate_changes_nothing_before_its_first_discard() {
    let on = GanConfig { steps: 3, ..tiny(32) };
    let off = GanConfig { quality_gate: false, ..on.clone() };
    let a = train(&on, &pool(12), brightness).unwrap().log;
    let b = train(&off, &pool(12), brightness).unwrap().log;
    let first = a.steps.iter().position(|s| s.discarded > 0).expect("gate discards something");
    assert_eq!(a.steps[..first], b.steps[..first]);
    assert!(b.steps.iter().all(|s| s.discarded == 0));
    assert_ne!(a.steps[first].d_loss, b.steps[first].d_loss);
    assert_eq!(a.steps[first].mean_q_fake, b.steps[first].mean_q_fake);
}

#[test]
fn degenerate_gate_falls_back_to_whole_batch() {
    let cfg = GanConfig { steps: 2, gate_retries: 2, ..tiny(32) };
    let log = train(&cfg, &pool(12), |_: &GrayImage| 0.5).err();
    // constant scores also empty the real pool gate
    assert!(matches!(log, Some(crate::Error::Empty(_))));

    let cfg = GanConfig { gate_real_pool: false, ..cfg };
    let out = train(&cfg, &pool(12), |_: &GrayImage| 0.5).unwrap();
    assert!(out.log.steps.iter().all(|s| s.ungated && s.discarded == 0));
}

#[test]
fn generate_is_deterministic_and_in_range() {
    let cfg = tiny(32);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut g = Generator::<f32>::new(&cfg, &mut rng).unwrap();
    let a = generate(&mut g, 3, 11).unwrap();
    let b = generate(&mut g, 1, 11).unwrap();
    assert_eq!(a[0], b[0]);
    assert!(a.iter().all(|img| img.pixels().iter().all(|v| (0.0..=1.0).contains(v))));
    assert!(generate(&mut g, 0, 1).is_err());
}

#[test]
fn checkpoint_round_trip_preserves_samples() {
    let cfg = tiny(32);
    let mut out = train(&cfg, &pool(12), brightness).unwrap();
    let ck = out.generator.to_checkpoint();
    let bytes = ck.to_bytes().unwrap();
    let mut loaded = Generator::<f32>::from_checkpoint(&crate::data::Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(checksum(loaded.params()), checksum(out.generator.params()));
    assert_eq!(generate(&mut loaded, 4, 3).unwrap(), generate(&mut out.generator, 4, 3).unwrap());
    assert_eq!(loaded.to_checkpoint(), ck);

    let dck = out.discriminator.to_checkpoint();
    let d2 = Discriminator::<f32>::from_checkpoint(&dck).unwrap();
    assert_eq!(d2.to_checkpoint(), dck);
    assert!(Generator::<f32>::from_checkpoint(&dck).is_err());
}
