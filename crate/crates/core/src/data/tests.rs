use super::*;
use crate::image::GrayImage;
use crate::quality::{concentricity_offset, pupil_iris_ratio, segment, Circle, SegmentConfig};

fn ramp() -> GrayImage {
    GrayImage::from_fn(23, 17, |x, y| ((x * 31 + y * 17) % 97) as f64 / 96.0).unwrap()
}

#[test]
fn pgm_round_trip_within_quantization() {
    let img = ramp();
    let back = decode_pgm(&encode_pgm(&img)).unwrap();
    assert_eq!((back.width(), back.height()), (23, 17));
    let worst = img
        .pixels()
        .iter()
        .zip(back.pixels())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1.0 / 510.0 + 1e-12, "{worst}");
}

#[test]
fn pgm_header_whitespace_and_comments() {
    let mut bytes = b"P5 # made by hand\n  16\t# width\n16\r\n# maxval next\n255\n".to_vec();
    bytes.extend(std::iter::repeat_n(51u8, 256));
    let img = decode_pgm(&bytes).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));
    assert!(img.pixels().iter().all(|&v| v == 0.2));
}

#[test]
fn pgm_errors_report_offsets() {
    let (off, msg) = decode_pgm(b"P6\n16 16\n255\n").unwrap_err();
    assert_eq!(off, 0);
    assert!(msg.contains("P5"));

    let (off, msg) = decode_pgm(b"P5\n16 x\n255\n").unwrap_err();
    assert_eq!(off, 6);
    assert!(msg.contains("height"));

    let mut bytes = b"P5\n16 16\n255\n".to_vec();
    bytes.extend([0u8; 100]);
    let (off, msg) = decode_pgm(&bytes).unwrap_err();
    assert_eq!(off, 13);
    assert!(msg.contains("expected 256") && msg.contains("found 100"), "{msg}");
}

#[test]
fn image_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = ramp();
    for name in ["a.pgm", "b.png"] {
        let path = dir.path().join(name);
        write_image(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
        }
    }
    assert!(read_image(dir.path().join("c.bmp")).is_err());
    match read_image(dir.path().join("missing.pgm")) {
        Err(crate::Error::Io { path, .. }) => assert!(path.ends_with("missing.pgm")),
        other => panic!("{other:?}"),
    }
}

fn sample_checkpoint() -> Checkpoint {
    Checkpoint {
        config: vec![("latent_dim".into(), "100".into()), ("image_size".into(), "32".into())],
        tensors: vec![
            NamedTensor {
                name: "g.dense.w".into(),
                shape: vec![2, 3],
                data: vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5e-8, f32::MAX, -7.25],
            },
            NamedTensor {
                name: "scalar".into(),
                shape: vec![],
                data: vec![0.1],
            },
        ],
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let ck = sample_checkpoint();
    let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back.config, ck.config);
    assert_eq!(
        back.tensors.iter().map(|t| &t.name).collect::<Vec<_>>(),
        ["g.dense.w", "scalar"]
    );
    for (a, b) in ck.tensors.iter().zip(&back.tensors) {
        assert_eq!(a.shape, b.shape);
        let bits = |t: &NamedTensor| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    assert_eq!(back.config_value("image_size"), Some("32"));
}

#[test]
fn checkpoint_rejects_corruption() {
    let bytes = sample_checkpoint().to_bytes().unwrap();
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(Checkpoint::from_bytes(&bad).unwrap_err().1.contains("magic"));

    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(Checkpoint::from_bytes(&bad).unwrap_err().1.contains("version"));

    let short = &bytes[..bytes.len() - 2];
    assert!(Checkpoint::from_bytes(short).is_err());

    let mut long = bytes.clone();
    long.push(0);
    assert!(Checkpoint::from_bytes(&long).unwrap_err().1.contains("trailing"));

    let mismatched = Checkpoint {
        config: vec![],
        tensors: vec![NamedTensor { name: "x".into(), shape: vec![2, 2], data: vec![0.0; 3] }],
    };
    assert!(mismatched.to_bytes().is_err());
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.pgm"), encode_pgm(&ramp())).unwrap();
    let manifest = Manifest {
        rows: vec![ManifestRow {
            path: "a.pgm".into(),
            identity: "7".into(),
            class: SampleClass::Synthetic,
            split: "train".into(),
        }],
    };
    let path = dir.path().join("m.csv");
    manifest.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("path,identity,class,split\n"));
    let back = Manifest::load(&path).unwrap();
    assert_eq!(back.rows[0].path, dir.path().join("a.pgm"));
    assert_eq!(back.rows[0].class, SampleClass::Synthetic);

    std::fs::write(&path, "path,identity,class,split\nnope.pgm,1,real,test\n").unwrap();
    assert!(Manifest::load(&path).is_err());
    std::fs::write(&path, "file,id\n").unwrap();
    assert!(Manifest::load(&path).is_err());
}

#[test]
fn toy_is_deterministic_and_validated() {
    let spec = ToyIrisSpec { noise_amplitude: 0.02, occlusion: 0.1, blur_sigma: 0.7, ..Default::default() };
    let (a, _) = toy_iris(&spec, 64).unwrap();
    let (b, _) = toy_iris(&spec, 64).unwrap();
    assert_eq!(a, b);
    let (c, _) = toy_iris(&ToyIrisSpec { capture_seed: 1, ..spec.clone() }, 64).unwrap();
    assert_ne!(a, c);

    assert!(toy_iris(&ToyIrisSpec { dilation: 3.0, ..Default::default() }, 64).is_err());
    assert!(toy_iris(&ToyIrisSpec { blur_sigma: -1.0, ..Default::default() }, 64).is_err());
    assert!(toy_iris(&ToyIrisSpec { iris_radius_frac: 0.55, ..Default::default() }, 64).is_err());
}

#[test]
fn rubber_sheet_coords_invert_the_mapping() {
    let pupil = Circle::new(31.0, 29.5, 9.0);
    let iris = Circle::new(33.0, 30.0, 25.0);
    for &(rho, theta) in &[(0.0, 0.3), (0.5, -2.0), (0.9, 1.4), (0.25, 3.0)] {
        let cx = pupil.cx + rho * (iris.cx - pupil.cx);
        let cy = pupil.cy + rho * (iris.cy - pupil.cy);
        let r = pupil.r + rho * (iris.r - pupil.r);
        let (x, y) = (cx + r * f64::cos(theta), cy + r * f64::sin(theta));
        let (rho2, theta2) = rubber_sheet_coords(&pupil, &iris, x, y);
        assert!((rho - rho2).abs() < 1e-6 && (theta - theta2).abs() < 1e-6);
    }
}

#[test]
fn toy_geometry_is_measurable() {
    for dilation in [0.8, 1.0, 1.25] {
        let spec = ToyIrisSpec { dilation, ..Default::default() };
        let (img, _) = toy_iris(&spec, 128).unwrap();
        let seg = segment(&img, &SegmentConfig::default()).unwrap();
        let got = pupil_iris_ratio(&seg);
        assert!((got - spec.pupil_iris_ratio()).abs() <= 0.03, "{got} vs {}", spec.pupil_iris_ratio());
    }
    let spec = ToyIrisSpec { center_offset: (5.0, -2.0), ..Default::default() };
    let (img, truth) = toy_iris(&spec, 128).unwrap();
    let seg = segment(&img, &SegmentConfig::default()).unwrap();
    let expected = 5.0f64.hypot(2.0) / truth.iris.r;
    assert!((concentricity_offset(&seg) - expected).abs() <= 0.05);
}

/// Normalized cross-correlation of two textures on a polar grid.
fn polar_ncc(a: &IrisTexture, b: &IrisTexture) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..16 {
        for j in 0..128 {
            let rho = (i as f64 + 0.5) / 16.0;
            let theta = 2.0 * std::f64::consts::PI * j as f64 / 128.0;
            xs.push(a.value(rho, theta));
            ys.push(b.value(rho, theta));
        }
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn distinct_identities_have_uncorrelated_textures() {
    let textures: Vec<_> = (0..10).map(IrisTexture::new).collect();
    for i in 0..textures.len() {
        assert!((polar_ncc(&textures[i], &textures[i]) - 1.0).abs() < 1e-12);
        for j in i + 1..textures.len() {
            let ncc = polar_ncc(&textures[i], &textures[j]);
            assert!(ncc.abs() < 0.3, "{i} vs {j}: {ncc}");
        }
    }
}

#[test]
fn pool_cycles_identities() {
    let pool = toy_pool(7, 3, 32, &ToyRanges::default(), 5).unwrap();
    assert_eq!(pool.iter().map(|s| s.identity).collect::<Vec<_>>(), [0, 1, 2, 0, 1, 2, 0]);
    assert_eq!(pool[0].spec.identity_seed, pool[3].spec.identity_seed);
    assert_ne!(pool[0].spec.identity_seed, pool[1].spec.identity_seed);
    let again = toy_pool(7, 3, 32, &ToyRanges::default(), 5).unwrap();
    assert!(pool.iter().zip(&again).all(|(a, b)| a.image == b.image));
}
