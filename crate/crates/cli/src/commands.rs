use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use idcgan::data::{print_attack, read_image, toy_pool, write_image, Checkpoint, Manifest, SampleClass, ToyRanges};
use idcgan::gan::{self, Generator};
use idcgan::matcher::{attack_eval, enroll, pair_scores, Probe};
use idcgan::pad::{cross_validate, evaluate, extract_all, fit, PadModel, Sample};
use idcgan::quality::{
    assess_all, chi2_distance, quality_score, Histogram, QualityConfig, SegmentConfig, DEFAULT_BINS, FOCUS_HALF_POWER,
    METRICS,
};
use idcgan::roc::{Roc, RocPoint};
use idcgan::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::output::{histogram_svg, num, write_file, CsvOut};
use crate::settings::RunConfig;
use crate::InputError;

const MANIFEST_COLUMNS: [&str; 4] = ["path", "identity", "class", "split"];

fn read_all(paths: &[PathBuf]) -> Result<Vec<GrayImage>> {
    paths.iter().map(|p| Ok(read_image(p)?)).collect()
}

fn image_ext(cfg: &RunConfig) -> Result<&'static str> {
    match cfg.get("format").unwrap_or("pgm") {
        "pgm" => Ok("pgm"),
        "png" => Ok("png"),
        other => Err(InputError(format!("format `{other}` is not pgm or png")).into()),
    }
}

pub fn synth_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let n: usize = cfg.parse_or("n", 200)?;
    let identities: usize = cfg.parse_or("identities", 20)?;
    let size: usize = cfg.parse_or("image_size", 32)?;
    let attacks: bool = cfg.parse_or("attacks", false)?;
    let ext = image_ext(cfg)?;
    let seed = cfg.seed()?;
    if n == 0 || identities == 0 {
        bail!(InputError("n and identities must be >= 1".into()));
    }
    let pool = toy_pool(n, identities, size, &ToyRanges::default(), seed)?;
    std::fs::create_dir_all(out.join("images")).with_context(|| format!("creating {}", out.join("images").display()))?;
    let mut manifest = CsvOut::new(out.join("manifest.csv"), &MANIFEST_COLUMNS)?;
    for (i, s) in pool.iter().enumerate() {
        let rel = format!("images/real_{i:05}.{ext}");
        write_image(out.join(&rel), &s.image)?;
        manifest.row([rel, s.identity.to_string(), "real".into(), String::new()])?;
    }
    if attacks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a77a);
        for (i, s) in pool.iter().enumerate() {
            let rel = format!("images/attack_{i:05}.{ext}");
            write_image(out.join(&rel), &print_attack(&s.image, &mut rng))?;
            manifest.row([rel, s.identity.to_string(), "attack".into(), String::new()])?;
        }
    }
    manifest.finish(cfg)?;
    Ok(())
}

pub fn train(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let gan_cfg = cfg.gan()?;
    let m = Manifest::load(manifest)?;
    let paths: Vec<PathBuf> = m.of_class(SampleClass::Real).map(|r| r.path.clone()).collect();
    if paths.is_empty() {
        bail!(InputError(format!("{}: no real images", manifest.display())));
    }
    let pool = read_all(&paths)?;
    for (img, p) in pool.iter().zip(&paths) {
        if img.width() != gan_cfg.image_size || img.height() != gan_cfg.image_size {
            bail!(InputError(format!(
                "{}: {}x{} image, expected {s}x{s}",
                p.display(),
                img.width(),
                img.height(),
                s = gan_cfg.image_size
            )));
        }
    }
    let outcome = gan::train(&gan_cfg, &pool, quality_score)?;
    outcome.generator.to_checkpoint().save(out.join("generator.ckpt"))?;
    outcome.discriminator.to_checkpoint().save(out.join("discriminator.ckpt"))?;
    let mut log = CsvOut::new(
        out.join("train_log.csv"),
        &["step", "d_loss", "g_loss", "mean_q_real", "mean_q_fake", "discarded", "ungated"],
    )?;
    for s in &outcome.log.steps {
        log.row([
            s.step.to_string(),
            num(s.d_loss),
            num(s.g_loss),
            num(s.mean_q_real),
            num(s.mean_q_fake),
            s.discarded.to_string(),
            s.ungated.to_string(),
        ])?;
    }
    log.finish(cfg)?;
    Ok(())
}

pub fn generate(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let n: usize = cfg.parse_or("n", 64)?;
    let ext = image_ext(cfg)?;
    let mut g = Generator::<f32>::from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let images = gan::generate(&mut g, n, cfg.seed()?)?;
    std::fs::create_dir_all(out.join("generated")).with_context(|| format!("creating {}", out.join("generated").display()))?;
    let mut manifest = CsvOut::new(out.join("generated.csv"), &MANIFEST_COLUMNS)?;
    for (i, img) in images.iter().enumerate() {
        let rel = format!("generated/synth_{i:05}.{ext}");
        write_image(out.join(&rel), img)?;
        manifest.row([rel, String::new(), "synthetic".into(), String::new()])?;
    }
    manifest.finish(cfg)?;
    Ok(())
}

/// `(path, class)` of every image in a manifest, or of every `.pgm`/`.png`
/// file in a directory (sorted, class left empty).
fn list_images(input: &Path) -> Result<Vec<(PathBuf, String)>> {
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
            .with_context(|| format!("reading {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "png")))
            .collect();
        paths.sort();
        Ok(paths.into_iter().map(|p| (p, String::new())).collect())
    } else {
        let m = Manifest::load(input)?;
        Ok(m.rows.into_iter().map(|r| (r.path, r.class.to_string())).collect())
    }
}

pub fn quality(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let qcfg = QualityConfig {
        segment: SegmentConfig::default(),
        focus_half_power: cfg.parse_or("focus_half_power", FOCUS_HALF_POWER)?,
    };
    let listed = list_images(input)?;
    if listed.is_empty() {
        bail!(InputError(format!("{}: no images", input.display())));
    }
    let paths: Vec<PathBuf> = listed.iter().map(|(p, _)| p.clone()).collect();
    let reports = assess_all(&read_all(&paths)?, &qcfg);
    let mut columns = vec!["path", "class"];
    columns.extend(METRICS.iter().map(|m| m.0));
    columns.extend(["segmented", "pupil_x", "pupil_y", "pupil_r", "iris_x", "iris_y", "iris_r"]);
    let mut csv = CsvOut::new(out.join("quality.csv"), &columns)?;
    for ((path, class), r) in listed.iter().zip(&reports) {
        let mut row = vec![path.display().to_string(), class.clone()];
        row.extend(r.values().map(num));
        row.push(r.segmentation.is_some().to_string());
        match &r.segmentation {
            Some(s) => row.extend([s.pupil.cx, s.pupil.cy, s.pupil.r, s.iris.cx, s.iris.cy, s.iris.r].map(num)),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        csv.row(row)?;
    }
    csv.finish(cfg)?;
    Ok(())
}

/// The metric columns of a quality CSV, in [`METRICS`] order.
fn read_quality(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let headers = reader.headers().with_context(|| path.display().to_string())?.clone();
    let idx: Vec<usize> = METRICS
        .iter()
        .map(|(name, ..)| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| InputError(format!("{}: missing column `{name}`", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut cols = vec![Vec::new(); METRICS.len()];
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| path.display().to_string())?;
        for (col, &i) in cols.iter_mut().zip(&idx) {
            let field = rec.get(i).unwrap_or("");
            let v: f64 = field
                .parse()
                .map_err(|_| InputError(format!("{}: row {}: bad number `{field}`", path.display(), line + 1)))?;
            col.push(v);
        }
    }
    Ok(cols)
}

pub fn chi2_report(cfg: &RunConfig, real: &Path, synth: &Path, out: &Path) -> Result<()> {
    let bins: usize = cfg.parse_or("bins", DEFAULT_BINS)?;
    let svg: bool = cfg.parse_or("svg", false)?;
    let (a, b) = (read_quality(real)?, read_quality(synth)?);
    let mut summary = CsvOut::new(out.join("chi2.csv"), &["metric", "chi2", "n_real", "n_synthetic", "bins", "lo", "hi"])?;
    let mut hist = CsvOut::new(out.join("chi2_hist.csv"), &["metric", "bin_lo", "bin_hi", "real", "synthetic"])?;
    for (k, &(name, lo, hi)) in METRICS.iter().enumerate() {
        let ha = Histogram::new(&a[k], bins, lo, hi).with_context(|| format!("{name} in {}", real.display()))?;
        let hb = Histogram::new(&b[k], bins, lo, hi).with_context(|| format!("{name} in {}", synth.display()))?;
        let chi2 = chi2_distance(&ha, &hb)?;
        summary.row([
            name.to_string(),
            num(chi2),
            a[k].len().to_string(),
            b[k].len().to_string(),
            bins.to_string(),
            num(lo),
            num(hi),
        ])?;
        let edges = ha.edges();
        for i in 0..bins {
            hist.row([
                name.to_string(),
                num(edges[i]),
                num(edges[i + 1]),
                num(ha.frequencies()[i]),
                num(hb.frequencies()[i]),
            ])?;
        }
        if svg {
            let title = format!("{name}: chi2 = {chi2:.4}");
            let doc = histogram_svg(&title, &edges, ("real", ha.frequencies()), ("synthetic", hb.frequencies()));
            write_file(&out.join(format!("hist_{name}.svg")), doc.as_bytes())?;
        }
    }
    summary.finish(cfg)?;
    hist.finish(cfg)?;
    Ok(())
}

fn roc_rows(csv: &mut CsvOut, curve: &str, points: &[RocPoint]) -> Result<()> {
    for p in points {
        csv.row([curve.to_string(), num(p.threshold), num(p.false_positive_rate), num(p.false_negative_rate)])?;
    }
    Ok(())
}

pub fn match_eval(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let m = Manifest::load(manifest)?;
    let real_rows: Vec<_> = m.of_class(SampleClass::Real).collect();
    let synth_rows: Vec<_> = m.of_class(SampleClass::Synthetic).collect();
    if let Some(r) = real_rows.iter().find(|r| r.identity.is_empty()) {
        bail!(InputError(format!("{}: real image without identity", r.path.display())));
    }
    let ids: Vec<&str> = real_rows.iter().map(|r| r.identity.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    if ids.is_empty() {
        bail!(InputError(format!("{}: no real images", manifest.display())));
    }
    let id_of = |s: &str| -> Result<u64> {
        ids.iter()
            .position(|&i| i == s)
            .map(|i| i as u64)
            .ok_or_else(|| InputError(format!("claimed identity `{s}` has no real images")).into())
    };
    let seg = SegmentConfig::default();
    let mut fallbacks = 0usize;
    let mut enroll_rows = |rows: &[&idcgan::data::ManifestRow], real: bool| -> Result<Vec<Probe>> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| {
                // unlabelled synthetic probes claim identities round-robin
                let identity = if !real && r.identity.is_empty() { (i % ids.len()) as u64 } else { id_of(&r.identity)? };
                let e = enroll(&read_image(&r.path)?, &seg);
                fallbacks += e.fallback as usize;
                Ok(Probe { identity, template: e.template })
            })
            .collect()
    };
    let real = enroll_rows(&real_rows, true)?;
    let synthetic = enroll_rows(&synth_rows, false)?;

    let mut scores = CsvOut::new(out.join("match_scores.csv"), &["pair", "probe", "reference", "label", "score"])?;
    let pairs = pair_scores(&real, &synthetic)?;
    for p in &pairs {
        let probe = if p.label == idcgan::matcher::PairLabel::SyntheticImpostor {
            &synth_rows[p.probe].path
        } else {
            &real_rows[p.probe].path
        };
        let reference = &real_rows[p.reference].path;
        let pair = format!("{}|{}", probe.display(), reference.display());
        scores.row([
            pair,
            probe.display().to_string(),
            reference.display().to_string(),
            p.label.as_str().to_string(),
            p.score.map(num).unwrap_or_default(),
        ])?;
    }
    scores.finish(cfg)?;

    let mut summary = CsvOut::new(out.join("match_summary.csv"), &["metric", "value"])?;
    let mut roc = CsvOut::new(out.join("match_roc.csv"), &["curve", "threshold", "frr", "far"])?;
    summary.row(["real_images".to_string(), real.len().to_string()])?;
    summary.row(["synthetic_probes".to_string(), synthetic.len().to_string()])?;
    summary.row(["fallback_enrollments".to_string(), fallbacks.to_string()])?;
    if synthetic.is_empty() {
        let set = idcgan::matcher::score_sets(&real, &[])?;
        let r = Roc::new(&set.real_impostor, &set.genuine)?;
        summary.row(["genuine".to_string(), set.genuine.len().to_string()])?;
        summary.row(["real_impostor".to_string(), set.real_impostor.len().to_string()])?;
        summary.row(["real_eer".to_string(), num(r.eer())])?;
        roc_rows(&mut roc, "real", &r.points)?;
    } else {
        let rep = attack_eval(&real, &synthetic)?;
        let s = &rep.scores;
        let a = rep.frr_at_zero_synthetic_far;
        let b = rep.synthetic_far_at_zero_frr;
        for (k, v) in [
            ("genuine", s.genuine.len().to_string()),
            ("real_impostor", s.real_impostor.len().to_string()),
            ("synthetic_impostor", s.synthetic_impostor.len().to_string()),
            ("unmatchable_genuine", s.unmatchable.genuine.to_string()),
            ("unmatchable_real_impostor", s.unmatchable.real_impostor.to_string()),
            ("unmatchable_synthetic_impostor", s.unmatchable.synthetic_impostor.to_string()),
            ("real_eer", num(rep.real_eer)),
            ("synthetic_eer", num(rep.synthetic_eer)),
            ("frr_at_zero_synthetic_far", num(a.frr)),
            ("threshold_at_zero_synthetic_far", num(a.threshold)),
            ("synthetic_far_at_zero_frr", num(b.far)),
            ("threshold_at_zero_frr", num(b.threshold)),
        ] {
            summary.row([k.to_string(), v])?;
        }
        roc_rows(&mut roc, "real", &rep.real_roc.points)?;
        roc_rows(&mut roc, "synthetic", &rep.synthetic_roc.points)?;
    }
    summary.finish(cfg)?;
    roc.finish(cfg)?;
    Ok(())
}

/// Real rows are bona fide; attack and synthetic rows are attacks.
/// Identities are used for fold grouping only when every row has one.
fn pad_samples(manifest: &Path) -> Result<(Vec<PathBuf>, Vec<Sample>)> {
    let m = Manifest::load(manifest)?;
    if m.rows.is_empty() {
        bail!(InputError(format!("{}: empty manifest", manifest.display())));
    }
    let ids: Vec<&str> = m.rows.iter().map(|r| r.identity.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let grouped = m.rows.iter().all(|r| !r.identity.is_empty());
    let paths: Vec<PathBuf> = m.rows.iter().map(|r| r.path.clone()).collect();
    let feats = extract_all(&read_all(&paths)?, &SegmentConfig::default());
    let samples = m
        .rows
        .iter()
        .zip(feats)
        .map(|(r, features)| Sample {
            features,
            attack: r.class != SampleClass::Real,
            identity: grouped.then(|| ids.iter().position(|&i| i == r.identity).expect("collected above") as u64),
        })
        .collect();
    Ok((paths, samples))
}

fn label(s: &Sample) -> &'static str {
    if s.attack {
        "attack"
    } else {
        "real"
    }
}

pub fn pad_train(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let pad_cfg = cfg.pad()?;
    let (paths, samples) = pad_samples(manifest)?;
    let cv = cross_validate(&samples, &pad_cfg)?;
    let mut folds = CsvOut::new(out.join("pad_folds.csv"), &["fold", "train_size", "test_size", "accuracy", "eer"])?;
    for f in &cv.folds {
        folds.row([
            f.fold.to_string(),
            f.train_size.to_string(),
            f.test_size.to_string(),
            num(f.accuracy),
            num(f.eer),
        ])?;
    }
    folds.row(["mean".to_string(), String::new(), samples.len().to_string(), num(cv.mean_accuracy), num(cv.mean_eer)])?;
    folds.finish(cfg)?;

    let mut roc = CsvOut::new(out.join("pad_roc.csv"), &["threshold", "false_positive_rate", "false_negative_rate"])?;
    for p in &cv.roc.points {
        roc.row([num(p.threshold), num(p.false_positive_rate), num(p.false_negative_rate)])?;
    }
    roc.finish(cfg)?;

    let mut scores = CsvOut::new(out.join("pad_scores.csv"), &["path", "label", "fold", "attack_probability"])?;
    for (i, s) in samples.iter().enumerate() {
        scores.row([paths[i].display().to_string(), label(s).into(), cv.fold_of[i].to_string(), num(cv.scores[i])])?;
    }
    scores.finish(cfg)?;

    let mut model = fit(&samples, &pad_cfg, pad_cfg.seed)?;
    model.metadata.push(("config_sha256".into(), cfg.hash()));
    model.save(out.join("pad_model.ckpt"))?;
    Ok(())
}

pub fn pad_eval(cfg: &RunConfig, model: &Path, manifest: &Path, out: &Path) -> Result<()> {
    let model = PadModel::load(model)?;
    let (paths, samples) = pad_samples(manifest)?;
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let probs = model.predict(&rows)?;
    let mut csv = CsvOut::new(out.join("pad_eval.csv"), &["path", "label", "attack_probability", "predicted"])?;
    for ((p, s), prob) in paths.iter().zip(&samples).zip(&probs) {
        let predicted = if *prob >= 0.5 { "attack" } else { "real" };
        csv.row([p.display().to_string(), label(s).into(), num(*prob), predicted.into()])?;
    }
    csv.finish(cfg)?;
    let mut summary = CsvOut::new(out.join("pad_eval_summary.csv"), &["metric", "value"])?;
    let n_attack = samples.iter().filter(|s| s.attack).count();
    summary.row(["real".to_string(), (samples.len() - n_attack).to_string()])?;
    summary.row(["attack".to_string(), n_attack.to_string()])?;
    if n_attack > 0 && n_attack < samples.len() {
        let (acc, eer, _) = evaluate(&model, &samples)?;
        summary.row(["accuracy".to_string(), num(acc)])?;
        summary.row(["eer".to_string(), num(eer)])?;
    }
    summary.finish(cfg)?;
    Ok(())
}
