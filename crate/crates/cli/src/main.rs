//! `idcgan`: toy data, quality-gated GAN training, quality reports, the
//! synthetic-iris attack evaluation and presentation attack detection.

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::RunConfig;

/// Bad configuration or input data (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

#[derive(Debug, Parser)]
#[command(name = "idcgan", version, about = "Quality-gated iris synthesis, iris quality, matching and PAD")]
struct Cli {
    /// File of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "IDCGAN_OUT", default_value = ".")]
    out: PathBuf,
    /// Config override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a toy iris corpus and its manifest.
    SynthData {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        identities: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        /// Also write one print attack per image.
        #[arg(long)]
        attacks: bool,
        /// pgm or png.
        #[arg(long)]
        format: Option<String>,
    },
    /// Train the generator/discriminator pair on the real rows of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sample images from a generator checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Per-image quality scores for a manifest or an image directory.
    Quality { input: PathBuf },
    /// Per-metric χ² distances between two quality CSVs.
    Chi2Report {
        real: PathBuf,
        synth: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
        /// Also write one SVG histogram per metric.
        #[arg(long)]
        svg: bool,
    },
    /// Genuine, impostor and synthetic-impostor scores with threshold analysis.
    MatchEval {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Cross-validate the PAD classifier and save a model fit on everything.
    PadTrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Score a manifest with a saved PAD model.
    PadEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthData { .. } => "synth-data",
            Command::Train { .. } => "train",
            Command::Generate { .. } => "generate",
            Command::Quality { .. } => "quality",
            Command::Chi2Report { .. } => "chi2-report",
            Command::MatchEval { .. } => "match-eval",
            Command::PadTrain { .. } => "pad-train",
            Command::PadEval { .. } => "pad-eval",
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, InputError> {
    let mut cfg = RunConfig::new(cli.command.name());
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    for s in &cli.set {
        cfg.set_assignment(s)?;
    }
    cfg.set_opt("seed", cli.seed)?;
    match &cli.command {
        Command::SynthData { n, identities, size, attacks, format } => {
            cfg.set_opt("n", *n)?;
            cfg.set_opt("identities", *identities)?;
            cfg.set_opt("image_size", *size)?;
            cfg.set_opt("attacks", attacks.then_some(true))?;
            cfg.set_opt("format", format.as_ref())?;
        }
        Command::Train { manifest, steps } => {
            cfg.input("manifest", manifest);
            cfg.set_opt("steps", *steps)?;
        }
        Command::Generate { checkpoint, n } => {
            cfg.input("checkpoint", checkpoint);
            cfg.set_opt("n", *n)?;
        }
        Command::Quality { input } => cfg.input("images", input),
        Command::Chi2Report { real, synth, bins, svg } => {
            cfg.input("real", real);
            cfg.input("synth", synth);
            cfg.set_opt("bins", *bins)?;
            cfg.set_opt("svg", svg.then_some(true))?;
        }
        Command::MatchEval { manifest } => cfg.input("manifest", manifest),
        Command::PadTrain { manifest, folds } => {
            cfg.input("manifest", manifest);
            cfg.set_opt("folds", *folds)?;
        }
        Command::PadEval { model, manifest } => {
            cfg.input("model", model);
            cfg.input("manifest", manifest);
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = build_config(cli)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| InputError(format!("{}: {e}", cli.out.display())))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::SynthData { .. } => commands::synth_data(&cfg, out),
        Command::Train { manifest, .. } => commands::train(&cfg, manifest, out),
        Command::Generate { checkpoint, .. } => commands::generate(&cfg, checkpoint, out),
        Command::Quality { input } => commands::quality(&cfg, input, out),
        Command::Chi2Report { real, synth, .. } => commands::chi2_report(&cfg, real, synth, out),
        Command::MatchEval { manifest } => commands::match_eval(&cfg, manifest, out),
        Command::PadTrain { manifest, .. } => commands::pad_train(&cfg, manifest, out),
        Command::PadEval { model, manifest } => commands::pad_eval(&cfg, model, manifest, out),
    }
}

/// 3 for numeric failures during training, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use idcgan::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NonFiniteGradient(_) | Error::BatchTooSmall(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

/// The error chain on one line, skipping causes already quoted by their
/// parent.
fn diagnostic(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("idcgan: {}", diagnostic(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
