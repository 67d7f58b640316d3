//! `afe` — train, evaluate and run the audio emotion classification engine.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use afe_core::config::RunConfig;
use afe_core::error::{Error, Result};
use afe_core::pipeline;
use afe_core::synthetic;

#[derive(Parser)]
#[command(name = "afe", version, about = "Audio emotion classification engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let seed = self.seed.ok_or_else(|| {
                    Error::config("a seed is required: pass --seed or a config file".to_string())
                })?;
                RunConfig::with_seed(seed)
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// For deterministic commands (evaluate/predict) a seed is irrelevant;
    /// fall back to 0 when none is given.
    fn load_unseeded(&self) -> Result<RunConfig> {
        if self.config.is_none() && self.seed.is_none() {
            return Ok(RunConfig::with_seed(0));
        }
        self.load()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled corpus: either the built-in synthetic test tones,
    /// or fused music+speech sources.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for WAVs and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Segments per class.
        #[arg(long, default_value_t = 30)]
        per_class: usize,
        /// Music-style source manifest (`path<TAB>category`); enables fusion.
        #[arg(long, requires = "speech_manifest")]
        music_manifest: Option<PathBuf>,
        /// Speech-style source manifest (`path<TAB>category`).
        #[arg(long, requires = "music_manifest")]
        speech_manifest: Option<PathBuf>,
    },
    /// Extract per-segment feature vectors from a manifest into a TSV.
    Extract {
        #[command(flatten)]
        config: ConfigArgs,
        /// Labeled manifest (`path<TAB>label<TAB>source_tag`).
        #[arg(long)]
        manifest: PathBuf,
        /// Output TSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the full ensemble and write the model bundle plus reports.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Labeled training manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the bundle and reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved bundle against a labeled manifest.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model bundle path.
        #[arg(long)]
        bundle: PathBuf,
        /// Labeled evaluation manifest.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Classify one audio file: one label per window plus proportions.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model bundle path.
        #[arg(long)]
        bundle: PathBuf,
        /// Input audio file (WAV).
        wav: PathBuf,
    },
    /// Describe a saved bundle.
    Report {
        /// Model bundle path.
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            config,
            out,
            per_class,
            music_manifest,
            speech_manifest,
        } => {
            let cfg = config.load()?;
            let manifest = match (music_manifest, speech_manifest) {
                (Some(music), Some(speech)) => pipeline::run_synth_mix(
                    &music,
                    &speech,
                    &out,
                    per_class,
                    cfg.sample_rate,
                    cfg.seed,
                )?,
                _ => synthetic::write_corpus(
                    &out,
                    cfg.seed,
                    per_class,
                    cfg.sample_rate,
                    cfg.window_seconds,
                )?,
            };
            println!("wrote {}", manifest.display());
        }
        Command::Extract { config, manifest, out } => {
            let cfg = config.load()?;
            let n = pipeline::run_extract(&cfg, &manifest, &out)?;
            println!("extracted {n} segments into {}", out.display());
        }
        Command::Train { config, manifest, out } => {
            let cfg = config.load()?;
            let (result, bundle_path) = pipeline::run_train(&cfg, &manifest, &out)?;
            println!("{}", result.report.render());
            println!("bundle: {}", bundle_path.display());
        }
        Command::Evaluate { config, bundle, manifest } => {
            let cfg = config.load_unseeded()?;
            let report = pipeline::run_evaluate(&bundle, &manifest, cfg.window_seconds)?;
            println!("{}", report.render());
        }
        Command::Predict { config, bundle, wav } => {
            let cfg = config.load_unseeded()?;
            let (labels, summary) = pipeline::run_predict(&bundle, &wav, cfg.window_seconds)?;
            for (i, label) in labels.iter().enumerate() {
                println!("segment {i}: {}", label.name());
            }
            print!("{summary}");
        }
        Command::Report { bundle } => {
            print!("{}", pipeline::run_report(&bundle)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
