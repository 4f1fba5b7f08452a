use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use segfuse_cli::config::{BetaOutside, Grouping, NormalizationArg, Weighting};
use segfuse_cli::{commands, synth, ConfigError, PipelineConfig};
use segfuse_core::io::{load_manifest, save_bundle};
use segfuse_core::PredictionBundle;

#[derive(Parser)]
#[command(
    name = "segfuse",
    version,
    about = "Weighted ensemble and multi-scale fusion of segmentation logits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse instance masks across models.
    Fuse {
        manifest: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Run ensemble, local attention and the coarse-to-fine chain.
    Pipeline {
        manifest: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Score predictions against a ground-truth manifest.
    Evaluate {
        predictions: PathBuf,
        ground_truth: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Write a seeded synthetic manifest.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 96)]
        width: usize,
        #[arg(long, default_value_t = 4)]
        objects: usize,
        /// Perturbation magnitude per model, in pixels.
        #[arg(long, value_delimiter = ',', default_value = "0,2,4")]
        perturbations: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1")]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 1.2)]
        bbox_expansion: f64,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
        #[arg(long, default_value = "manifest.json")]
        name: String,
    },
}

#[derive(Args)]
struct Opts {
    /// Manifest with ground truth used to derive AP weights.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Weighting::Ap)]
    weighting: Weighting,
    #[arg(long, default_value_t = 0.6)]
    iou_threshold: f64,
    #[arg(long, value_enum, default_value_t = NormalizationArg::Fraction)]
    normalization: NormalizationArg,
    #[arg(long, value_enum, default_value_t = Grouping::Vertical)]
    grouping: Grouping,
    #[arg(long, default_value_t = 1.0)]
    attention_factor: f64,
    #[arg(long, default_value_t = 0.5)]
    binarize_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha_fallback: f64,
    #[arg(long, default_value_t = 1.2)]
    bbox_expansion: f64,
    #[arg(long, value_enum, default_value_t = BetaOutside::Neutral)]
    beta_outside: BetaOutside,
    /// Constant local-attention gate instead of computed attention.
    #[arg(long)]
    beta: Option<f64>,
    /// Subset of manifest scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

impl Opts {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            iou_threshold: self.iou_threshold,
            normalization: self.normalization,
            grouping: self.grouping,
            weighting: self.weighting,
            attention_factor: self.attention_factor,
            binarize_threshold: self.binarize_threshold,
            alpha_fallback: self.alpha_fallback,
            bbox_expansion: self.bbox_expansion,
            beta_outside: self.beta_outside,
            beta_override: self.beta,
            scales: self.scales.clone(),
            seed: self.seed,
            workers: self.workers,
            output_dir: self.output_dir.clone(),
        }
    }

    fn calibration(&self) -> anyhow::Result<Option<PredictionBundle>> {
        self.calibration
            .as_deref()
            .map(|p| {
                load_manifest(p).with_context(|| format!("loading calibration {}", p.display()))
            })
            .transpose()
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Fuse { manifest, opts } => {
            let cfg = opts.config();
            cfg.validate()?;
            let bundle = load_manifest(&manifest)?;
            let outcome = commands::fuse(&bundle, opts.calibration()?.as_ref(), &cfg)?;
            for p in commands::write_fuse(&outcome, &bundle, &cfg.output_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline { manifest, opts } => {
            let cfg = opts.config();
            cfg.validate()?;
            let bundle = load_manifest(&manifest)?;
            let outcome = commands::pipeline(&bundle, opts.calibration()?.as_ref(), &cfg)?;
            for p in commands::write_pipeline(&outcome, &bundle, &cfg.output_dir)? {
                println!("{}", p.display());
            }
        }
        Command::Evaluate {
            predictions,
            ground_truth,
            opts,
        } => {
            let cfg = opts.config();
            cfg.validate()?;
            let preds = load_manifest(&predictions)?;
            let gts = load_manifest(&ground_truth)?;
            let report = commands::evaluate(&preds, &gts, &cfg)?;
            let path = cfg.output_dir.join("evaluation.json");
            segfuse_core::io::write_json(&path, &report)?;
            println!("{}", path.display());
        }
        Command::Synth {
            seed,
            height,
            width,
            objects,
            perturbations,
            scales,
            bbox_expansion,
            output_dir,
            name,
        } => {
            let bundle = synth::generate(&synth::SynthConfig {
                seed,
                height,
                width,
                objects,
                perturbations,
                scales,
                bbox_expansion,
                ..Default::default()
            })?;
            let path = save_bundle(&bundle, &output_dir, &name)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
