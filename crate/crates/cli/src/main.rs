//! `fmd`: dataset generation, model training, attacks, denoising, scoring,
//! detector training/evaluation and the end-to-end experiment.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use fmd_core::attacks::{AttackConfig, AttackMethod};
use fmd_core::datagen::DatasetSpec;
use fmd_core::detectors::{evaluate, fit, points_of, select_best, tune, DetectorKind, DEFAULT_FOLDS};
use fmd_core::filters::{box_kernel, Denoiser, FilterTag};
use fmd_core::harness::{
    attack_images, build_dataset, read_image_dir, read_scores_csv, run_all, score_inputs,
    write_attack_log, write_image_dir, write_scores_csv, ClassifierChoice, ExperimentConfig,
    NamedImage, REPORT_JSON,
};
use fmd_core::model::{load_weights, save_weights, train, TrainConfig};
use fmd_core::scoring::{score_dataset, Alignment, AttackTag, Norm, ScoreSettings};
use fmd_core::{FmdError, Result};

#[derive(Parser)]
#[command(name = "fmd", version, about = "Feature map denoising: adversarial example detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic shape dataset.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// CNN training.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Perturb an image directory with FGSM or BIM.
    Attack(AttackArgs),
    /// Apply a denoising filter to an image directory.
    Denoise(DenoiseArgs),
    /// Score image directories with a filter.
    Score(ScoreArgs),
    /// Detector training and evaluation.
    #[command(subcommand)]
    Detect(DetectCmd),
    /// End-to-end experiment.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Write `cls<label>_<index>.ppm` files and `manifest.csv`.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 0.02)]
        noise_sigma: f64,
    },
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Train on an image directory and write weights.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Optional held-out directory for per-epoch validation accuracy.
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        momentum: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    method: AttackMethod,
    #[arg(long, default_value_t = 8.0 / 255.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    /// Per-iteration step (defaults to epsilon).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Median,
    WienerAdaptive,
    WienerDeconv,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long, value_enum)]
    filter: FilterArg,
    /// Window for median/adaptive Wiener; box-blur size for deconvolution.
    #[arg(long, default_value_t = 3)]
    window: usize,
    /// Deconvolution regularizer.
    #[arg(long = "K", default_value_t = 0.01)]
    k: f64,
    /// Adaptive Wiener noise power (default: mean local variance).
    #[arg(long)]
    noise_power: Option<f64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// `<clean|fgsm|bim>=<dir>`, repeatable.
    #[arg(long = "input", required = true)]
    inputs: Vec<String>,
    #[arg(long)]
    filter: FilterTag,
    /// Median window (default 3) or adaptive Wiener window (default 5).
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value = "l1")]
    norm: Norm,
    #[arg(long, value_enum, default_value_t = AlignmentArg::Union)]
    alignment: AlignmentArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignmentArg {
    Union,
    OrigOnly,
}

#[derive(Subcommand)]
enum DetectCmd {
    /// Tune and fit a detector on a scores CSV.
    Train {
        #[arg(long)]
        scores: PathBuf,
        /// knn, dtree, rforest, svm or auto.
        #[arg(long, default_value = "auto")]
        classifier: ClassifierChoice,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a detector on a scores CSV; prints metrics JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scores: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Dataset, model, attacks, scores, detectors and report.
    Run {
        /// JSON config; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        norm: Option<Norm>,
        #[arg(long)]
        classifier: Option<ClassifierChoice>,
        /// Reuse stages completed by an earlier run with the same config.
        #[arg(long)]
        resume: bool,
    },
}

/// Flag, else `FMD_SEED`, else `default`.
fn seed_or_env(flag: Option<u64>, default: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    let mut cfg = ExperimentConfig {
        seed: default,
        ..ExperimentConfig::default()
    };
    cfg.apply_env()?;
    Ok(cfg.seed)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| FmdError::io(path, e))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_model(path: &Path) -> Result<fmd_core::model::ModelParams> {
    load_weights(&std::fs::read(path).map_err(|e| FmdError::io(path, e))?)
}

fn labeled(images: &[NamedImage]) -> Vec<fmd_core::datagen::LabeledImage> {
    images
        .iter()
        .map(|n| fmd_core::datagen::LabeledImage {
            image: n.image.clone(),
            label: n.label,
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(DatasetCmd::Gen {
            out,
            seed,
            per_class,
            noise_sigma,
        }) => {
            let cfg = ExperimentConfig {
                seed: seed_or_env(seed, DatasetSpec::default().seed)?,
                dataset: DatasetSpec {
                    per_class,
                    noise_sigma,
                    ..DatasetSpec::default()
                },
                ..ExperimentConfig::default()
            };
            cfg.dataset.validate()?;
            let images = build_dataset(&cfg)?;
            write_image_dir(&out, &images)?;
            info!("wrote {} images to {}", images.len(), out.display());
        }
        Command::Model(ModelCmd::Train {
            data,
            valid,
            out,
            seed,
            epochs,
            learning_rate,
            momentum,
            batch_size,
        }) => {
            let d = TrainConfig::default();
            let cfg = TrainConfig {
                seed: seed_or_env(seed, d.seed)?,
                epochs: epochs.unwrap_or(d.epochs),
                learning_rate: learning_rate.unwrap_or(d.learning_rate),
                momentum: momentum.unwrap_or(d.momentum),
                batch_size: batch_size.unwrap_or(d.batch_size),
            };
            let samples = labeled(&read_image_dir(&data)?);
            let valid = valid.map(|v| read_image_dir(&v).map(|imgs| labeled(&imgs))).transpose()?;
            let outcome = train(&samples, valid.as_deref(), &cfg)?;
            std::fs::write(&out, save_weights(&outcome.params)).map_err(|e| FmdError::io(&out, e))?;
            print_json(&outcome.log)?;
        }
        Command::Attack(a) => {
            let params = load_model(&a.model)?;
            let cfg = AttackConfig {
                epsilon: a.epsilon,
                iterations: a.iterations,
                step: a.step,
            };
            let images = read_image_dir(&a.input)?;
            let (adv, log) = attack_images(&params, &images, a.method, &cfg)?;
            write_image_dir(&a.out, &adv)?;
            write_attack_log(&a.out.join("attack_log.csv"), &log)?;
            let fooled = log.iter().filter(|r| r.pred_adv != r.label).count();
            info!("{} of {} images misclassified after {}", fooled, log.len(), a.method.as_str());
        }
        Command::Denoise(d) => {
            let denoiser = match d.filter {
                FilterArg::Median => Denoiser::Median { window: d.window },
                FilterArg::WienerAdaptive => Denoiser::WienerAdaptive {
                    window: d.window,
                    noise_power: d.noise_power,
                },
                FilterArg::WienerDeconv => Denoiser::WienerDeconvolve {
                    kernel: box_kernel(d.window, d.window),
                    k: d.k,
                },
            };
            let images = read_image_dir(&d.input)?;
            let out = images
                .iter()
                .map(|n| {
                    Ok(NamedImage {
                        image: denoiser.apply(&n.image)?,
                        ..n.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_image_dir(&d.out, &out)?;
        }
        Command::Score(s) => {
            let params = load_model(&s.model)?;
            let mut sets = Vec::new();
            for spec in &s.inputs {
                let (tag, dir) = spec
                    .split_once('=')
                    .ok_or_else(|| FmdError::config(format!("--input expects <tag>=<dir>, got {spec:?}")))?;
                sets.push((tag.parse::<AttackTag>()?, read_image_dir(Path::new(dir))?));
            }
            let borrowed: Vec<(AttackTag, &[NamedImage])> = sets.iter().map(|(t, v)| (*t, v.as_slice())).collect();
            let denoiser = match s.filter {
                FilterTag::Median => Denoiser::Median {
                    window: s.window.unwrap_or(3),
                },
                FilterTag::Wiener => Denoiser::WienerAdaptive {
                    window: s.window.unwrap_or(5),
                    noise_power: None,
                },
            };
            let settings = ScoreSettings {
                k: s.k,
                norm: s.norm,
                alignment: match s.alignment {
                    AlignmentArg::Union => Alignment::Union,
                    AlignmentArg::OrigOnly => Alignment::OrigOnly,
                },
            };
            let records = score_dataset(&params, &score_inputs(&borrowed), &denoiser, &settings)?;
            write_scores_csv(&s.out, &records)?;
            info!("wrote {} scores to {}", records.len(), s.out.display());
        }
        Command::Detect(DetectCmd::Train {
            scores,
            classifier,
            seed,
            folds,
            out,
        }) => {
            let seed = seed_or_env(seed, ExperimentConfig::default().seed)?;
            let points = points_of(&read_scores_csv(&scores)?);
            let (kind, tuning) = match classifier {
                ClassifierChoice::Auto => {
                    let sel = select_best(&points, &DetectorKind::ALL, folds, seed)?;
                    (sel.kind, sel.tuning)
                }
                ClassifierChoice::Fixed(kind) => (kind, tune(&points, &kind.default_grid(), folds, seed)?),
            };
            let model = fit(&points, &tuning.best, seed)?;
            write_json(&out, &model)?;
            info!(
                "{} {} (cv accuracy {:.3}) -> {}",
                kind,
                tuning.best,
                tuning.cv_accuracy,
                out.display()
            );
            print_json(&tuning)?;
        }
        Command::Detect(DetectCmd::Eval { model, scores }) => {
            let text = std::fs::read_to_string(&model).map_err(|e| FmdError::io(&model, e))?;
            let model: fmd_core::detectors::DetectorModel =
                serde_json::from_str(&text).map_err(|e| FmdError::parse(model.display().to_string(), e.to_string()))?;
            print_json(&evaluate(&model, &read_scores_csv(&scores)?)?)?;
        }
        Command::Experiment(ExperimentCmd::Run {
            config,
            out,
            seed,
            epochs,
            candidates,
            k,
            norm,
            classifier,
            resume,
        }) => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            cfg.apply_env()?;
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = out {
                cfg.output_dir = v;
            }
            if let Some(v) = epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = candidates {
                cfg.candidates = v;
            }
            if let Some(v) = k {
                cfg.k = v;
            }
            if let Some(v) = norm {
                cfg.norm = v;
            }
            if let Some(v) = classifier {
                cfg.hybrid_classifier = v;
            }
            let report = run_all(&cfg, resume)?;
            print!("{}", report.to_text());
            info!("report: {}", cfg.output_dir.join(REPORT_JSON).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
