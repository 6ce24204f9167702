use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use handsign::canonical::{canonicalize, mirror_if_left, MirrorConfig};
use handsign::checkpoint::Checkpoint;
use handsign::landmark_io::{read_landmark_file, write_canonical_file, write_landmark_file, LandmarkFormat};
use handsign::metrics::evaluate;
use handsign::pipeline::{
    prepare, read_sequences, report_ablation, resume_stage2, run_pipeline, run_stage1_to_dir,
    write_canonical_artifact, AblationMode, PipelineConfig, Split, SplitFile, CANONICAL_FILE,
};
use handsign::split::{split_dataset, Manifest};
use handsign::synthetic::generate_synthetic;
use handsign::SequenceSampleF64;

#[derive(Parser)]
#[command(name = "handsign", version, about = "Hand-sign recognition from 3-D landmarks")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DataArgs {
    /// Landmark file (.jsonl or .csv). Synthetic data is generated when absent.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Expression JSONL keyed by video id.
    #[arg(long)]
    expressions: Option<PathBuf>,
    /// Split file written by `handsign split`.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Mirror left hands before canonicalization.
    #[arg(long)]
    mirror_left: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (landmarks, expressions, manifest).
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Landmark file format.
        #[arg(long, default_value = "jsonl")]
        format: LandmarkFormat,
    },
    /// Stratified train/test split of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Canonicalize every frame of a landmark file.
    Canonicalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mirror_left: bool,
    },
    /// Stage 1: train the frame classifier and write confidence sequences.
    TrainFrames {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<AblationMode>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Stage 2: train the LSTM from a stage-1 directory.
    TrainLstm {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Both stages for one ablation mode.
    Run {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<AblationMode>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// All four ablation modes on a shared split.
    Ablate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Evaluate an LSTM checkpoint on a sequences file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sequences: PathBuf,
        /// Which videos to score: train, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
}

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    Ok(c)
}

fn apply_data(c: &mut PipelineConfig, d: &DataArgs) {
    if d.landmarks.is_some() {
        c.landmarks = d.landmarks.clone();
    }
    if d.expressions.is_some() {
        c.expressions = d.expressions.clone();
    }
    if d.split.is_some() {
        c.split = d.split.clone();
    }
    c.mirror_left |= d.mirror_left;
}

fn save_config(c: &PipelineConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), c.to_toml())?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    let mut config = base_config(&cli)?;

    match &cli.command {
        Command::Generate { out, format } => {
            let d = generate_synthetic(&config.synthetic, config.seed)?;
            d.write_to_dir(out)?;
            if *format == LandmarkFormat::Csv {
                write_landmark_file(&out.join("landmarks.csv"), LandmarkFormat::Csv, &d.sequences)?;
                std::fs::remove_file(out.join(handsign::synthetic::LANDMARKS_FILE))?;
            }
            println!("wrote {} videos to {}", d.sequences.len(), out.display());
        }
        Command::Split {
            manifest,
            out,
            train_fraction,
        } => {
            let m = Manifest::load(manifest)?;
            let f = train_fraction.unwrap_or(config.train_fraction);
            let (train, test) = split_dataset(&m, f, config.seed)?;
            println!("{} train / {} test", train.videos.len(), test.videos.len());
            SplitFile { train, test }.save(out)?;
        }
        Command::Canonicalize {
            input,
            out,
            mirror_left,
        } => {
            let seqs = read_landmark_file(input, LandmarkFormat::from_path(input))?;
            let mirror = MirrorConfig {
                mirror_left: *mirror_left || config.mirror_left,
            };
            let mut canon = Vec::with_capacity(seqs.len());
            for (i, s) in seqs.iter().enumerate() {
                let frames = s
                    .frames()
                    .iter()
                    .enumerate()
                    .map(|(f, h)| {
                        canonicalize(&mirror_if_left(h, s.handedness, mirror)).with_context(|| {
                            format!(
                                "video {} frame {f}",
                                s.video_id.clone().unwrap_or_else(|| i.to_string())
                            )
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                canon.push(frames);
            }
            write_canonical_file(out, &seqs, &canon)?;
            println!("canonicalized {} videos", seqs.len());
        }
        Command::TrainFrames { out, mode, data } => {
            apply_data(&mut config, data);
            if let Some(m) = mode {
                config.ablation_mode = *m;
            }
            save_config(&config, out)?;
            let prepared = prepare(&config)?;
            write_canonical_artifact(&prepared, &out.join(CANONICAL_FILE))?;
            let s1 = run_stage1_to_dir(&prepared, config.ablation_mode, &config, out)?;
            println!(
                "stage 1 ({}): frame accuracy train {:.4} test {:.4}",
                s1.mode, s1.summary.train_frame_accuracy, s1.summary.test_frame_accuracy
            );
        }
        Command::TrainLstm { dir } => {
            if cli.config.is_none() && dir.join("config.toml").exists() {
                config = PipelineConfig::load(&dir.join("config.toml"))?;
                if let Some(s) = cli.seed {
                    config.seed = s;
                }
            }
            let r = resume_stage2(dir, &config)?;
            print!("{}", r.to_text());
        }
        Command::Run { out, mode, data } => {
            apply_data(&mut config, data);
            if let Some(m) = mode {
                config.ablation_mode = *m;
            }
            config.output_dir = Some(out.clone());
            save_config(&config, out)?;
            let r = run_pipeline(&config)?;
            print!("{}", r.to_text());
        }
        Command::Ablate { out, data } => {
            apply_data(&mut config, data);
            config.output_dir = Some(out.clone());
            save_config(&config, out)?;
            let r = report_ablation(&config)?;
            print!("{}", r.to_text());
        }
        Command::Eval {
            model,
            sequences,
            split,
        } => {
            let which = match split.as_str() {
                "train" => Some(Split::Train),
                "test" => Some(Split::Test),
                "all" => None,
                other => bail!("unknown split {other:?} (expected train, test or all)"),
            };
            let ckpt = Checkpoint::load(model)?;
            let n_classes = ckpt.class_names.len();
            let m = ckpt.into_lstm::<f64>()?;
            let samples = read_sequences(sequences)?
                .into_iter()
                .filter(|r| which.is_none_or(|w| r.split == w))
                .map(|r| SequenceSampleF64::new(&r.steps, r.class))
                .collect::<Result<Vec<_>, _>>()?;
            info!("evaluating {} sequences over {n_classes} classes", samples.len());
            let metrics = evaluate(&m, &samples)?;
            println!(
                "accuracy {:.4} ({}/{})",
                metrics.accuracy, metrics.correct, metrics.total
            );
        }
    }
    Ok(())
}
