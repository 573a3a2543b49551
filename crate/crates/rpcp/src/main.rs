use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpcp::dataset_io::{self, AugConfig};
use rpcp::metrics_stats;
use rpcp::patch_bank::{self, Connectivity};
use rpcp::pipeline;
use rpcp::Error;

#[derive(Parser)]
#[command(name = "rpcp", version, about = "Rare-class copy-and-paste augmentation for segmentation datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract rare-class patches into a bank archive.
    Extract {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        /// Bank archive output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Augment a dataset and write images, masks and a run manifest.
    Augment {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Report the per-class pixel distribution, optionally sampling pixels.
    Stats {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        /// Write reports here instead of stdout only.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Export up to N RGB pixel samples per class as CSV.
        #[arg(long)]
        sample_pixels: Option<usize>,
    },
    /// Evaluate predicted masks against ground truth (IoU/Acc, mIoU/mAcc).
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of predicted masks.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth masks.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> Result<AugConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            dataset_io::parse_config(&text)?
        }
        None => AugConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Extract {
            common,
            images,
            masks,
            out,
        } => {
            let cfg = load_config(&common)?;
            let pairs = dataset_io::scan_dataset(&images, &masks)?;
            let bank = patch_bank::build_bank(
                &pairs,
                &cfg.class_scheme,
                cfg.min_patch_area,
                Connectivity::Eight,
            )?;
            if bank.is_empty() {
                eprintln!("warning: no source-class patches found");
            }
            patch_bank::save_bank(&bank, &out)?;
            let summary = bank.summary();
            println!(
                "extracted {} patches (total area {} px) to {}",
                summary.patch_count,
                summary.total_area,
                out.display()
            );
            Ok(())
        }
        Command::Augment {
            common,
            images,
            masks,
            out,
            jobs,
        } => {
            let cfg = load_config(&common)?;
            let manifest = pipeline::run_augment(&cfg, &images, &masks, &out, jobs)?;
            println!(
                "augmented {} images: {} pastes succeeded, {} failed",
                manifest.summary.images_processed,
                manifest.summary.pastes_succeeded,
                manifest.summary.pastes_failed
            );
            Ok(())
        }
        Command::Stats {
            common,
            images,
            masks,
            out,
            sample_pixels,
        } => {
            let cfg = load_config(&common)?;
            let (pairs, report) = pipeline::run_stats(&images, &masks, &cfg)?;
            let scheme = &cfg.class_scheme;
            println!("{:<12} {:>12} {:>10}", "class", "pixels", "fraction");
            for (c, (&count, &frac)) in report.counts.iter().zip(&report.fractions).enumerate() {
                println!("{:<12} {:>12} {:>10.6}", scheme.names[c], count, frac);
            }
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let path = dir.join("distribution.json");
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(&path, json).map_err(|e| Error::Io {
                    path,
                    source: e,
                })?;
            }
            if let Some(n) = sample_pixels {
                let (mut rng, _) = pipeline::derive_stream(cfg.seed, "sample_pixels", 0);
                let samples = metrics_stats::sample_pixels(&pairs, scheme, n, &mut rng)?;
                let csv = metrics_stats::pixel_samples_csv(&samples);
                match &out {
                    Some(dir) => {
                        let path = dir.join("pixel_samples.csv");
                        std::fs::write(&path, csv).map_err(|e| Error::Io {
                            path,
                            source: e,
                        })?;
                    }
                    None => print!("{csv}"),
                }
            }
            Ok(())
        }
        Command::Eval {
            common,
            pred,
            gt,
            out,
        } => {
            let cfg = load_config(&common)?;
            let report = pipeline::run_eval(&pred, &gt, &cfg)?;
            print!("{}", report.to_text());
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let path = dir.join("metrics.json");
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(&path, json).map_err(|e| Error::Io {
                    path,
                    source: e,
                })?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
