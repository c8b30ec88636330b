use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use spcascade::commands::{self, Corpus, Work};
use spcascade::config::PipelineConfig;
use spcascade::overlay::SliceSel;
use spcascade::{Error, Result};

/// Superpixel cascade segmentation of 3D scans.
#[derive(Parser)]
#[command(name = "spcascade", version)]
struct Cli {
    /// JSON configuration file; unspecified fields keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Cascade framework.
    #[arg(long, global = true, value_parser = ["f1", "f2"])]
    framework: Option<String>,
    /// Config override as dotted.path=value (repeatable).
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// Directory holding corpus.json.
    #[arg(long)]
    corpus: PathBuf,
    /// Work directory for intermediate files, models and reports.
    #[arg(long)]
    work: PathBuf,
}

#[derive(Args)]
struct FoldArgs {
    #[command(flatten)]
    io: CorpusArgs,
    /// Cross-validation fold; without it every volume is used.
    #[arg(long)]
    fold: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom corpus.
    Phantoms {
        #[arg(long, default_value_t = 12)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Over-segment every corpus volume into superpixels.
    Oversegment(CorpusArgs),
    /// Fit the intensity KDE and the patch random forest.
    TrainPatchRf(FoldArgs),
    /// Train the patch CNN (framework f2).
    TrainCnn(FoldArgs),
    /// Compute dense patch probability maps.
    Label(FoldArgs),
    /// Train the superpixel cascade.
    TrainCascade(FoldArgs),
    /// Segment the fold's test volumes.
    Segment(FoldArgs),
    /// Compute overlap metrics.
    Evaluate {
        /// Evaluate all fold predictions of a corpus.
        #[arg(long, requires = "work", conflicts_with_all = ["pred", "gt"])]
        corpus: Option<PathBuf>,
        #[arg(long)]
        work: Option<PathBuf>,
        /// Single predicted mask.
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        /// Single ground-truth mask.
        #[arg(long, requires = "pred")]
        gt: Option<PathBuf>,
        /// Report file for the single-pair mode.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full k-fold cross-validation.
    Crossval(CorpusArgs),
    /// Write PNG contour overlays.
    Overlay {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Slice index or "all".
        #[arg(long, default_value = "all")]
        slice: SliceSel,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let base = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(f) = &cli.framework {
        overrides.push(format!("framework=\"{f}\""));
    }
    let cfg = base.with_overrides(&overrides)?;
    cfg.log_deviations();
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                field: "workers".into(),
                msg: e.to_string(),
            })?;
    }
    let cfg = config(&cli)?;
    let open = |a: &CorpusArgs| -> Result<(Corpus, Work)> {
        Ok((Corpus::open(&a.corpus)?, Work::new(&a.work)))
    };
    match &cli.command {
        Command::Phantoms { count, out } => {
            commands::cmd_phantoms(*count, &cfg.phantom, out)?;
        }
        Command::Oversegment(a) => {
            let (c, w) = open(a)?;
            commands::cmd_oversegment(&c, &w, &cfg)?;
        }
        Command::TrainPatchRf(a) => {
            let (c, w) = open(&a.io)?;
            commands::cmd_train_patch_rf(&c, &w, &cfg, a.fold)?;
        }
        Command::TrainCnn(a) => {
            let (c, w) = open(&a.io)?;
            commands::cmd_train_cnn(&c, &w, &cfg, a.fold)?;
        }
        Command::Label(a) => {
            let (c, w) = open(&a.io)?;
            commands::cmd_label(&c, &w, &cfg, a.fold)?;
        }
        Command::TrainCascade(a) => {
            let (c, w) = open(&a.io)?;
            commands::cmd_train_cascade(&c, &w, &cfg, a.fold)?;
        }
        Command::Segment(a) => {
            let (c, w) = open(&a.io)?;
            commands::cmd_segment(&c, &w, &cfg, a.fold)?;
        }
        Command::Evaluate {
            corpus,
            work,
            pred,
            gt,
            out,
        } => {
            let report = match (corpus, work, pred, gt) {
                (Some(c), Some(w), _, _) => {
                    commands::cmd_evaluate(&Corpus::open(c)?, &Work::new(w), &cfg)?
                }
                (_, _, Some(p), Some(g)) => commands::cmd_evaluate_pair(p, g, out.as_deref())?,
                _ => {
                    return Err(Error::InvalidArgument(
                        "evaluate needs --corpus with --work, or --pred with --gt".into(),
                    ))
                }
            };
            print!("{}", report.to_csv());
        }
        Command::Crossval(a) => {
            let (c, w) = open(a)?;
            let report = commands::cmd_crossval(&c, &w, &cfg)?;
            print!("{}", report.to_csv());
        }
        Command::Overlay {
            volume,
            gt,
            pred,
            slice,
            out,
        } => {
            for p in commands::cmd_overlay(volume, gt.as_deref(), pred.as_deref(), *slice, out)? {
                println!("{}", p.display());
            }
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
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
