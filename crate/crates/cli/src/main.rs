use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use argate_core::corruption::{corrupt_splits, CorruptionError, CorruptionManifest, CorruptionSpec};
use argate_core::data::{
    load_cache, load_driver, load_har, save_cache, DataError, DriverOptions, SynthSpec,
};
use argate_core::fusion::FusionError;
use argate_core::harness::{
    aggregate, collect_reports, evaluate_accuracy, fusion_weight_histogram, load_checkpoint, load_splits,
    render_csv, render_markdown, run_experiment, run_experiment_grid, DatasetSpec, Executor, ExperimentConfig,
    GridConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "argate", version, about = "Regularized gating for multimodal sensor fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Har,
    Driver,
    Synth,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Load a raw dataset, normalize it and write a binary cache.
    PrepareData {
        dataset: DatasetKind,
        /// HAR directory or driver CSV file (unused for synth).
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Driver window length.
        #[arg(long, default_value_t = 1)]
        window: usize,
        /// Driver window stride.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Synthetic dataset seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Apply a corruption spec to both splits of a cache.
    Corrupt {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Test-split manifest; the train manifest goes next to it as `<stem>.train.csv`.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train one experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed instead of every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Test accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Fusion-weight histogram of one channel, split by corruption state.
    Fwdist {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        channel: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
    /// Run every cell of a grid config, one process per cell.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate the reports under a directory into a table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: kind={} msg={msg}", kind(&e));
            ExitCode::FAILURE
        }
    }
}

fn kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h {
                HarnessError::Config(_) => "config",
                HarnessError::Data(_) => "data",
                HarnessError::Corruption(_) => "corruption",
                HarnessError::Fusion(_) | HarnessError::Diff(_) => "model",
                HarnessError::Io { .. } => "io",
                HarnessError::Parse { .. } => "parse",
                HarnessError::NonFinite { .. } => "non_finite",
                HarnessError::UnsupportedVariant(_) => "unsupported_variant",
                HarnessError::ChannelMismatch { .. } => "channel_mismatch",
                HarnessError::UnknownChannel(_) => "unknown_channel",
                HarnessError::Run { .. } => "run",
            };
        }
        if cause.is::<DataError>() {
            return "data";
        }
        if cause.is::<CorruptionError>() {
            return "corruption";
        }
        if cause.is::<FusionError>() {
            return "model";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "other"
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PrepareData {
            dataset,
            root,
            out,
            window,
            stride,
            seed,
        } => {
            let splits = match dataset {
                DatasetKind::Har => load_har(&require_root(root)?)?,
                DatasetKind::Driver => {
                    let opts = DriverOptions {
                        window,
                        stride,
                        ..Default::default()
                    };
                    load_driver(&require_root(root)?, &opts)?
                }
                DatasetKind::Synth => {
                    let spec = SynthSpec {
                        seed,
                        ..Default::default()
                    };
                    load_splits(&DatasetSpec::Synth {
                        spec,
                        test_fraction: 0.25,
                    })?
                }
            };
            save_cache(&out, &splits)?;
            let manifest_path = out.with_extension("manifest.csv");
            splits.manifest.write_csv(&manifest_path)?;
            println!(
                "wrote {} (train {}, test {}, {} channels); manifest {}",
                out.display(),
                splits.train.len(),
                splits.test.len(),
                splits.train.channels().len(),
                manifest_path.display()
            );
        }
        Command::Corrupt {
            spec,
            input,
            out,
            manifest,
        } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: CorruptionSpec =
                toml::from_str(&text).map_err(|e| HarnessError::Parse { path: spec.clone(), msg: e.to_string() })?;
            let splits = load_cache(&input)?;
            let (corrupted, train_manifest, test_manifest) = corrupt_splits(&splits, &spec)?;
            save_cache(&out, &corrupted)?;
            test_manifest.write_csv(&manifest)?;
            let train_path = train_manifest_path(&manifest);
            train_manifest.write_csv(&train_path)?;
            println!(
                "wrote {} ({}); manifests {} and {}",
                out.display(),
                spec.label(),
                manifest.display(),
                train_path.display()
            );
        }
        Command::Train { config, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, seed)?;
            for s in &report.seeds {
                match (&s.error, s.test_accuracy) {
                    (Some(e), _) => bail!(HarnessError::Run {
                        name: cfg.name.clone(),
                        msg: format!("seed {}: {e}", s.seed)
                    }),
                    (None, Some(acc)) => println!("seed {}: test accuracy {acc:.2}%", s.seed),
                    (None, None) => println!("seed {}: done", s.seed),
                }
            }
            println!("report {}", cfg.output_dir.join("report.json").display());
        }
        Command::Eval { checkpoint, data } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let splits = load_cache(&data)?;
            let acc = evaluate_accuracy(&ckpt, &splits.test)?;
            println!("accuracy {acc:.4}");
        }
        Command::Fwdist {
            checkpoint,
            data,
            manifest,
            channel,
            out,
            bins,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let splits = load_cache(&data)?;
            let manifest = CorruptionManifest::read_csv(&manifest)?;
            let hist = fusion_weight_histogram(&ckpt, &splits.test, &manifest, &channel, bins)?;
            fs::write(&out, hist.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            let mean = |m: Option<f64>| m.map_or("-".to_string(), |v| format!("{v:.4}"));
            println!(
                "{channel}: clean n={} mean={}, corrupt n={} mean={}",
                hist.clean.count,
                mean(hist.clean.mean),
                hist.corrupt.count,
                mean(hist.corrupt.mean)
            );
        }
        Command::Grid { config, out } => {
            let grid = GridConfig::load(&config)?;
            let exe = std::env::current_exe().context("locating the argate executable")?;
            let rows = run_experiment_grid(&grid.expand(), &out, &Executor::Subprocess { exe })?;
            write_tables(&out, &rows)?;
            print!("{}", render_markdown(&rows));
        }
        Command::Report { input, format } => {
            let rows = aggregate(&collect_reports(&input)?);
            match format {
                Format::Csv => print!("{}", render_csv(&rows)),
                Format::Md => print!("{}", render_markdown(&rows)),
            }
        }
    }
    Ok(())
}

fn require_root(root: Option<PathBuf>) -> Result<PathBuf> {
    root.context("--root is required for this dataset")
}

fn train_manifest_path(manifest: &Path) -> PathBuf {
    let stem = manifest.file_stem().unwrap_or_default().to_string_lossy();
    manifest.with_file_name(format!("{stem}.train.csv"))
}

fn write_tables(dir: &Path, rows: &[argate_core::harness::TableRow]) -> Result<()> {
    for (name, text) in [("table.csv", render_csv(rows)), ("table.md", render_markdown(rows))] {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
