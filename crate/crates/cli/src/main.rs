//! `tc4tl`: generate corpora, train both stages, predict, score and run the
//! ablation suite from one config file.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use tc4tl_core::config::RunConfig;
use tc4tl_core::distance::LookMode;
use tc4tl_core::fsio::read_to_string;
use tc4tl_core::ingest::FeatureMask;
use tc4tl_core::pipeline::{self, Layout, Split};
use tc4tl_core::Error;

#[derive(Parser)]
#[command(name = "tc4tl", version, about = "BLE proximity classification pipeline")]
struct Cli {
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set net.epochs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads for per-event work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_parser = parse_look)]
    look: Option<LookMode>,

    /// Withhold a feature from the distance model. Repeatable.
    #[arg(long = "mask", value_name = "NAME", global = true)]
    masks: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train, dev and test corpora.
    Gen,
    /// Train the angle model on the training split.
    TrainAngle,
    /// Train the distance model on the training split.
    TrainDist,
    /// Train both stages.
    Train,
    /// Write a system-output file for one split.
    Predict {
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Score a system output against a key.
    Score {
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Key file (default: the split's reference key).
        #[arg(long)]
        key: Option<PathBuf>,
        /// System output (default: the split's prediction file).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Report file stem under the reports directory.
        #[arg(long)]
        name: Option<String>,
    },
    /// Train, predict and score every ablation variant.
    Ablate,
    /// Print every saved score report.
    Report {
        /// Directory to search (default: the reports directory).
        dir: Option<PathBuf>,
    },
}

fn parse_look(s: &str) -> Result<LookMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_text(&read_to_string(path)?)
            .with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    for assignment in &cli.overrides {
        config.apply_override(assignment)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(look) = cli.look {
        config.look_mode = look;
    }
    if !cli.masks.is_empty() {
        config.feature_mask = cli
            .masks
            .iter()
            .try_fold(FeatureMask::none(), |m, name| match name.as_str() {
                "none" => Ok(m),
                name => m.with(name),
            })?;
    }
    config.validate()?;
    Ok(config)
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("starting worker pool")?;
    }
    let layout = Layout::new(&config);

    match cli.command {
        Command::Gen => {
            for s in pipeline::cmd_gen(&config)? {
                println!("{}: {} events in {}", s.split.as_str(), s.events, s.dir.display());
            }
        }
        Command::TrainAngle => {
            let model = pipeline::cmd_train_angle(&config, &log)?;
            println!("angle model: {} trees -> {}", model.tree_count(), layout.angle_model().display());
        }
        Command::TrainDist => {
            let trained = pipeline::cmd_train_dist(&config, &log)?;
            println!(
                "distance model: row accuracy {:.4} -> {}",
                trained.row_accuracy,
                layout.distance_model().display()
            );
        }
        Command::Train => {
            let trained = pipeline::cmd_train(&config, &log)?;
            println!(
                "trained (fingerprint {}): row accuracy {:.4}",
                config.fingerprint(),
                trained.row_accuracy
            );
        }
        Command::Predict { split } => {
            let summary = pipeline::cmd_predict(&config, split)?;
            println!("{} predictions -> {}", summary.written, summary.output_path.display());
            if !summary.failures.is_empty() {
                for (what, err) in &summary.failures {
                    eprintln!("failed: {what}: {err}");
                }
                return Err(Error::InvalidData(format!(
                    "{} event(s) could not be predicted",
                    summary.failures.len()
                ))
                .into());
            }
        }
        Command::Score {
            split,
            key,
            output,
            name,
        } => {
            let key = key.unwrap_or_else(|| layout.key_path(split));
            let output = output.unwrap_or_else(|| layout.output_path(split));
            let report = pipeline::cmd_score(&config, &key, &output)?;
            let stem = name.unwrap_or_else(|| format!("{}.score", split.as_str()));
            pipeline::write_report(&config.paths.reports, &stem, &report)?;
            print!("{}", report.render_text());
            report.require_valid()?;
        }
        Command::Ablate => {
            let (variants, summary) = pipeline::cmd_ablate(&config, &log)?;
            for v in &variants {
                println!("== {} (mask {}, look {})", v.name, v.mask, v.look);
                print!("{}", v.report.render_text());
                println!();
            }
            print!("{}", pipeline::render_ablation_summary(&variants));
            eprintln!("summary -> {}", summary.display());
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| config.paths.reports.clone());
            if !dir.is_dir() {
                bail!(Error::InvalidData(format!("{} is not a directory", dir.display())));
            }
            print!("{}", pipeline::cmd_report(&dir)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Fingerprint { .. }) => 1,
        Some(Error::Divergence(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
