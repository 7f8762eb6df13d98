//! Command-line driver for the beat-balancing experiment.

pub mod config;
pub mod pipeline;
pub mod waveforms;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::{parse_classes, RunConfig, CONFIG_HELP};
use pipeline::{Failure, OutputLock, StageError, StageResult};

#[derive(Parser, Debug)]
#[command(
    name = "beatgan",
    version,
    about = "Balance heartbeat classes with per-class GANs and compare a CNN classifier before and after",
    after_long_help = CONFIG_HELP
)]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Training CSV.
    #[arg(long, global = true, value_name = "CSV")]
    pub train: Option<PathBuf>,
    /// Test CSV.
    #[arg(long, global = true, value_name = "CSV")]
    pub test: Option<PathBuf>,
    /// Full scale: balance every class to 10000 beats.
    #[arg(long, global = true)]
    pub full: bool,
    /// Comma-separated classes to train GANs for.
    #[arg(long, global = true, value_name = "LIST")]
    pub classes: Option<String>,
    /// GAN epochs.
    #[arg(long, global = true, value_name = "N")]
    pub gan_epochs: Option<usize>,
    /// Classifier epochs.
    #[arg(long, global = true, value_name = "N")]
    pub cnn_epochs: Option<usize>,
    /// Desk-scale balance target and GAN training-set cap.
    #[arg(long, global = true, value_name = "N")]
    pub cap: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Print class counts of the training CSV and write histogram.csv.
    Stats,
    /// Train one GAN per under-represented class.
    TrainGan,
    /// Generate the synthetic beats each class needs.
    Synthesize,
    /// Assemble the balanced training set.
    Balance,
    /// Train and evaluate the classifier on the balanced set.
    TrainEval,
    /// Run the unbalanced and balanced experiments and write the delta report.
    Compare,
    /// Every stage in order: stats, train-gan, synthesize, balance, compare, waveforms.
    All,
    /// Write seeded synthetic train and test CSVs with the reference class counts.
    Surrogate,
    /// Export real and synthetic example beats per class as CSV and SVG.
    Waveforms {
        /// Real/synthetic pairs per class.
        #[arg(long, value_name = "N")]
        pairs: Option<usize>,
    },
}

impl Command {
    fn stages(self) -> Vec<fn(&RunConfig) -> StageResult<String>> {
        match self {
            Command::Stats => vec![pipeline::stats],
            Command::TrainGan => vec![pipeline::train_gan],
            Command::Synthesize => vec![pipeline::synthesize],
            Command::Balance => vec![pipeline::balance],
            Command::TrainEval => vec![pipeline::train_eval],
            Command::Compare => vec![pipeline::compare],
            Command::All => vec![
                pipeline::stats,
                pipeline::train_gan,
                pipeline::synthesize,
                pipeline::balance,
                pipeline::compare,
                pipeline::waveforms,
            ],
            Command::Surrogate => vec![pipeline::surrogate_data],
            Command::Waveforms { .. } => vec![pipeline::waveforms],
        }
    }
}

fn usage(message: impl std::fmt::Display) -> StageError {
    StageError {
        stage: "config",
        kind: Failure::Usage,
        message: message.to_string(),
    }
}

/// Config file first, then flags.
pub fn resolve_config(cli: &Cli) -> StageResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(p) = &cli.train {
        cfg.train_csv = p.clone();
    }
    if let Some(p) = &cli.test {
        cfg.test_csv = p.clone();
    }
    if cli.full {
        cfg.full = true;
    }
    if let Some(list) = &cli.classes {
        cfg.classes = Some(parse_classes(list).map_err(usage)?);
    }
    if let Some(n) = cli.gan_epochs {
        cfg.gan.epochs = n;
    }
    if let Some(n) = cli.cnn_epochs {
        cfg.cnn.epochs = n;
    }
    if let Some(cap) = cli.cap {
        cfg.cap = cap;
        cfg.cap_explicit = true;
    }
    if let Command::Waveforms { pairs: Some(n) } = cli.command {
        cfg.waveform_pairs = n;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> StageResult<()> {
    let cfg = resolve_config(cli)?;
    let _lock = match cli.command {
        Command::Surrogate => None,
        _ => Some(OutputLock::acquire(&cfg.out)?),
    };
    for stage in cli.command.stages() {
        println!("{}", stage(&cfg)?);
    }
    Ok(())
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => Failure::Usage.exit_code(),
            };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.stage, e.message);
            e.kind.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("beatgan").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "seed = 3\nout = from_file\ngan.epochs = 5\ncap = 100\n").unwrap();
        let cli = parse(&[
            "train-gan",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "9",
            "--classes",
            "3",
        ]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out, PathBuf::from("from_file"));
        assert_eq!(cfg.gan.epochs, 5);
        assert_eq!(cfg.cap, 100);
        assert_eq!(cfg.classes, Some(vec![3]));
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let cli = parse(&["stats", "--cap", "0"]);
        assert_eq!(resolve_config(&cli).unwrap_err().kind, Failure::Usage);
        let cli = parse(&["stats", "--classes", "7"]);
        assert_eq!(resolve_config(&cli).unwrap_err().kind, Failure::Usage);
    }

    #[test]
    fn help_exits_zero_and_bad_subcommand_one() {
        assert_eq!(run(["beatgan", "--help"]), 0);
        assert_eq!(run(["beatgan", "frobnicate"]), 1);
        assert_eq!(run(["beatgan"]), 1);
    }
}
