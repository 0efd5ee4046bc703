//! Command-line front end over [`crate::pipeline`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::detector::detector_classify;
use crate::error::{Error, Result};
use crate::io;
use crate::pipeline::{self, RunDir, StageStatus};

#[derive(Debug, Parser)]
#[command(name = "asdetect", version, about = "Activation-space adversarial example detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat key = value config file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Config override, repeatable: `--set detector.alpha=0.05`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory holding every artifact.
    #[arg(short, long, default_value = "run")]
    out: PathBuf,
    /// Re-run even when the stage's outputs are up to date.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate (or ingest) the dataset and write the four splits.
    GenData(RunArgs),
    /// Train the classifier network on the training split.
    TrainNet(RunArgs),
    /// Craft adversarial examples from the held-out split.
    Attack(RunArgs),
    /// Fit activation spaces, k-NN labellers, switch model and cutoff.
    FitDetector(RunArgs),
    /// Classify samples from a dataset or text file.
    Score {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        detector: PathBuf,
        /// `ASDAT1` file or text with one comma/space-separated sample per line.
        #[arg(long)]
        input: PathBuf,
    },
    /// Evaluate on held-out data and write CSVs plus `summary.txt`.
    Report(RunArgs),
    /// Every stage in order.
    RunAll(RunArgs),
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&args.overrides)?;
    Ok(cfg)
}

fn report_stage(name: &str, status: StageStatus) {
    let what = match status {
        StageStatus::Ran => "done",
        StageStatus::Skipped => "up to date, skipped",
    };
    eprintln!("{name}: {what}");
}

type StageFn = fn(&RunConfig, &RunDir, bool) -> Result<StageStatus>;

fn run_one(name: &str, args: &RunArgs, stage: StageFn) -> Result<()> {
    let cfg = load_config(args)?;
    let status = stage(&cfg, &RunDir::new(&args.out), args.force)?;
    report_stage(name, status);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => run_one("gen-data", &a, pipeline::stage_gen_data),
        Command::TrainNet(a) => run_one("train-net", &a, pipeline::stage_train_net),
        Command::Attack(a) => run_one("attack", &a, pipeline::stage_attack),
        Command::FitDetector(a) => run_one("fit-detector", &a, pipeline::stage_fit_detector),
        Command::Report(a) => {
            run_one("report", &a, pipeline::stage_report)?;
            print!("{}", pipeline::load_summary(&RunDir::new(&a.out))?.to_text());
            Ok(())
        }
        Command::RunAll(a) => {
            let cfg = load_config(&a)?;
            let (summary, log) = pipeline::run_all(&cfg, &RunDir::new(&a.out), a.force)?;
            for (name, status) in log.0 {
                report_stage(name, status);
            }
            print!("{}", summary.to_text());
            Ok(())
        }
        Command::Score { net, detector, input } => {
            let net = io::load_mlp(&net)?;
            let detector = io::load_detector(&detector)?;
            let samples = io::load_samples(&input)?;
            println!("sample,verdict,ll");
            for (i, row) in samples.row_iter().enumerate() {
                let c = detector_classify(&net, &detector, row)?;
                println!("{i},{},{}", c.verdict, c.log_likelihood);
            }
            Ok(())
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns 0 on success, 2 on usage or config errors and 1 on any other
/// failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            // A malformed config is a usage problem, like a bad flag.
            if matches!(e, Error::Config(_)) {
                2
            } else {
                1
            }
        }
    }
}
