//! Pipeline driver for the EEG QoE toolkit.
//!
//! Each subcommand is one stage: `synth` writes a labeled recording set,
//! `extract` turns recordings into feature tensors, `train`, `gridsearch`,
//! and `ablate` run the experiment protocols, and `report` collects their
//! artifacts into a chart and CSV.
//!
//! Outputs are a pure function of the config, the inputs, and the seed;
//! rerunning a stage reproduces its files byte for byte. The one exception
//! is `run.log`, which records wall-clock timestamps and is the only place
//! they appear.

mod ablate;
mod artifacts;
mod context;
mod extract;
mod gridsearch;
mod report;
mod synth;
mod traincmd;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use context::{CliError, CommandContext};

#[derive(Parser)]
#[command(
    name = "qoe-eeg",
    version,
    about = "EEG-based quality-of-experience prediction pipeline"
)]
struct Cli {
    /// Run configuration JSON; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override; defaults to the config's train seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overwrite outputs that already exist.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled recording set.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Band-pass filter recordings and extract feature tensors.
    Extract {
        /// Recording manifest written by `synth` (or hand-assembled).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a stratified split and evaluate the holdout.
    Train {
        /// Features manifest written by `extract`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate every grid cell, then train the best one.
    Gridsearch {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure the score drop from removing each band or electrode.
    Ablate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect eval and ablation artifacts under a directory into a
    /// grouped bar chart and CSV table.
    Report {
        /// Directory scanned recursively for eval.json / ablation.json.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = env_logger::Env::new().filter_or("QOE_EEG_LOG", "warn");
    env_logger::Builder::from_env(env).format_timestamp(None).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot size thread pool: {e}")))?;
    }

    let out = match &cli.command {
        Command::Synth { out }
        | Command::Extract { out, .. }
        | Command::Train { out, .. }
        | Command::Gridsearch { out, .. }
        | Command::Ablate { out, .. }
        | Command::Report { out, .. } => out.clone(),
    };
    let mut ctx =
        CommandContext::new(cli.config.as_deref(), cli.seed, cli.force, out)?;

    match &cli.command {
        Command::Synth { .. } => {
            synth::run(&mut ctx)?;
            ctx.finish("synth")
        }
        Command::Extract { input, .. } => {
            extract::run(&mut ctx, input)?;
            ctx.finish("extract")
        }
        Command::Train { features, .. } => {
            traincmd::run(&mut ctx, features)?;
            ctx.finish("train")
        }
        Command::Gridsearch { features, .. } => {
            gridsearch::run(&mut ctx, features)?;
            ctx.finish("gridsearch")
        }
        Command::Ablate { features, .. } => {
            ablate::run(&mut ctx, features)?;
            ctx.finish("ablate")
        }
        Command::Report { input, .. } => {
            report::run(&mut ctx, input)?;
            ctx.finish("report")
        }
    }
}
