//! `cwm` — train and evaluate duration-debiased watch-time models.
//!
//! Six verbs cover the full experiment loop:
//!
//! * `gen` — write a synthetic play log (plus ground truth) with known
//!   generating parameters.
//! * `train` — fit a scoring model under a chosen objective and save a
//!   JSON checkpoint.
//! * `eval` — score a split and report MAE/XAUC on watch-time predictions
//!   and AUC/nDCG on interest labels, overall and per duration bin.
//! * `predict` — per-record scores, interest estimates, and clipped
//!   watch-time predictions as CSV.
//! * `analyze` — dataset and report diagnostics (histograms, repeat-play,
//!   feedback proportions, per-bin improvement deltas, distribution fit).
//! * `sweep` — grid search over the cost/noise parameters, reporting
//!   validation metrics per cell.
//!
//! Every run is a pure function of (config, seed): outputs are
//! byte-identical across reruns. Existing outputs are never clobbered
//! unless `--force` is passed. `CWM_LOG=debug|info|warn` controls logging.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use cwm_core::Result;

use crate::config::RunConfig;

/// Flags shared by every verb. They are declared both before and after the
/// subcommand (clap's `global` would silently drop pre-verb values when the
/// verb also carries some), and the two positions merge: later occurrences
/// win, `--set` overrides accumulate in order.
#[derive(Debug, Args)]
struct CommonOpts {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; overrides the configuration's `seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Overwrite outputs that already exist.
    #[arg(long)]
    force: bool,

    /// Override one configuration key, e.g. `--set train.batch_size=256`.
    /// Values parse as JSON when possible, else as strings. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl CommonOpts {
    fn merged_with(self, later: CommonOpts) -> CommonOpts {
        let mut set = self.set;
        set.extend(later.set);
        CommonOpts {
            config: later.config.or(self.config),
            seed: later.seed.or(self.seed),
            force: self.force || later.force,
            set,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cwm", version, about = "Duration-debiased watch-time modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    opts: CommonOpts,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic play log with ground-truth interest.
    Gen(CommonOpts),
    /// Train a model and write a checkpoint plus an epoch log.
    Train(CommonOpts),
    /// Evaluate a checkpoint on a data split and write report files.
    Eval(CommonOpts),
    /// Write per-record predictions for a checkpoint.
    Predict(CommonOpts),
    /// Run a named analysis over data, predictions, or reports.
    Analyze(CommonOpts),
    /// Train and evaluate over a (cost_c, sigma) grid.
    Sweep(CommonOpts),
}

fn run(cli: Cli) -> Result<()> {
    let (verb, verb_opts): (fn(&RunConfig, bool) -> Result<()>, CommonOpts) = match cli.command {
        Command::Gen(o) => (commands::gen::run, o),
        Command::Train(o) => (commands::train::run, o),
        Command::Eval(o) => (commands::eval::run, o),
        Command::Predict(o) => (commands::predict::run, o),
        Command::Analyze(o) => (commands::analyze::run, o),
        Command::Sweep(o) => (commands::sweep::run, o),
    };
    let opts = cli.opts.merged_with(verb_opts);
    let cfg = RunConfig::load(opts.config.as_deref(), opts.seed, &opts.set)?;
    verb(&cfg, opts.force)
}


fn main() -> ExitCode {
    let env = env_logger::Env::new().filter_or("CWM_LOG", "warn");
    env_logger::Builder::from_env(env).format_timestamp(None).init();

    // Usage problems share exit code 1 with config errors; --help and
    // --version are not errors.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(1);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
