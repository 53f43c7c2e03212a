//! `cbf`: run experiments and property checks from the command line.
//!
//! Exit status is 0 on success, 1 when a run completes but a check fails, and
//! 2 for usage, configuration or runtime errors.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cbf_core::harness::commands::{self, ControlApp, Format};
use cbf_core::harness::config::{Experiment, ExperimentConfig};
use cbf_core::harness::verify::{Scale, Suite};
use cbf_core::harness::init_threads;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cbf", version, about = "Pseudo-spectral Brinkman-Forchheimer runs and property checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum App {
    Invariance,
    TimeOptimal,
    Stabilize,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the regularized system.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Continue from a stamped checkpoint instead of the configured initial state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run property checks and print one JSON line per check.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write verify.jsonl here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Flip the sign of the Forchheimer term in the checks (self-test of the runner).
        #[arg(long)]
        mutate: bool,
        /// Use the large sample counts of the acceptance run.
        #[arg(long)]
        full: bool,
    },
    /// Feedback control applications.
    Control {
        #[arg(value_enum)]
        app: App,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Stationary regularized problem with an optional quantized sweep.
    Resolvent {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Equilibrium of the forced system.
    SteadyState {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn load(run: &RunArgs) -> cbf_core::Result<(Experiment, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &run.out {
        cfg.output_dir = out.clone();
    }
    let base = run.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let exp = cfg.materialize(&base)?;
    let out = if run.out.is_some() || cfg.output_dir.is_absolute() {
        cfg.output_dir.clone()
    } else {
        base.join(&cfg.output_dir)
    };
    Ok((exp, out))
}

fn format(f: FormatArg) -> Format {
    match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Jsonl => Format::Jsonl,
    }
}

fn run(cli: Cli, sink: &mut dyn Write) -> cbf_core::Result<bool> {
    match cli.command {
        Command::Simulate { run, format: f, resume } => {
            let (exp, out) = load(&run)?;
            commands::simulate(&exp, &out, format(f), resume.as_deref(), sink).map(|_| true)
        }
        Command::Verify { suite, seed, out, mutate, full } => {
            let suite: Suite = suite.parse()?;
            let scale = if full { Scale::acceptance() } else { Scale::quick() };
            commands::verify(suite, seed, mutate, scale, out.as_deref(), sink)
        }
        Command::Control { app, run, format: f } => {
            let (exp, out) = load(&run)?;
            let app = match app {
                App::Invariance => ControlApp::Invariance,
                App::TimeOptimal => ControlApp::TimeOptimal,
                App::Stabilize => ControlApp::Stabilize,
            };
            commands::control(&exp, app, &out, format(f), sink)
        }
        Command::Resolvent { run } => {
            let (exp, out) = load(&run)?;
            commands::resolvent(&exp, &out, sink)
        }
        Command::SteadyState { run } => {
            let (exp, out) = load(&run)?;
            commands::steady_state(&exp, &out, sink)
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    let result = run(cli, &mut lock);
    let _ = lock.flush();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("cbf: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("cbf: {e}");
            ExitCode::from(2)
        }
    }
}
