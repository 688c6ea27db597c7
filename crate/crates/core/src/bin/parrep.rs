use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use parrep::config::{ConfigError, ExperimentConfig};
use parrep::experiment::{self, ExitSource, Outcome, RunError, SampleMethod};

/// Parallel replica dynamics and its verification experiments.
#[derive(Debug, Parser)]
#[command(name = "parrep", version)]
struct Cli {
    /// Output directory (overrides `output_dir` in the config; default `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Do not print the written files.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenpairs, QSD and exit statistics of a one-dimensional well.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
    },
    /// Exit time and exit side samples tested against the spectral oracle.
    ExitStats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "qsd_exact")]
        source: ExitSource,
    },
    /// Approximate QSD samples.
    QsdSample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fv")]
        method: SampleMethod,
    },
    /// Convergence of the conditioned law to the QSD.
    Decay {
        #[arg(long)]
        config: PathBuf,
    },
    /// Parallel replica run.
    ParrepRun {
        #[arg(long)]
        config: PathBuf,
    },
    /// Plain simulation with the same output format as `parrep-run`.
    DirectRun {
        #[arg(long)]
        config: PathBuf,
    },
    /// Statistical comparison of two events tables.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Exit with status 4 when any test rejects.
        #[arg(long = "assert")]
        assert_equal: bool,
    },
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| {
        RunError::Config(ConfigError::Syntax {
            line: 0,
            message: format!("cannot read {}: {e}", path.display()),
        })
    })
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::parse(&read(path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(Outcome, Option<PathBuf>), RunError> {
    let with = |path: &Path, f: &dyn Fn(&ExperimentConfig) -> Result<Outcome, RunError>| {
        let cfg = load(path, cli.seed)?;
        Ok((f(&cfg)?, cfg.output_dir.clone()))
    };
    match &cli.command {
        Command::Spectrum { config } => with(config, &experiment::spectrum),
        Command::ExitStats { config, source } => with(config, &|c| experiment::exit_stats(c, *source)),
        Command::QsdSample { config, method } => with(config, &|c| experiment::qsd_sample(c, *method)),
        Command::Decay { config } => with(config, &experiment::decay),
        Command::ParrepRun { config } => with(config, &experiment::parrep),
        Command::DirectRun { config } => with(config, &experiment::direct),
        Command::Compare { a, b, .. } => {
            let (ta, tb) = (read(a)?, read(b)?);
            let out = experiment::compare((&a.display().to_string(), &ta), (&b.display().to_string(), &tb))?;
            Ok((out, None))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (outcome, config_dir) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let dir = cli.out.clone().or(config_dir).unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return ExitCode::FAILURE;
    }
    for a in &outcome.artifacts {
        let path = dir.join(&a.name);
        if let Err(e) = fs::write(&path, &a.contents) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
        if !cli.quiet {
            println!("{}", path.display());
        }
    }
    match (&cli.command, outcome.verdict) {
        (Command::Compare { assert_equal: true, .. }, Some(false)) => {
            eprintln!("comparison rejected at the 1% level");
            ExitCode::from(4)
        }
        _ => ExitCode::SUCCESS,
    }
}
