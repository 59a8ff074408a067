use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spectral_ns::config::load_config;
use spectral_ns::convergence::{combined_study, spatial_study, temporal_study, ConvergenceReport};
use spectral_ns::run::{analyze, check_resolution, run_command, ExitStatus, ResolutionQuery};
use spectral_ns::{DealiasRule, Error, Result};

/// Environment variable capping the worker thread count.
const THREADS_ENV: &str = "SPECTRAL_NS_THREADS";

#[derive(Parser)]
#[command(name = "spectral-ns", version, about = "Periodic 3D Navier-Stokes pseudospectral solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Spatial,
    Temporal,
    Combined,
}

#[derive(Clone, Copy, ValueEnum)]
enum DealiasArg {
    TwoThirds,
    None,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write its run directory.
    Run {
        config: PathBuf,
        /// Override `output.directory`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a convergence study from the `[convergence]` section.
    Converge {
        study: StudyArg,
        config: PathBuf,
        /// Directory for `report.txt` and `samples.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-run the breakdown monitor over a stored run directory.
    Analyze { run_dir: PathBuf },
    /// Resolution requirement for a stored snapshot.
    CheckResolution {
        snapshot: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 4)]
        order: i32,
        /// Temporal error constant; estimated by step doubling when a config is given instead.
        #[arg(long)]
        c2: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "two-thirds")]
        dealias: DealiasArg,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn write_report(dir: &Path, report: &ConvergenceReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    for (name, body) in [("report.txt", report.to_text()), ("samples.csv", report.samples_csv())] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitStatus> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, output } => {
            let mut cfg = load_config(&config)?;
            if let Some(dir) = output {
                cfg.output.directory = dir;
            }
            let summary = run_command(&cfg)?;
            print!("{}", summary.to_text());
            Ok(summary.exit)
        }
        Command::Converge { study, config, output } => {
            let cfg = load_config(&config)?;
            let report = match study {
                StudyArg::Spatial => spatial_study(&cfg.spatial_study()?)?,
                StudyArg::Temporal => temporal_study(&cfg.temporal_study()?)?,
                StudyArg::Combined => combined_study(&cfg.combined_study()?)?,
            };
            let dir = output.unwrap_or_else(|| cfg.output.directory.join(format!("converge_{}", report.kind.as_str())));
            write_report(&dir, &report)?;
            print!("{}", report.to_text());
            Ok(ExitStatus::Clean)
        }
        Command::Analyze { run_dir } => {
            let analysis = analyze(&run_dir)?;
            print!("{}", analysis.to_text());
            Ok(ExitStatus::Clean)
        }
        Command::CheckResolution { snapshot, epsilon, dt, order, c2, config, dealias } => {
            let config = config.as_deref().map(load_config).transpose()?;
            let dealias = match dealias {
                DealiasArg::TwoThirds => DealiasRule::TwoThirds,
                DealiasArg::None => DealiasRule::None,
            };
            let answer = check_resolution(&ResolutionQuery { snapshot, epsilon, dt, order, c2, config, dealias })?;
            print!("{}", answer.to_text());
            Ok(ExitStatus::Clean)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = execute(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitStatus::for_error(&e)
    });
    ExitCode::from(status.code() as u8)
}
