//! `dsm`: scans, bifurcation diagrams, orbit searches, Ulam and quantum
//! spectra, and Husimi rendering for the dissipative standard map.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "dsm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; fields override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when unset.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Participation-ratio scan over (k, gamma).
    Scan {
        #[command(flatten)]
        common: Common,
        /// Continue an interrupted scan in the same output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Settled momentum distributions along k.
    Bifurcation {
        #[command(flatten)]
        common: Common,
    },
    /// Periodic orbit search.
    Orbits {
        #[command(flatten)]
        common: Common,
        /// Period; together with --w replaces the configured pairs.
        #[arg(long, requires = "w")]
        q: Option<usize>,
        #[arg(long, requires = "q", allow_hyphen_values = true)]
        w: Option<i64>,
    },
    /// Ulam transfer operator spectrum.
    Ulam {
        #[command(flatten)]
        common: Common,
    },
    /// Leading spectrum of the one-period quantum superoperator.
    Qspectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Husimi grids and the scar report.
    Husimi {
        #[command(flatten)]
        common: Common,
        /// DMRX operator to render instead of computing the spectrum.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Orbit CSV for the overlay and scar report.
        #[arg(long)]
        orbits: Option<PathBuf>,
    },
    /// Fast consistency checks of the numerical kernels.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    MissingInput(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput(msg)
        } else {
            CliError::Runtime(msg)
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::MissingInput(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::MissingInput(m) => write!(f, "missing input: {m}"),
        }
    }
}

impl From<dsm_core::Error> for CliError {
    fn from(e: dsm_core::Error) -> Self {
        match e {
            dsm_core::Error::InvalidParams(m) => CliError::Config(m),
            dsm_core::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput(io.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Everything a command needs: the resolved config and where to write.
pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
    pub command: &'static str,
    pub args: Vec<String>,
    pub workers: usize,
}

fn prepare(common: &Common, command: &'static str) -> Result<Run, CliError> {
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let config = config::resolve(
        common.config.as_deref(),
        &Overrides {
            preset: common.preset.clone(),
            seed: common.seed,
        },
    )?;
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::io(&common.out, e))?;
    Ok(Run {
        config,
        out: common.out.clone(),
        command,
        args: std::env::args().skip(1).collect(),
        workers: rayon::current_num_threads(),
    })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scan { common, resume } => commands::scan(&prepare(&common, "scan")?, resume),
        Command::Bifurcation { common } => commands::bifurcation(&prepare(&common, "bifurcation")?),
        Command::Orbits { common, q, w } => {
            let mut run = prepare(&common, "orbits")?;
            if let (Some(q), Some(w)) = (q, w) {
                if q == 0 {
                    return Err(CliError::Config("q must be >= 1".into()));
                }
                run.config.orbits.pairs = vec![(q, w)];
            }
            commands::orbits(&run)
        }
        Command::Ulam { common } => commands::ulam(&prepare(&common, "ulam")?),
        Command::Qspectrum { common } => commands::qspectrum(&prepare(&common, "qspectrum")?),
        Command::Husimi {
            common,
            input,
            orbits,
        } => {
            let mut run = prepare(&common, "husimi")?;
            if input.is_some() {
                run.config.husimi.input = input;
            }
            if orbits.is_some() {
                run.config.husimi.orbits_csv = orbits;
            }
            commands::husimi(&run)
        }
        Command::Selftest { common } => commands::selftest(&prepare(&common, "selftest")?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dsm: {e}");
            ExitCode::from(e.code())
        }
    }
}
