//! `geoflow` command-line driver.
//!
//! Exit status: 0 on success, 1 when a run, study or mesh check fails, 2 for
//! usage and configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Settings};

#[derive(Parser, Debug)]
#[command(
    name = "geoflow",
    version,
    about = "Energy-stable curvature flows of closed surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve one surface and write energy.csv, OBJ frames and summary.txt.
    Run(Overrides),
    /// Spatial convergence study against a finer reference level.
    Converge {
        #[command(flatten)]
        overrides: Overrides,
        /// Accept a time step that breaks the tau = h^2/180 coupling.
        #[arg(long)]
        allow_free_tau: bool,
    },
    /// Check that an OBJ file is a closed, oriented, non-degenerate surface.
    Validate { path: PathBuf },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Flat `key = value` file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Existing output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `sphere[:R]`, `ellipsoid[:a,b]` or `torus[:R,r,n_major,n_minor]`.
    #[arg(long)]
    surface: Option<String>,
    /// Icosphere subdivisions, or torus grid doublings.
    #[arg(long)]
    refinement: Option<u32>,
    /// area, mean-curvature-integral, willmore or quartic.
    #[arg(long)]
    density: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Write an OBJ frame every N steps (0 disables frames).
    #[arg(long)]
    frame_stride: Option<usize>,
    /// Comma-separated refinement levels of a study.
    #[arg(long)]
    levels: Option<String>,
    /// Refinement level of the reference run.
    #[arg(long)]
    reference: Option<u32>,
    /// Comma-separated checkpoint times, multiples of the first.
    #[arg(long)]
    checkpoints: Option<String>,
}

impl Overrides {
    fn settings(&self) -> Result<Settings, ConfigError> {
        let mut s = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        let flags: [(&str, Option<String>); 10] = [
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("surface", self.surface.clone()),
            ("refinement", self.refinement.map(|v| v.to_string())),
            ("density", self.density.clone()),
            ("tau", self.tau.map(|v| v.to_string())),
            ("t_end", self.t_end.map(|v| v.to_string())),
            ("frame_stride", self.frame_stride.map(|v| v.to_string())),
            ("levels", self.levels.clone()),
            ("reference", self.reference.map(|v| v.to_string())),
            ("checkpoints", self.checkpoints.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v);
            }
        }
        Ok(s)
    }
}

fn configure_threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var("GEOFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        ConfigError(format!(
            "GEOFLOW_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads()
        .map_err(commands::Failure::Usage)
        .and_then(|()| match &cli.command {
            Command::Run(o) => commands::cmd_run(o.settings().map_err(commands::Failure::Usage)?),
            Command::Converge {
                overrides,
                allow_free_tau,
            } => commands::cmd_converge(
                overrides.settings().map_err(commands::Failure::Usage)?,
                *allow_free_tau,
            ),
            Command::Validate { path } => commands::cmd_validate(path),
        });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
