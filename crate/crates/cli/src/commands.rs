//! The `run`, `converge` and `validate` subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use geoflow::diagnostics::{
    convergence_study, first_energy_increase, sci, write_energy_csv, ConvergenceOptions,
    EnergyRecord,
};
use geoflow::mesh::{mesh_size, read_obj, validate, write_obj};
use geoflow::solver::{run, steps_between, StepObserver};
use geoflow::{Error, FlowState, StepConfig, StepStats};

use crate::config::{ConfigError, ConvergeConfig, RunConfig, Settings};

/// Relative slack allowed between consecutive energies of a successful run.
pub const ENERGY_SLACK: f64 = 1e-9;

#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or configuration.
    Usage(ConfigError),
    /// The computation or check itself failed.
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Failed(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Failed(e.to_string())
    }
}

pub fn frame_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("frame_{step:06}.obj"))
}

/// Records every step and writes frames as the run goes.
struct Recorder<'a> {
    out: &'a Path,
    stride: usize,
    records: Vec<EnergyRecord>,
    last_frame: Option<usize>,
}

impl Recorder<'_> {
    fn frame(&mut self, state: &FlowState) -> geoflow::Result<()> {
        write_obj(&state.mesh, frame_path(self.out, state.step_index))?;
        self.last_frame = Some(state.step_index);
        Ok(())
    }
}

impl StepObserver for Recorder<'_> {
    fn on_start(&mut self, initial: &FlowState, energy: f64) -> geoflow::Result<()> {
        self.records.push(EnergyRecord::initial(initial, energy));
        if self.stride > 0 {
            self.frame(initial)?;
        }
        Ok(())
    }

    fn on_step(&mut self, state: &FlowState, stats: &StepStats) -> geoflow::Result<()> {
        self.records.push(EnergyRecord::from(stats));
        if self.stride > 0 && state.step_index.is_multiple_of(self.stride) {
            self.frame(state)?;
        }
        Ok(())
    }

    fn on_abort(&mut self, last_good: &FlowState, _error: &Error) -> geoflow::Result<()> {
        if self.stride > 0 && self.last_frame != Some(last_good.step_index) {
            self.frame(last_good)?;
        }
        Ok(())
    }
}

fn median(mut v: Vec<usize>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

fn step_config(c: &RunConfig) -> StepConfig {
    let mut config = StepConfig::new(c.tau, c.density.clone());
    config.newton_tol = c.newton_tol;
    config.alpha0 = c.alpha0;
    config.alpha_factor = c.alpha_factor;
    config
}

pub fn cmd_run(settings: Settings) -> Result<(), Failure> {
    let c = RunConfig::from_settings(&settings).map_err(Failure::Usage)?;
    c.check_output_dir().map_err(Failure::Usage)?;
    let config = step_config(&c);
    let mesh = c.surface.build()?;
    let initial = FlowState::initial(mesh, config.alpha0)?;
    println!(
        "{} | {} | tau {} | t_end {} | {} steps",
        c.surface,
        c.density,
        c.tau,
        c.t_end,
        steps_between(0.0, c.t_end, c.tau)
    );

    let mut recorder = Recorder {
        out: &c.out,
        stride: c.frame_stride,
        records: Vec::new(),
        last_frame: None,
    };
    let result = run(initial, &config, c.t_end, &mut recorder);
    if let Ok(summary) = &result {
        if c.frame_stride > 0 && recorder.last_frame != Some(summary.final_state.step_index) {
            recorder.frame(&summary.final_state)?;
        }
    }
    let records = recorder.records;

    let mut csv = BufWriter::new(File::create(c.out.join("energy.csv"))?);
    write_energy_csv(&mut csv, &records)?;
    csv.flush()?;

    let energies: Vec<f64> = records.iter().map(|r| r.energy).collect();
    let iters: Vec<usize> = records.iter().skip(1).map(|r| r.newton_iters).collect();
    let status = match (&result, first_energy_increase(&energies, ENERGY_SLACK)) {
        (Err(e), _) => format!("failed: {e}"),
        (Ok(_), Some(i)) => format!("failed: energy increased at step {}", records[i].step),
        (Ok(_), None) => "completed".to_string(),
    };
    let last = records.last().expect("initial record is always present");
    let lines = [
        format!("status = {status}"),
        format!("surface = {}", c.surface),
        format!("density = {}", c.density),
        format!("tau = {}", sci(c.tau)),
        format!("steps = {}", records.len() - 1),
        format!("final_time = {}", sci(last.time)),
        format!("initial_energy = {}", sci(records[0].energy)),
        format!("final_energy = {}", sci(last.energy)),
        format!(
            "max_newton_iters = {}",
            iters.iter().copied().max().unwrap_or(0)
        ),
        format!("median_newton_iters = {}", median(iters)),
    ];
    let mut summary = File::create(c.out.join("summary.txt"))?;
    for line in &lines {
        writeln!(summary, "{line}")?;
        println!("{line}");
    }
    if status == "completed" {
        Ok(())
    } else {
        Err(Failure::Failed(status))
    }
}

pub fn cmd_converge(settings: Settings, allow_free_tau: bool) -> Result<(), Failure> {
    let c = ConvergeConfig::from_settings(&settings).map_err(Failure::Usage)?;
    c.run.check_output_dir().map_err(Failure::Usage)?;
    let mut options = ConvergenceOptions {
        newton_tol: c.run.newton_tol,
        alpha0: c.run.alpha0,
        alpha_factor: c.run.alpha_factor,
        resolution: c.resolution,
        ..Default::default()
    };
    if c.run.tau_given {
        let mut off_protocol = Vec::new();
        for &l in &c.levels {
            let h = mesh_size(&c.run.surface.at_level(l).build()?);
            let target = options.tau_ratio * h * h;
            if (c.run.tau - target).abs() > 1e-6 * target {
                off_protocol.push(format!("level {l}: h^2/180 = {}", sci(target)));
            }
        }
        if !off_protocol.is_empty() {
            eprintln!(
                "warning: tau = {} breaks the tau = h^2/180 coupling ({})",
                c.run.tau,
                off_protocol.join(", ")
            );
            if !allow_free_tau {
                return Err(Failure::Failed(
                    "protocol violation: fixed time step in a convergence study (pass --allow-free-tau to accept)"
                        .into(),
                ));
            }
        }
        options.tau_override = Some(c.run.tau);
    }

    let table = convergence_study(
        &c.run.surface,
        &c.run.density,
        &c.levels,
        &c.checkpoints,
        c.reference,
        &options,
    )?;
    let mut csv = BufWriter::new(File::create(c.run.out.join("convergence.csv"))?);
    table.write_csv(&mut csv)?;
    csv.flush()?;

    println!("reference h = {}", sci(table.reference_h));
    for row in &table.rows {
        let order = row
            .order
            .map_or_else(|| "-".to_string(), |o| format!("{o:.3}"));
        println!(
            "t = {:<8} h = {:.4}  tau = {}  error = {}  order = {order}",
            row.t,
            row.h,
            sci(row.tau),
            sci(row.error)
        );
    }
    for t in table.checkpoints() {
        match table.fitted_order(t) {
            Some(p) => println!("fitted order at t = {t}: {p:.3}"),
            None => println!("fitted order at t = {t}: unavailable"),
        }
    }
    Ok(())
}

pub fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let mesh = read_obj(path)?;
    let report = validate(&mesh);
    println!("{report}");
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::Failed(format!(
            "{} is not a valid closed surface",
            path.display()
        )))
    }
}
