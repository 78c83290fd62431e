//! Spatial convergence study against a finer reference run.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use super::distance::{manifold_distance, DEFAULT_RESOLUTION};
use super::sci;
use crate::density::EnergyDensity;
use crate::error::{Error, Result};
use crate::mesh::{mesh_size, SurfaceMesh, SurfaceSpec};
use crate::solver::{run, FlowState, StepConfig, StepObserver, StepStats};

pub const CONVERGENCE_CSV_HEADER: &str = "h,tau,t,error,order";

#[derive(Clone, Debug)]
pub struct ConvergenceOptions {
    /// Time steps follow `tau = tau_ratio * h^2` unless overridden.
    pub tau_ratio: f64,
    pub tau_override: Option<f64>,
    pub newton_tol: f64,
    pub alpha0: f64,
    pub alpha_factor: f64,
    pub resolution: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            tau_ratio: 1.0 / 180.0,
            tau_override: None,
            newton_tol: 1e-10,
            alpha0: 1e6,
            alpha_factor: 5.0,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub tau: f64,
    pub t: f64,
    pub error: f64,
    /// Order against the next coarser level at the same time.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Reference mesh size.
    pub reference_h: f64,
}

impl ConvergenceTable {
    pub fn checkpoints(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
        ts.dedup();
        ts
    }

    /// Least-squares slope of `log e` against `log h` over all levels at `t`.
    pub fn fitted_order(&self, t: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.t == t && r.error > 0.0)
            .map(|r| (r.h.ln(), r.error.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    pub fn pairwise_orders(&self, t: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.t == t)
            .filter_map(|r| r.order)
            .collect()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{CONVERGENCE_CSV_HEADER}")?;
        for r in &self.rows {
            let order = r.order.map(sci).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                sci(r.h),
                sci(r.tau),
                sci(r.t),
                sci(r.error),
                order
            )?;
        }
        Ok(())
    }
}

/// Largest step not above `target` that divides `base` exactly.
fn dividing_step(base: f64, target: f64) -> (f64, usize) {
    let n = (base / target - 1e-9).ceil().max(1.0) as usize;
    (base / n as f64, n)
}

/// Captures meshes at chosen step indices.
struct Snapshots {
    wanted: BTreeMap<usize, f64>,
    meshes: BTreeMap<usize, SurfaceMesh>,
}

impl StepObserver for Snapshots {
    fn on_step(&mut self, state: &FlowState, _stats: &StepStats) -> Result<()> {
        if self.wanted.contains_key(&state.step_index) {
            self.meshes.insert(state.step_index, state.mesh.clone());
        }
        Ok(())
    }
}

struct LevelRun {
    h: f64,
    tau: f64,
    /// One mesh per checkpoint.
    meshes: Vec<SurfaceMesh>,
}

fn run_level(
    spec: &SurfaceSpec,
    density: &EnergyDensity,
    checkpoints: &[f64],
    multiples: &[usize],
    options: &ConvergenceOptions,
) -> Result<LevelRun> {
    let mesh = spec.build()?;
    let h = mesh_size(&mesh);
    let (tau, per_base) = match options.tau_override {
        Some(tau) => {
            let n = (checkpoints[0] / tau).round();
            if (n * tau - checkpoints[0]).abs() > 1e-9 * checkpoints[0] || n < 1.0 {
                return Err(Error::Protocol(format!(
                    "time step {tau} does not divide the checkpoint {}",
                    checkpoints[0]
                )));
            }
            (tau, n as usize)
        }
        None => dividing_step(checkpoints[0], options.tau_ratio * h * h),
    };
    let mut config = StepConfig::new(tau, density.clone());
    config.newton_tol = options.newton_tol;
    config.alpha0 = options.alpha0;
    config.alpha_factor = options.alpha_factor;
    let state = FlowState::initial(mesh, config.alpha0)?;
    let steps: Vec<usize> = multiples.iter().map(|m| m * per_base).collect();
    let mut obs = Snapshots {
        wanted: steps
            .iter()
            .zip(checkpoints)
            .map(|(&s, &t)| (s, t))
            .collect(),
        meshes: BTreeMap::new(),
    };
    let last = *steps.last().expect("checked non-empty");
    // stepping by count keeps checkpoint times exact
    let t_end = last as f64 * tau;
    run(state, &config, t_end, &mut obs)?;
    let meshes = steps
        .iter()
        .map(|s| {
            obs.meshes
                .remove(s)
                .ok_or_else(|| Error::Protocol(format!("checkpoint step {s} was not reached")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelRun { h, tau, meshes })
}

/// Runs every level and a finer reference to each checkpoint and measures the
/// manifold distance to the reference there.
///
/// Every checkpoint must be an integer multiple of the first one; each
/// level's step divides the first checkpoint so all levels land on the
/// checkpoints exactly.
pub fn convergence_study(
    spec: &SurfaceSpec,
    density: &EnergyDensity,
    levels: &[u32],
    checkpoints: &[f64],
    reference: u32,
    options: &ConvergenceOptions,
) -> Result<ConvergenceTable> {
    if levels.len() < 2 {
        return Err(Error::Protocol(format!(
            "a convergence study needs at least 2 levels, got {}",
            levels.len()
        )));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Protocol("levels must be strictly increasing".into()));
    }
    if reference <= *levels.last().expect("non-empty") {
        return Err(Error::Protocol(format!(
            "reference level {reference} must be finer than every study level"
        )));
    }
    if checkpoints.is_empty() || !(checkpoints[0] > 0.0) {
        return Err(Error::Protocol(
            "checkpoints must be positive and non-empty".into(),
        ));
    }
    let base = checkpoints[0];
    let mut multiples = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let m = (t / base).round();
        if (m * base - t).abs() > 1e-9 * t || m < 1.0 {
            return Err(Error::Protocol(format!(
                "checkpoint {t} is not an integer multiple of the first checkpoint {base}"
            )));
        }
        multiples.push(m as usize);
    }
    if multiples.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Protocol(
            "checkpoints must be strictly increasing".into(),
        ));
    }

    let mut all_levels = levels.to_vec();
    all_levels.push(reference);
    let runs: Vec<LevelRun> = all_levels
        .par_iter()
        .map(|&l| run_level(&spec.at_level(l), density, checkpoints, &multiples, options))
        .collect::<Result<Vec<_>>>()?;
    let (reference_run, study) = runs.split_last().expect("at least three runs");

    let mut rows = Vec::new();
    for (c, &t) in checkpoints.iter().enumerate() {
        let mut prev: Option<(f64, f64)> = None;
        for lr in study {
            let error =
                manifold_distance(&lr.meshes[c], &reference_run.meshes[c], options.resolution)?
                    .value;
            let order = prev.map(|(h0, e0)| (e0 / error).ln() / (h0 / lr.h).ln());
            rows.push(ConvergenceRow {
                h: lr.h,
                tau: lr.tau,
                t,
                error,
                order,
            });
            prev = Some((lr.h, error));
        }
    }
    Ok(ConvergenceTable {
        rows,
        reference_h: reference_run.h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::SurfaceKind;

    fn sphere() -> SurfaceSpec {
        SurfaceSpec::new(SurfaceKind::Sphere { radius: 1.0 }, 0)
    }

    #[test]
    fn single_level_is_a_protocol_error() {
        let r = convergence_study(
            &sphere(),
            &EnergyDensity::Area,
            &[1],
            &[0.01],
            2,
            &Default::default(),
        );
        assert!(matches!(r, Err(Error::Protocol(_))));
    }

    #[test]
    fn checkpoints_must_be_commensurate() {
        let r = convergence_study(
            &sphere(),
            &EnergyDensity::Area,
            &[0, 1],
            &[0.01, 0.015],
            2,
            &Default::default(),
        );
        assert!(matches!(r, Err(Error::Protocol(_))));
    }

    #[test]
    fn dividing_step_hits_the_base() {
        let (tau, n) = dividing_step(0.1, 0.003);
        assert_eq!(n, 34);
        assert!(tau <= 0.003 && (tau * n as f64 - 0.1).abs() < 1e-15);
        assert_eq!(dividing_step(0.1, 0.025).1, 4);
    }

    #[test]
    fn fitted_order_of_exact_power_law() {
        let rows = [0.4, 0.2, 0.1]
            .iter()
            .map(|&h: &f64| ConvergenceRow {
                h,
                tau: h * h / 180.0,
                t: 0.5,
                error: 3.0 * h * h,
                order: None,
            })
            .collect();
        let table = ConvergenceTable {
            rows,
            reference_h: 0.05,
        };
        assert!((table.fitted_order(0.5).unwrap() - 2.0).abs() < 1e-12);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("h,tau,t,error,order\n4.00000000000e-1,"));
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn sphere_mean_curvature_flow_errors_shrink() {
        let opts = ConvergenceOptions {
            resolution: 64,
            ..Default::default()
        };
        let t =
            convergence_study(&sphere(), &EnergyDensity::Area, &[1, 2], &[0.02], 3, &opts).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows[1].error < t.rows[0].error);
        assert!(t.rows[1].order.unwrap() > 0.0);
    }
}
