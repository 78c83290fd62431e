//! Energies, per-step records, mesh quality, the manifold distance and the
//! convergence-study harness.

mod convergence;
mod distance;

pub use convergence::{
    convergence_study, ConvergenceOptions, ConvergenceRow, ConvergenceTable, CONVERGENCE_CSV_HEADER,
};
pub use distance::{manifold_distance, ManifoldDistance, DEFAULT_RESOLUTION, MIN_RESOLUTION};

use std::io::Write;

use crate::density::EnergyDensity;
use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;
use crate::ops::FaceFrame;
use crate::solver::{FlowState, StepStats};

/// Lumped energy `(1/3) sum_j |sigma_j| sum_k f(H(q_jk))`.
pub fn discrete_energy(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    curvature: &[f64],
    density: &EnergyDensity,
) -> Result<f64> {
    if curvature.len() != mesh.num_vertices() {
        return Err(Error::Shape {
            expected: mesh.num_vertices(),
            found: curvature.len(),
        });
    }
    if frames.len() != mesh.num_triangles() {
        return Err(Error::Shape {
            expected: mesh.num_triangles(),
            found: frames.len(),
        });
    }
    Ok(mesh
        .triangles()
        .iter()
        .zip(frames)
        .map(|(tri, fr)| {
            let sum: f64 = tri.iter().map(|&k| density.f(curvature[k])).sum();
            fr.area * (sum / 3.0)
        })
        .sum())
}

pub const ENERGY_CSV_HEADER: &str = "step,time,energy,area,volume,v_l2,beta_max,alpha,newton_iters";

/// One row of the energy log.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRecord {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub area: f64,
    pub volume: f64,
    pub v_l2: f64,
    pub beta_max: f64,
    pub alpha: f64,
    pub newton_iters: usize,
}

impl EnergyRecord {
    /// Row for the initial surface, before any step.
    pub fn initial(state: &FlowState, energy: f64) -> Self {
        Self {
            step: state.step_index,
            time: state.time,
            energy,
            area: state.mesh.surface_area(),
            volume: crate::mesh::signed_volume(&state.mesh),
            v_l2: 0.0,
            beta_max: 0.0,
            alpha: state.alpha,
            newton_iters: 0,
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            sci(self.time),
            sci(self.energy),
            sci(self.area),
            sci(self.volume),
            sci(self.v_l2),
            sci(self.beta_max),
            sci(self.alpha),
            self.newton_iters
        )
    }
}

impl From<&StepStats> for EnergyRecord {
    fn from(s: &StepStats) -> Self {
        Self {
            step: s.step,
            time: s.time,
            energy: s.energy,
            area: s.area,
            volume: s.volume,
            v_l2: s.v_l2,
            beta_max: s.beta_max,
            alpha: s.alpha,
            newton_iters: s.newton_iters,
        }
    }
}

/// Twelve significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_energy_csv(out: &mut impl Write, records: &[EnergyRecord]) -> Result<()> {
    writeln!(out, "{ENERGY_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.to_csv_row())?;
    }
    Ok(())
}

/// Index of the first record whose energy exceeds its predecessor by more
/// than `rel_slack` times the predecessor's magnitude.
pub fn first_energy_increase(energies: &[f64], rel_slack: f64) -> Option<usize> {
    energies
        .windows(2)
        .position(|w| w[1] > w[0] + rel_slack * w[0].abs())
        .map(|i| i + 1)
}

/// Shape statistics of the triangles of a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshQuality {
    /// Largest over smallest triangle area.
    pub area_ratio: f64,
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    /// `longest edge * perimeter / (4 sqrt(3) area)`; 1 for equilateral.
    pub mean_aspect: f64,
    pub max_aspect: f64,
}

/// Angles below this many degrees are flagged as nearly collapsed.
pub const COLLAPSE_ANGLE_DEG: f64 = 1.0;

impl MeshQuality {
    pub fn is_degenerating(&self) -> bool {
        !(self.min_angle_deg >= COLLAPSE_ANGLE_DEG)
    }
}

pub fn mesh_quality(mesh: &SurfaceMesh) -> MeshQuality {
    let mut min_area = f64::INFINITY;
    let mut max_area = 0.0f64;
    let mut min_angle = f64::INFINITY;
    let mut max_angle = 0.0f64;
    let mut aspect_sum = 0.0;
    let mut max_aspect = 0.0f64;
    for j in 0..mesh.num_triangles() {
        let q = mesh.corners(j);
        let area = mesh.triangle_area(j);
        min_area = min_area.min(area);
        max_area = max_area.max(area);
        let mut longest = 0.0f64;
        let mut perimeter = 0.0;
        for c in 0..3 {
            let a = q[(c + 1) % 3] - q[c];
            let b = q[(c + 2) % 3] - q[c];
            let angle = a.angle(&b).to_degrees();
            min_angle = min_angle.min(angle);
            max_angle = max_angle.max(angle);
            longest = longest.max(a.norm());
            perimeter += a.norm();
        }
        let aspect = longest * perimeter / (4.0 * 3f64.sqrt() * area);
        aspect_sum += aspect;
        max_aspect = max_aspect.max(aspect);
    }
    MeshQuality {
        area_ratio: max_area / min_area,
        min_angle_deg: min_angle,
        max_angle_deg: max_angle,
        mean_aspect: aspect_sum / mesh.num_triangles().max(1) as f64,
        max_aspect,
    }
}
