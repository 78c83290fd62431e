//! Discrete differential operators on piecewise-linear fields over a fixed
//! polygonal surface.
//!
//! Scalar and vector fields hold one value per vertex and are interpolated
//! linearly on each triangle. Surface gradients of such fields are constant
//! per triangle. Inner products use mass lumping: integrands are sampled at
//! the three corners of each triangle and weighted by a third of its area.

use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;
use crate::{Mat3, Vec3};

/// One value per vertex.
pub type VertexScalarField = Vec<f64>;
/// One 3-vector per vertex.
pub type VertexVectorField = Vec<Vec3>;
/// One 3x3 matrix per triangle.
pub type FaceMatrixField = Vec<Mat3>;

/// Cached geometry of one triangle `{q1, q2, q3}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceFrame {
    /// `(q2 - q1) x (q3 - q1)`.
    pub direction_vector: Vec3,
    pub normal: Vec3,
    pub area: f64,
    /// Unit vector along `q2 - q1`.
    pub tangent1: Vec3,
    /// Unit vector along `q3 - q1`.
    pub tangent2: Vec3,
    /// Surface gradients of the three corner hat functions.
    pub hat_gradients: [Vec3; 3],
}

impl FaceFrame {
    pub fn new(face: usize, [q1, q2, q3]: [Vec3; 3]) -> Result<Self> {
        let e1 = q2 - q1;
        let e2 = q3 - q1;
        let direction_vector = e1.cross(&e2);
        let twice_area = direction_vector.norm();
        let scale = e1
            .norm_squared()
            .max(e2.norm_squared())
            .max((q3 - q2).norm_squared());
        if !(twice_area > 1e-14 * scale) {
            return Err(Error::DegenerateElement {
                face,
                area: 0.5 * twice_area,
            });
        }
        let normal = direction_vector / twice_area;
        let hat_gradients = [
            (q2 - q3).cross(&normal) / twice_area,
            (q3 - q1).cross(&normal) / twice_area,
            (q1 - q2).cross(&normal) / twice_area,
        ];
        Ok(Self {
            direction_vector,
            normal,
            area: 0.5 * twice_area,
            tangent1: e1.normalize(),
            tangent2: e2.normalize(),
            hat_gradients,
        })
    }

    /// `I - n n^T`.
    pub fn tangent_projector(&self) -> Mat3 {
        Mat3::identity() - self.normal * self.normal.transpose()
    }
}

pub fn face_frames(mesh: &SurfaceMesh) -> Result<Vec<FaceFrame>> {
    (0..mesh.num_triangles())
        .map(|j| FaceFrame::new(j, mesh.corners(j)))
        .collect()
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape { expected, found })
    }
}

fn check_frames(mesh: &SurfaceMesh, frames: &[FaceFrame]) -> Result<()> {
    check_len(mesh.num_triangles(), frames.len())
}

pub fn surface_gradient_scalar(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    field: &[f64],
) -> Result<Vec<Vec3>> {
    check_frames(mesh, frames)?;
    check_len(mesh.num_vertices(), field.len())?;
    Ok(mesh
        .triangles()
        .iter()
        .zip(frames)
        .map(|(tri, fr)| {
            tri.iter()
                .zip(&fr.hat_gradients)
                .map(|(&v, g)| field[v] * g)
                .sum()
        })
        .collect())
}

/// Row `i` of each face matrix is the surface gradient of component `i`.
pub fn surface_gradient_vector(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    field: &[Vec3],
) -> Result<FaceMatrixField> {
    check_frames(mesh, frames)?;
    check_len(mesh.num_vertices(), field.len())?;
    Ok(mesh
        .triangles()
        .iter()
        .zip(frames)
        .map(|(tri, fr)| {
            tri.iter()
                .zip(&fr.hat_gradients)
                .map(|(&v, g)| field[v] * g.transpose())
                .sum()
        })
        .collect())
}

/// How incident face normals are averaged into a vertex normal.
///
/// The default is angle weighting: with area weights the curvature derived
/// from the normals keeps an O(1) error of about 6% at irregular vertices
/// (valence 5 on icospheres) however fine the mesh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormalWeighting {
    Area,
    Uniform,
    /// Weighted by the interior angle at the vertex.
    #[default]
    Angle,
}

/// Area-weighted unit vertex normals.
pub fn vertex_normals(mesh: &SurfaceMesh, frames: &[FaceFrame]) -> Result<VertexVectorField> {
    vertex_normals_weighted(mesh, frames, NormalWeighting::Area)
}

pub fn vertex_normals_weighted(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    weighting: NormalWeighting,
) -> Result<VertexVectorField> {
    check_frames(mesh, frames)?;
    let mut acc = vec![Vec3::zeros(); mesh.num_vertices()];
    for (j, (tri, fr)) in mesh.triangles().iter().zip(frames).enumerate() {
        for (c, &v) in tri.iter().enumerate() {
            let w = match weighting {
                NormalWeighting::Area => fr.area,
                NormalWeighting::Uniform => 1.0,
                NormalWeighting::Angle => {
                    let q = mesh.corners(j);
                    let a = q[(c + 1) % 3] - q[c];
                    let b = q[(c + 2) % 3] - q[c];
                    a.angle(&b)
                }
            };
            acc[v] += w * fr.normal;
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(k, n)| {
            let len = n.norm();
            if len > 1e-300 && len.is_finite() {
                Ok(n / len)
            } else {
                Err(Error::DegenerateNormal { vertex: k })
            }
        })
        .collect()
}

/// Discrete Weingarten map: the surface gradient of the vertex normal field.
pub fn weingarten(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    vertex_normals: &[Vec3],
) -> Result<FaceMatrixField> {
    surface_gradient_vector(mesh, frames, vertex_normals)
}

/// Lumped vertex masses `m_k = (1/3) sum_{sigma containing k} |sigma|`.
pub fn lumped_masses(mesh: &SurfaceMesh, frames: &[FaceFrame]) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (tri, fr) in mesh.triangles().iter().zip(frames) {
        for &v in tri {
            m[v] += fr.area / 3.0;
        }
    }
    m
}

/// `(u, v)^h = (1/3) sum_j |sigma_j| sum_k u(q_jk) v(q_jk)`.
pub fn inner_lumped_scalar(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    check_frames(mesh, frames)?;
    check_len(mesh.num_vertices(), u.len())?;
    check_len(mesh.num_vertices(), v.len())?;
    Ok(mesh
        .triangles()
        .iter()
        .zip(frames)
        .map(|(tri, fr)| fr.area / 3.0 * tri.iter().map(|&k| u[k] * v[k]).sum::<f64>())
        .sum())
}

pub fn inner_lumped_vector(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    u: &[Vec3],
    v: &[Vec3],
) -> Result<f64> {
    check_frames(mesh, frames)?;
    check_len(mesh.num_vertices(), u.len())?;
    check_len(mesh.num_vertices(), v.len())?;
    Ok(mesh
        .triangles()
        .iter()
        .zip(frames)
        .map(|(tri, fr)| fr.area / 3.0 * tri.iter().map(|&k| u[k].dot(&v[k])).sum::<f64>())
        .sum())
}

/// `<U, V>^h` for face-constant matrices, scaled at each corner by a
/// piecewise-linear `weight` (pass all ones for the plain product).
pub fn inner_lumped_matrix(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    weight: &[f64],
    u: &[Mat3],
    v: &[Mat3],
) -> Result<f64> {
    check_frames(mesh, frames)?;
    check_len(mesh.num_vertices(), weight.len())?;
    check_len(mesh.num_triangles(), u.len())?;
    check_len(mesh.num_triangles(), v.len())?;
    Ok(mesh
        .triangles()
        .iter()
        .zip(frames)
        .zip(u.iter().zip(v))
        .map(|((tri, fr), (a, b))| {
            let w: f64 = tri.iter().map(|&k| weight[k]).sum::<f64>() / 3.0;
            fr.area * w * a.dot(b)
        })
        .sum())
}

/// Mass-lumped projection of `tr(A)` onto the vertices:
/// `H(q_k) = sum |sigma| tr(A_sigma) / sum |sigma|` over faces around `k`.
pub fn initial_curvature(
    mesh: &SurfaceMesh,
    frames: &[FaceFrame],
    weingarten: &[Mat3],
) -> Result<VertexScalarField> {
    check_frames(mesh, frames)?;
    check_len(mesh.num_triangles(), weingarten.len())?;
    let mut num = vec![0.0; mesh.num_vertices()];
    let mut den = vec![0.0; mesh.num_vertices()];
    for ((tri, fr), a) in mesh.triangles().iter().zip(frames).zip(weingarten) {
        for &v in tri {
            num[v] += fr.area * a.trace();
            den[v] += fr.area;
        }
    }
    num.iter()
        .zip(&den)
        .enumerate()
        .map(|(k, (n, d))| {
            if *d > 0.0 {
                Ok(n / d)
            } else {
                Err(Error::Precondition(format!(
                    "vertex {k} belongs to no triangle"
                )))
            }
        })
        .collect()
}

/// Projected curvature of a mesh from default-weighted vertex normals.
pub fn curvature_from_normals(mesh: &SurfaceMesh) -> Result<VertexScalarField> {
    curvature_from_normals_weighted(mesh, NormalWeighting::default())
}

pub fn curvature_from_normals_weighted(
    mesh: &SurfaceMesh,
    weighting: NormalWeighting,
) -> Result<VertexScalarField> {
    let frames = face_frames(mesh)?;
    let w = vertex_normals_weighted(mesh, &frames, weighting)?;
    let a = weingarten(mesh, &frames, &w)?;
    initial_curvature(mesh, &frames, &a)
}
