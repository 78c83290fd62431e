//! Closed, consistently oriented triangle meshes.
//!
//! A [`SurfaceMesh`] is the polygonal surface the flow evolves. Triangles are
//! index triples ordered counter-clockwise when seen from outside, so the
//! face direction vector `(q2 - q1) x (q3 - q1)` points outward.

mod generate;
mod obj;
mod surface;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::Vec3;

pub use generate::{
    make_ellipsoid, make_icosahedron, make_icosphere, make_icosphere_with_cap, make_octahedron,
    make_torus, DEFAULT_SUBDIVISION_CAP,
};
pub use obj::{read_obj, write_obj};
pub use surface::{SurfaceKind, SurfaceSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    /// Builds a mesh, checking only that every index is in range and that no
    /// triangle repeats a vertex. Topology is checked by [`validate`].
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let k = vertices.len();
        for (j, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= k) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {j} references vertex {bad}, but there are only {k} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!(
                    "triangle {j} repeats a vertex: {tri:?}"
                )));
            }
        }
        if let Some(v) = vertices
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("vertex {v} is not finite")));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Same connectivity, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Shape {
                expected: self.vertices.len(),
                found: vertices.len(),
            });
        }
        Self::new(vertices, self.triangles.clone())
    }

    /// Reverses the orientation of every triangle.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Face direction vector `(q2 - q1) x (q3 - q1)`, twice the area times the
    /// unit normal.
    pub fn direction_vector(&self, face: usize) -> Vec3 {
        let [q1, q2, q3] = self.corners(face);
        (q2 - q1).cross(&(q3 - q1))
    }

    pub fn triangle_area(&self, face: usize) -> f64 {
        0.5 * self.direction_vector(face).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.num_triangles())
            .map(|j| self.triangle_area(j))
            .sum()
    }

    /// Rigidly moves the mesh: `x -> rotation * x + translation`.
    pub fn transformed(&self, rotation: &nalgebra::Rotation3<f64>, translation: &Vec3) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|p| rotation * p + translation)
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Undirected edges, each listed once with the smaller index first.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[u, v]| if u < v { [u, v] } else { [v, u] })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// For each vertex, the triangles incident to it.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (j, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(j);
            }
        }
        out
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

/// Result of [`validate`]. Problems are reported here instead of returned as
/// errors.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshReport {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_triangles: usize,
    /// Every edge is shared by exactly two triangles.
    pub is_closed: bool,
    /// Every shared edge is traversed in opposite directions by its triangles.
    pub is_oriented: bool,
    pub min_area: f64,
    pub euler_characteristic: i64,
    /// Only defined for closed, oriented meshes.
    pub genus: Option<i64>,
    /// Vertices used by fewer than three triangles.
    pub underused_vertices: usize,
    pub boundary_edges: usize,
    pub nonmanifold_edges: usize,
}

impl MeshReport {
    /// Closed, oriented, every face with positive area and every vertex used.
    pub fn is_valid(&self) -> bool {
        self.is_closed && self.is_oriented && self.min_area > 0.0 && self.underused_vertices == 0
    }
}

impl std::fmt::Display for MeshReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "vertices: {}", self.num_vertices)?;
        writeln!(f, "edges: {}", self.num_edges)?;
        writeln!(f, "triangles: {}", self.num_triangles)?;
        writeln!(f, "closed: {}", self.is_closed)?;
        writeln!(f, "oriented: {}", self.is_oriented)?;
        writeln!(f, "min_area: {:e}", self.min_area)?;
        writeln!(f, "euler_characteristic: {}", self.euler_characteristic)?;
        match self.genus {
            Some(g) => writeln!(f, "genus: {g}")?,
            None => writeln!(f, "genus: undefined")?,
        }
        writeln!(f, "boundary_edges: {}", self.boundary_edges)?;
        writeln!(f, "nonmanifold_edges: {}", self.nonmanifold_edges)?;
        write!(f, "underused_vertices: {}", self.underused_vertices)
    }
}

pub fn validate(mesh: &SurfaceMesh) -> MeshReport {
    // directed edge -> number of occurrences
    let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
    for &[a, b, c] in mesh.triangles() {
        for e in [(a, b), (b, c), (c, a)] {
            *directed.entry(e).or_default() += 1;
        }
    }

    let mut undirected: HashMap<(usize, usize), (u32, u32)> = HashMap::new();
    for (&(u, v), &count) in &directed {
        if u < v {
            undirected.entry((u, v)).or_default().0 += count;
        } else {
            undirected.entry((v, u)).or_default().1 += count;
        }
    }

    let mut boundary_edges = 0;
    let mut nonmanifold_edges = 0;
    let mut is_oriented = true;
    for &(fwd, bwd) in undirected.values() {
        match fwd + bwd {
            1 => boundary_edges += 1,
            2 => {}
            _ => nonmanifold_edges += 1,
        }
        if fwd > 1 || bwd > 1 || (fwd + bwd == 2 && fwd != bwd) {
            is_oriented = false;
        }
    }

    let min_area = (0..mesh.num_triangles())
        .map(|j| mesh.triangle_area(j))
        .fold(f64::INFINITY, f64::min);

    let mut uses = vec![0usize; mesh.num_vertices()];
    for tri in mesh.triangles() {
        for &v in tri {
            uses[v] += 1;
        }
    }
    let underused_vertices = uses.iter().filter(|&&n| n < 3).count();

    let num_edges = undirected.len();
    let euler_characteristic =
        mesh.num_vertices() as i64 - num_edges as i64 + mesh.num_triangles() as i64;
    let is_closed = boundary_edges == 0 && nonmanifold_edges == 0 && !mesh.triangles.is_empty();
    let genus = (is_closed && is_oriented).then(|| (2 - euler_characteristic) / 2);

    MeshReport {
        num_vertices: mesh.num_vertices(),
        num_edges,
        num_triangles: mesh.num_triangles(),
        is_closed,
        is_oriented,
        min_area,
        euler_characteristic,
        genus,
        underused_vertices,
        boundary_edges,
        nonmanifold_edges,
    }
}

/// `h = max_j sqrt(|sigma_j|)`.
pub fn mesh_size(mesh: &SurfaceMesh) -> f64 {
    (0..mesh.num_triangles())
        .map(|j| mesh.triangle_area(j).sqrt())
        .fold(0.0, f64::max)
}

/// Divergence-theorem volume `(1/6) sum_j q1 . (q2 x q3)` without any
/// topology check.
pub fn signed_volume(mesh: &SurfaceMesh) -> f64 {
    let sum: f64 = (0..mesh.num_triangles())
        .map(|j| {
            let [q1, q2, q3] = mesh.corners(j);
            q1.dot(&q2.cross(&q3))
        })
        .sum();
    sum / 6.0
}

/// Volume enclosed by a closed, consistently oriented mesh; positive when
/// the triangles face outward.
pub fn enclosed_volume(mesh: &SurfaceMesh) -> Result<f64> {
    let report = validate(mesh);
    if !(report.is_closed && report.is_oriented) {
        return Err(Error::Precondition(format!(
            "enclosed volume needs a closed oriented mesh ({} boundary edges, oriented: {})",
            report.boundary_edges, report.is_oriented
        )));
    }
    Ok(signed_volume(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn unit_cube() -> SurfaceMesh {
        let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        let vertices = vec![
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(1., 1., 0.),
            v(0., 1., 0.),
            v(0., 0., 1.),
            v(1., 0., 1.),
            v(1., 1., 1.),
            v(0., 1., 1.),
        ];
        let triangles = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        SurfaceMesh::new(vertices, triangles).unwrap()
    }

    #[test]
    fn cube_volume_is_one() {
        let cube = unit_cube();
        assert!(validate(&cube).is_valid());
        assert!((enclosed_volume(&cube).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flipping_negates_volume() {
        let s = make_icosphere(2, 1.3).unwrap();
        let v = enclosed_volume(&s).unwrap();
        let w = enclosed_volume(&s.flipped()).unwrap();
        assert_eq!(v, -w);
        assert!(v > 0.0);
    }

    #[test]
    fn icosphere_volume_close_to_ball() {
        let s = make_icosphere(3, 1.0).unwrap();
        let v = enclosed_volume(&s).unwrap();
        let exact = 4.0 * PI / 3.0;
        assert!((v - exact).abs() / exact < 0.01, "{v}");
    }

    #[test]
    fn removing_a_triangle_opens_the_mesh() {
        let s = make_icosphere(1, 1.0).unwrap();
        let mut tris = s.triangles().to_vec();
        tris.pop();
        let open = SurfaceMesh::new(s.vertices().to_vec(), tris).unwrap();
        let report = validate(&open);
        assert!(!report.is_closed);
        assert_eq!(report.boundary_edges, 3);
        assert_eq!(report.genus, None);
        assert!(matches!(
            enclosed_volume(&open),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn inconsistent_orientation_is_reported() {
        let s = make_icosphere(1, 1.0).unwrap();
        let mut tris = s.triangles().to_vec();
        let [a, b, c] = tris[0];
        tris[0] = [a, c, b];
        let bad = SurfaceMesh::new(s.vertices().to_vec(), tris).unwrap();
        let report = validate(&bad);
        assert!(report.is_closed);
        assert!(!report.is_oriented);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let err = SurfaceMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 3]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn tetrahedron_mesh_size() {
        // regular tetrahedron inscribed in the cube corners
        let v = vec![
            Vec3::new(1., 1., 1.),
            Vec3::new(1., -1., -1.),
            Vec3::new(-1., 1., -1.),
            Vec3::new(-1., -1., 1.),
        ];
        let mut t = SurfaceMesh::new(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).unwrap();
        if signed_volume(&t) < 0.0 {
            t = t.flipped();
        }
        let area = t.triangle_area(0);
        for j in 0..4 {
            assert!((t.triangle_area(j) - area).abs() < 1e-14);
        }
        assert!((mesh_size(&t) - area.sqrt()).abs() < 1e-15);
        let r = validate(&t);
        assert!(r.is_valid());
        assert_eq!(r.genus, Some(0));
    }
}
