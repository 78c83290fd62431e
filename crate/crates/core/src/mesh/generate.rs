//! Generators for the initial surfaces: spheres, ellipsoids and tori.

use std::collections::HashMap;
use std::f64::consts::TAU;

use super::SurfaceMesh;
use crate::error::{Error, Result};
use crate::Vec3;

/// Default bound on icosphere subdivision (20 * 4^7 = 327,680 faces).
pub const DEFAULT_SUBDIVISION_CAP: u32 = 7;

/// Regular icosahedron inscribed in the sphere of the given radius.
pub fn make_icosahedron(radius: f64) -> Result<SurfaceMesh> {
    make_icosphere(0, radius)
}

pub fn make_icosphere(subdivisions: u32, radius: f64) -> Result<SurfaceMesh> {
    make_icosphere_with_cap(subdivisions, radius, DEFAULT_SUBDIVISION_CAP)
}

/// Icosahedron refined by midpoint subdivision, with every new vertex pushed
/// back onto the sphere after each level.
pub fn make_icosphere_with_cap(subdivisions: u32, radius: f64, cap: u32) -> Result<SurfaceMesh> {
    if subdivisions > cap {
        return Err(Error::SizeCap {
            requested: subdivisions,
            cap,
        });
    }
    check_positive("radius", radius)?;

    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|&[x, y, z]| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for tri in &mut triangles {
        let [a, b, c] = tri.map(|i| vertices[i]);
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            tri.swap(1, 2);
        }
    }

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |u: usize, v: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = if u < v { (u, v) } else { (v, u) };
            *midpoint.entry(key).or_insert_with(|| {
                vertices.push((0.5 * (vertices[u] + vertices[v])).normalize());
                vertices.len() - 1
            })
        };
        let mut refined = Vec::with_capacity(4 * triangles.len());
        for &[a, b, c] in &triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            refined.push([a, ab, ca]);
            refined.push([b, bc, ab]);
            refined.push([c, ca, bc]);
            refined.push([ab, bc, ca]);
        }
        triangles = refined;
    }

    for p in &mut vertices {
        *p *= radius;
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Surface `x^2/a + y^2/b + z^2 = 1`: the unit icosphere stretched by
/// `(sqrt(a), sqrt(b), 1)`.
pub fn make_ellipsoid(a: f64, b: f64, subdivisions: u32) -> Result<SurfaceMesh> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    let sphere = make_icosphere(subdivisions, 1.0)?;
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let vertices = sphere
        .vertices()
        .iter()
        .map(|p| Vec3::new(sa * p.x, sb * p.y, p.z))
        .collect();
    sphere.with_vertices(vertices)
}

/// Surface `(R - sqrt(x^2 + y^2))^2 + z^2 = r^2` on an `n_major x n_minor`
/// parameter grid. Every quad is split along the diagonal on which `i + j`
/// is constant, so all vertices have valence 6.
pub fn make_torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> Result<SurfaceMesh> {
    check_positive("minor radius", minor)?;
    if major <= minor {
        return Err(Error::SelfIntersection { major, minor });
    }
    if n_major < 3 || n_minor < 3 {
        return Err(Error::Domain(format!(
            "torus grid must be at least 3 x 3, got {n_major} x {n_minor}"
        )));
    }

    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let theta = TAU * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let phi = TAU * j as f64 / n_minor as f64;
            let rho = major + minor * phi.cos();
            vertices.push(Vec3::new(
                rho * theta.cos(),
                rho * theta.sin(),
                minor * phi.sin(),
            ));
        }
    }

    let id = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut triangles = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            // d/dtheta x d/dphi points outward
            triangles.push([v00, v10, v01]);
            triangles.push([v10, v11, v01]);
        }
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Regular octahedron with vertices at `+-radius` on each axis.
pub fn make_octahedron(radius: f64) -> Result<SurfaceMesh> {
    check_positive("radius", radius)?;
    let r = radius;
    let vertices = vec![
        Vec3::new(r, 0.0, 0.0),
        Vec3::new(-r, 0.0, 0.0),
        Vec3::new(0.0, r, 0.0),
        Vec3::new(0.0, -r, 0.0),
        Vec3::new(0.0, 0.0, r),
        Vec3::new(0.0, 0.0, -r),
    ];
    let triangles = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    SurfaceMesh::new(vertices, triangles)
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be positive, got {value}"
        )))
    }
}
