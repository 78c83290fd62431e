//! Nodal residual of the implicit scheme and its exact Jacobian.
//!
//! Unknowns are stacked as `[X (3K, interleaved by vertex), V, beta1, beta2, H]`
//! and residual rows use the same order, so the row that tests with the hat
//! function of vertex `k` in a block sits at the index of the matching
//! unknown. The plain formulation drops the two `beta` blocks and the
//! tangential rows.

use rayon::prelude::*;

use super::{FlowState, Formulation, StepConfig, TangentFrame};
use crate::error::{Error, Result};
use crate::ops::{face_frames, vertex_normals_weighted, weingarten, FaceFrame};
use crate::solver::linear::SparseSystem;
use crate::{Mat3, Vec3};

/// Index map between nodal unknowns and the stacked vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub vertices: usize,
    pub formulation: Formulation,
}

impl Layout {
    pub fn new(vertices: usize, formulation: Formulation) -> Self {
        Self {
            vertices,
            formulation,
        }
    }

    pub fn dimension(&self) -> usize {
        match self.formulation {
            Formulation::Improved => 7 * self.vertices,
            Formulation::Plain => 5 * self.vertices,
        }
    }

    pub fn x(&self, k: usize, d: usize) -> usize {
        3 * k + d
    }

    pub fn v(&self, k: usize) -> usize {
        3 * self.vertices + k
    }

    /// `None` for the plain formulation.
    pub fn beta(&self, i: usize, k: usize) -> Option<usize> {
        match self.formulation {
            Formulation::Improved => Some((4 + i) * self.vertices + k),
            Formulation::Plain => None,
        }
    }

    pub fn h(&self, k: usize) -> usize {
        match self.formulation {
            Formulation::Improved => 6 * self.vertices + k,
            Formulation::Plain => 4 * self.vertices + k,
        }
    }
}

/// Newton unknowns at one vertex set.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonIterate {
    pub positions: Vec<Vec3>,
    pub velocity: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl NewtonIterate {
    /// `(X^m, 0, 0, 0, H^m)`.
    pub fn initial(state: &FlowState) -> Self {
        let k = state.mesh.num_vertices();
        Self {
            positions: state.mesh.vertices().to_vec(),
            velocity: vec![0.0; k],
            beta1: vec![0.0; k],
            beta2: vec![0.0; k],
            curvature: state.curvature.clone(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    fn check(&self, k: usize) -> Result<()> {
        for len in [
            self.positions.len(),
            self.velocity.len(),
            self.beta1.len(),
            self.beta2.len(),
            self.curvature.len(),
        ] {
            if len != k {
                return Err(Error::Shape {
                    expected: k,
                    found: len,
                });
            }
        }
        Ok(())
    }

    pub fn to_vector(&self, layout: &Layout) -> Vec<f64> {
        let mut u = vec![0.0; layout.dimension()];
        for k in 0..layout.vertices {
            for d in 0..3 {
                u[layout.x(k, d)] = self.positions[k][d];
            }
            u[layout.v(k)] = self.velocity[k];
            if let Some(i) = layout.beta(0, k) {
                u[i] = self.beta1[k];
            }
            if let Some(i) = layout.beta(1, k) {
                u[i] = self.beta2[k];
            }
            u[layout.h(k)] = self.curvature[k];
        }
        u
    }

    pub fn from_vector(u: &[f64], layout: &Layout) -> Result<Self> {
        if u.len() != layout.dimension() {
            return Err(Error::Shape {
                expected: layout.dimension(),
                found: u.len(),
            });
        }
        let k = layout.vertices;
        let get = |idx: Option<usize>| idx.map_or(0.0, |i| u[i]);
        Ok(Self {
            positions: (0..k)
                .map(|v| Vec3::new(u[layout.x(v, 0)], u[layout.x(v, 1)], u[layout.x(v, 2)]))
                .collect(),
            velocity: (0..k).map(|v| u[layout.v(v)]).collect(),
            beta1: (0..k).map(|v| get(layout.beta(0, v))).collect(),
            beta2: (0..k).map(|v| get(layout.beta(1, v))).collect(),
            curvature: (0..k).map(|v| u[layout.h(v)]).collect(),
        })
    }

    /// Adds `delta` in place and returns its max norm.
    pub fn apply_update(&mut self, delta: &[f64], layout: &Layout) -> f64 {
        let mut max = 0.0f64;
        for k in 0..layout.vertices {
            for d in 0..3 {
                let x = delta[layout.x(k, d)];
                self.positions[k][d] += x;
                max = max.max(x.abs());
            }
            let mut add = |slot: &mut f64, idx: Option<usize>| {
                if let Some(i) = idx {
                    *slot += delta[i];
                    max = max.max(delta[i].abs());
                }
            };
            add(&mut self.velocity[k], Some(layout.v(k)));
            add(&mut self.beta1[k], layout.beta(0, k));
            add(&mut self.beta2[k], layout.beta(1, k));
            add(&mut self.curvature[k], Some(layout.h(k)));
        }
        if delta.iter().any(|x| !x.is_finite()) {
            f64::INFINITY
        } else {
            max
        }
    }
}

/// Geometry of `Gamma^m` shared by every Newton iteration of one step.
#[derive(Clone, Debug)]
pub struct StepContext {
    pub frames: Vec<FaceFrame>,
    pub weingarten: Vec<Mat3>,
    /// Tangent pairs used by the tangential rows, per face and corner.
    pub tangents: Vec<CornerTangents>,
    pub layout: Layout,
}

/// Threshold on the Gram determinant of the vertex-averaged tangents,
/// relative to the fourth power of the lumped mass.
pub const TANGENT_GRAM_RELATIVE_LIMIT: f64 = 1e-12;

impl StepContext {
    pub fn new(state: &FlowState, config: &StepConfig) -> Result<Self> {
        let mesh = &state.mesh;
        let frames = face_frames(mesh)?;
        let normals = vertex_normals_weighted(mesh, &frames, config.normal_weighting)?;
        let weingarten = weingarten(mesh, &frames, &normals)?;
        let layout = Layout::new(mesh.num_vertices(), config.formulation);
        let tangents = face_tangents(mesh.triangles(), &frames, &normals, config.tangent_frame);
        if config.formulation == Formulation::Improved {
            check_tangent_conditioning(mesh.triangles(), &frames, &tangents, mesh.num_vertices())?;
        }
        Ok(Self {
            frames,
            weingarten,
            tangents,
            layout,
        })
    }
}

/// The tangential rows at vertex `k` test `X^{m+1} - X^m` against the
/// lumped averages `t_ik = (1/3) sum |sigma| tau_i`. Nearly parallel averages
/// make the system close to singular, so they are rejected up front.
pub fn check_tangent_conditioning(
    triangles: &[[usize; 3]],
    frames: &[FaceFrame],
    tangents: &[CornerTangents],
    k: usize,
) -> Result<()> {
    let mut t1 = vec![Vec3::zeros(); k];
    let mut t2 = vec![Vec3::zeros(); k];
    let mut mass = vec![0.0; k];
    for ((tri, fr), t) in triangles.iter().zip(frames).zip(tangents) {
        for (&v, t) in tri.iter().zip(t) {
            t1[v] += fr.area / 3.0 * t[0];
            t2[v] += fr.area / 3.0 * t[1];
            mass[v] += fr.area / 3.0;
        }
    }
    for v in 0..k {
        let gram = t1[v].norm_squared() * t2[v].norm_squared() - t1[v].dot(&t2[v]).powi(2);
        if !(gram >= TANGENT_GRAM_RELATIVE_LIMIT * mass[v].powi(4)) {
            return Err(Error::Conditioning {
                vertex: v,
                gram: gram / mass[v].powi(4),
            });
        }
    }
    Ok(())
}

// Generic reference directions; the second is orthogonal to the first.
const REFERENCE_A: Vec3 = Vec3::new(
    0.267_261_241_912_424_4,
    0.534_522_483_824_848_8,
    0.801_783_725_737_273_2,
);
const REFERENCE_B: Vec3 = Vec3::new(
    0.963_624_111_659_432_7,
    -0.148_249_863_332_220_4,
    -0.222_374_794_998_330_6,
);

/// Tangent pair of one face at each of its corners.
pub type CornerTangents = [[Vec3; 2]; 3];

/// Tangent pairs for the tangential rows. With [`TangentFrame::Reference`]
/// every face around a vertex projects the same reference direction, picked
/// from the vertex normal, so the averaged pair at that vertex cannot cancel.
pub fn face_tangents(
    triangles: &[[usize; 3]],
    frames: &[FaceFrame],
    vertex_normals: &[Vec3],
    choice: TangentFrame,
) -> Vec<CornerTangents> {
    let reference: Vec<Vec3> = vertex_normals
        .iter()
        .map(|n| {
            if n.cross(&REFERENCE_A).norm() >= std::f64::consts::FRAC_1_SQRT_2 {
                REFERENCE_A
            } else {
                REFERENCE_B
            }
        })
        .collect();
    triangles
        .iter()
        .zip(frames)
        .map(|(tri, fr)| match choice {
            TangentFrame::Edges => [[fr.tangent1, fr.tangent2]; 3],
            TangentFrame::Reference => tri.map(|v| {
                let t1 = fr.normal.cross(&reference[v]).normalize();
                [t1, fr.normal.cross(&t1)]
            }),
        })
        .collect()
}

/// Per-face quantities shared by the residual and the Jacobian.
pub(super) struct FaceTerms {
    pub(super) s: f64,
    pub(super) n: Vec3,
    pub(super) t: CornerTangents,
    /// `k[e][c] = g_e . g_c`.
    pub(super) k: [[f64; 3]; 3],
    /// `A g_c`.
    pub(super) ag: [Vec3; 3],
    /// `(grad X) g_c = sum_e X_e k[e][c]`.
    pub(super) dxg: [Vec3; 3],
    pub(super) f: [f64; 3],
    pub(super) fp: [f64; 3],
    pub(super) fpp: [f64; 3],
}

impl FaceTerms {
    pub(super) fn new(
        fr: &FaceFrame,
        t: &CornerTangents,
        a: &Mat3,
        tri: &[usize; 3],
        it: &NewtonIterate,
        config: &StepConfig,
    ) -> Self {
        let g = &fr.hat_gradients;
        let mut k = [[0.0; 3]; 3];
        for e in 0..3 {
            for c in 0..3 {
                k[e][c] = g[e].dot(&g[c]);
            }
        }
        let x = tri.map(|v| it.positions[v]);
        let h = tri.map(|v| it.curvature[v]);
        let density = &config.density;
        Self {
            s: fr.area,
            n: fr.normal,
            t: *t,
            k,
            ag: [a * g[0], a * g[1], a * g[2]],
            dxg: std::array::from_fn(|c| (0..3).map(|e| x[e] * k[e][c]).sum()),
            f: h.map(|v| density.f(v)),
            fp: h.map(|v| density.df(v)),
            fpp: h.map(|v| density.ddf(v)),
        }
    }
}

fn check_inputs(state: &FlowState, ctx: &StepContext, it: &NewtonIterate) -> Result<()> {
    let k = state.mesh.num_vertices();
    it.check(k)?;
    if ctx.frames.len() != state.mesh.num_triangles() || ctx.layout.vertices != k {
        return Err(Error::Shape {
            expected: state.mesh.num_triangles(),
            found: ctx.frames.len(),
        });
    }
    if state.curvature.len() != k {
        return Err(Error::Shape {
            expected: k,
            found: state.curvature.len(),
        });
    }
    Ok(())
}

/// Stacked nodal residual of the scheme at `iterate`.
pub fn residual(
    state: &FlowState,
    ctx: &StepContext,
    it: &NewtonIterate,
    config: &StepConfig,
) -> Result<Vec<f64>> {
    check_inputs(state, ctx, it)?;
    let layout = &ctx.layout;
    let alpha = state.alpha;
    let tau = config.tau;
    let xm = state.mesh.vertices();
    let mut r = vec![0.0; layout.dimension()];
    for (((tri, fr), a), t) in state
        .mesh
        .triangles()
        .iter()
        .zip(&ctx.frames)
        .zip(&ctx.weingarten)
        .zip(&ctx.tangents)
    {
        let ft = FaceTerms::new(fr, t, a, tri, it, config);
        let s = ft.s;
        let dx = tri.map(|v| it.positions[v] - xm[v]);
        let fbar = ft.f.iter().sum::<f64>() / 3.0;
        let fpbar = ft.fp.iter().sum::<f64>() / 3.0;
        for (c, &v) in tri.iter().enumerate() {
            let mut lumped = it.velocity[v] * ft.n;
            if layout.formulation == Formulation::Improved {
                lumped += alpha * (it.beta1[v] * ft.t[c][0] + it.beta2[v] * ft.t[c][1]);
            }
            let grad_fp_gc: f64 = (0..3).map(|e| ft.fp[e] * ft.k[e][c]).sum();
            let rc =
                s / 3.0 * lumped - s * (fpbar * ft.ag[c] - grad_fp_gc * ft.n - fbar * ft.dxg[c]);
            for d in 0..3 {
                r[layout.x(v, d)] += rc[d];
            }

            r[layout.v(v)] += s / 3.0 * (dx[c].dot(&ft.n) / tau - it.velocity[v]);
            for i in 0..2 {
                if let Some(row) = layout.beta(i, v) {
                    r[row] += s / 3.0 * dx[c].dot(&ft.t[c][i]);
                }
            }

            let normal_part: f64 = (0..3).map(|e| ft.n.dot(&dx[e]) * ft.k[e][c]).sum();
            let weingarten_part: f64 = (0..3).map(|e| dx[e].dot(&ft.ag[e])).sum();
            r[layout.h(v)] += s / 3.0 * (it.curvature[v] - state.curvature[v])
                - s * (normal_part - weingarten_part / 3.0);
        }
    }
    Ok(r)
}

fn face_jacobian(
    tri: &[usize; 3],
    ft: &FaceTerms,
    layout: &Layout,
    alpha: f64,
    tau: f64,
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(150);
    let s = ft.s;
    let fbar = ft.f.iter().sum::<f64>() / 3.0;
    for (c, &vc) in tri.iter().enumerate() {
        for (e, &ve) in tri.iter().enumerate() {
            let kec = ft.k[e][c];
            // block (c): X and H columns
            for d in 0..3 {
                out.push((layout.x(vc, d), layout.x(ve, d), s * fbar * kec));
            }
            let dh = -s
                * (ft.fpp[e] / 3.0 * ft.ag[c]
                    - ft.fpp[e] * kec * ft.n
                    - ft.fp[e] / 3.0 * ft.dxg[c]);
            for d in 0..3 {
                out.push((layout.x(vc, d), layout.h(ve), dh[d]));
            }
            // block (d): X columns
            let dx = -s * (kec * ft.n - ft.ag[e] / 3.0);
            for d in 0..3 {
                out.push((layout.h(vc), layout.x(ve, d), dx[d]));
            }
        }
        for d in 0..3 {
            out.push((layout.x(vc, d), layout.v(vc), s / 3.0 * ft.n[d]));
            out.push((layout.v(vc), layout.x(vc, d), s / (3.0 * tau) * ft.n[d]));
        }
        out.push((layout.v(vc), layout.v(vc), -s / 3.0));
        out.push((layout.h(vc), layout.h(vc), s / 3.0));
        for i in 0..2 {
            if let Some(b) = layout.beta(i, vc) {
                for d in 0..3 {
                    out.push((layout.x(vc, d), b, s / 3.0 * alpha * ft.t[c][i][d]));
                    out.push((b, layout.x(vc, d), s / 3.0 * ft.t[c][i][d]));
                }
            }
        }
    }
    out
}

/// Jacobian of [`residual`] at `iterate`, with right-hand side `-residual`.
pub fn assemble_newton_system(
    state: &FlowState,
    ctx: &StepContext,
    it: &NewtonIterate,
    config: &StepConfig,
) -> Result<SparseSystem> {
    let r = residual(state, ctx, it, config)?;
    let layout = ctx.layout;
    let entries: Vec<(usize, usize, f64)> = state
        .mesh
        .triangles()
        .par_iter()
        .zip(ctx.frames.par_iter())
        .zip(ctx.weingarten.par_iter())
        .zip(ctx.tangents.par_iter())
        .flat_map_iter(|(((tri, fr), a), t)| {
            let ft = FaceTerms::new(fr, t, a, tri, it, config);
            face_jacobian(tri, &ft, &layout, state.alpha, config.tau)
        })
        .collect();
    SparseSystem::from_triplets(layout.dimension(), &entries, r.iter().map(|x| -x).collect())
}
