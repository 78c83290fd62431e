//! Newton updates through an exact reduction to `(dV, dH)`.
//!
//! The lumped rows for `V` and `beta` fix the position update at each vertex
//! up to the unknown `dV`: `dX_k = dV_k p_k + q_k`. Testing the position rows
//! with `m_k`, the normal of the averaged tangent plane, removes `beta`. What
//! is left is a `2K` system whose sparsity pattern depends on the mesh
//! connectivity only, so it is assembled into fixed slots and its symbolic
//! factorization is shared by every step. `dX` and `dbeta` are recovered
//! vertex by vertex afterwards.

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};

use super::linear::refined_solve;
use super::system::{residual, FaceTerms, NewtonIterate, StepContext};
use super::{FlowState, StepConfig};
use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

/// Slots per face: `VV`, `VH` and `HV` couplings for each corner pair.
const FACE_SLOTS: usize = 27;

struct Pattern {
    triangles: Vec<[usize; 3]>,
    symbolic: SymbolicSparseColMat<usize>,
    lu: SymbolicLu<usize>,
    face_slots: Vec<[usize; FACE_SLOTS]>,
    vv_diag: Vec<usize>,
    hh_diag: Vec<usize>,
}

impl Pattern {
    fn new(triangles: &[[usize; 3]], k: usize) -> Result<Self> {
        let n = 2 * k;
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in triangles {
            for &vc in tri {
                for &ve in tri {
                    cols[ve].push(vc);
                    cols[k + ve].push(vc);
                    cols[ve].push(k + vc);
                }
            }
        }
        for v in 0..k {
            cols[k + v].push(k + v);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in &mut cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        let slot = |row: usize, col: usize| -> usize {
            let (lo, hi) = (col_ptr[col], col_ptr[col + 1]);
            lo + row_idx[lo..hi]
                .binary_search(&row)
                .expect("entry is in the pattern")
        };
        let face_slots = triangles
            .iter()
            .map(|tri| {
                let mut s = [0; FACE_SLOTS];
                for (c, &vc) in tri.iter().enumerate() {
                    for (e, &ve) in tri.iter().enumerate() {
                        let base = 9 * c + 3 * e;
                        s[base] = slot(vc, ve);
                        s[base + 1] = slot(vc, k + ve);
                        s[base + 2] = slot(k + vc, ve);
                    }
                }
                s
            })
            .collect();
        let vv_diag = (0..k).map(|v| slot(v, v)).collect();
        let hh_diag = (0..k).map(|v| slot(k + v, k + v)).collect();
        let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let lu = SymbolicLu::try_new(symbolic.as_ref())
            .map_err(|e| Error::Solver(format!("symbolic factorization failed: {e:?}")))?;
        Ok(Self {
            triangles: triangles.to_vec(),
            symbolic,
            lu,
            face_slots,
            vv_diag,
            hh_diag,
        })
    }
}

/// Per-vertex lumped frame of one step.
struct VertexFrame {
    /// `sum |sigma|/3 n`.
    normal: Vec3,
    mass: f64,
    /// Unit normal of the plane spanned by the averaged tangents.
    m: Vec3,
    /// Inverse of the matrix with rows `N, T1, T2`.
    rows_inv: Mat3,
    /// `dX = dV p + q` coefficient.
    p: Vec3,
}

fn vertex_frames(state: &FlowState, ctx: &StepContext, tau: f64) -> Result<Vec<VertexFrame>> {
    let k = state.mesh.num_vertices();
    let mut sums = vec![(Vec3::zeros(), Vec3::zeros(), Vec3::zeros(), 0.0); k];
    for ((tri, fr), t) in state
        .mesh
        .triangles()
        .iter()
        .zip(&ctx.frames)
        .zip(&ctx.tangents)
    {
        let w = fr.area / 3.0;
        for (&v, t) in tri.iter().zip(t) {
            let e = &mut sums[v];
            e.0 += w * fr.normal;
            e.1 += w * t[0];
            e.2 += w * t[1];
            e.3 += w;
        }
    }
    sums.into_iter()
        .enumerate()
        .map(|(v, (n, t1, t2, mass))| {
            let rows = Mat3::from_rows(&[n.transpose(), t1.transpose(), t2.transpose()]);
            let m = t1.cross(&t2);
            let degenerate = || Error::Conditioning {
                vertex: v,
                gram: m.norm_squared() / mass.powi(4),
            };
            let rows_inv = rows.try_inverse().ok_or_else(degenerate)?;
            let m = m.try_normalize(0.0).ok_or_else(degenerate)?;
            Ok(VertexFrame {
                normal: n,
                mass,
                m,
                rows_inv,
                p: rows_inv * Vec3::new(tau * mass, 0.0, 0.0),
            })
        })
        .collect()
}

/// Position-row couplings of one face, kept for the recovery of `dbeta`.
struct FaceCoupling {
    /// Scalar `X`-`X` coefficient, `[c][e]`.
    xx: [[f64; 3]; 3],
    /// `X` row against `H` column, `[c][e]`.
    xh: [[Vec3; 3]; 3],
}

/// Newton solver for the improved formulation working on the reduced system.
#[derive(Default)]
pub struct CondensedSolver {
    pattern: Option<Pattern>,
}

impl CondensedSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn pattern(&mut self, triangles: &[[usize; 3]], k: usize) -> Result<&Pattern> {
        let stale = !matches!(&self.pattern, Some(p) if p.triangles == triangles);
        if stale {
            self.pattern = Some(Pattern::new(triangles, k)?);
        }
        Ok(self.pattern.as_ref().expect("set above"))
    }

    /// Newton update at `it` in the stacked layout of `ctx`, identical to the
    /// solution of the full Jacobian system.
    pub fn update(
        &mut self,
        state: &FlowState,
        ctx: &StepContext,
        it: &NewtonIterate,
        config: &StepConfig,
    ) -> Result<Vec<f64>> {
        let layout = ctx.layout;
        let k = layout.vertices;
        let (b1, b2) = match (layout.beta(0, 0), layout.beta(1, 0)) {
            (Some(_), Some(_)) => (0, 1),
            _ => {
                return Err(Error::Precondition(
                    "reduced solve needs tangential unknowns".into(),
                ))
            }
        };
        if !(state.alpha > 0.0) {
            return Err(Error::Precondition(
                "reduced solve needs a positive penalty".into(),
            ));
        }
        let tau = config.tau;
        let r = residual(state, ctx, it, config)?;
        let frames = vertex_frames(state, ctx, tau)?;
        let rx = |v: usize| Vec3::new(r[layout.x(v, 0)], r[layout.x(v, 1)], r[layout.x(v, 2)]);
        let q: Vec<Vec3> = (0..k)
            .map(|v| {
                let rhs = Vec3::new(
                    -tau * r[layout.v(v)],
                    -r[layout.beta(b1, v).unwrap()],
                    -r[layout.beta(b2, v).unwrap()],
                );
                frames[v].rows_inv * rhs
            })
            .collect();

        let triangles = state.mesh.triangles();
        let pattern = self.pattern(triangles, k)?;
        let mut vals = vec![0.0; pattern.symbolic.row_idx().len()];
        let mut rhs = vec![0.0; 2 * k];
        let mut couplings = Vec::with_capacity(triangles.len());
        for ((((tri, fr), a), t), slots) in triangles
            .iter()
            .zip(&ctx.frames)
            .zip(&ctx.weingarten)
            .zip(&ctx.tangents)
            .zip(&pattern.face_slots)
        {
            let ft = FaceTerms::new(fr, t, a, tri, it, config);
            let s = ft.s;
            let fbar = ft.f.iter().sum::<f64>() / 3.0;
            let mut fc = FaceCoupling {
                xx: [[0.0; 3]; 3],
                xh: [[Vec3::zeros(); 3]; 3],
            };
            for (c, &vc) in tri.iter().enumerate() {
                let mc = frames[vc].m;
                for (e, &ve) in tri.iter().enumerate() {
                    let kec = ft.k[e][c];
                    let xx = s * fbar * kec;
                    let xh = -s
                        * (ft.fpp[e] / 3.0 * ft.ag[c]
                            - ft.fpp[e] * kec * ft.n
                            - ft.fp[e] / 3.0 * ft.dxg[c]);
                    let hx = -s * (kec * ft.n - ft.ag[e] / 3.0);
                    let base = 9 * c + 3 * e;
                    vals[slots[base]] += xx * mc.dot(&frames[ve].p);
                    vals[slots[base + 1]] += mc.dot(&xh);
                    vals[slots[base + 2]] += hx.dot(&frames[ve].p);
                    rhs[vc] -= xx * mc.dot(&q[ve]);
                    rhs[k + vc] -= hx.dot(&q[ve]);
                    fc.xx[c][e] = xx;
                    fc.xh[c][e] = xh;
                }
            }
            couplings.push(fc);
        }
        for (v, fr) in frames.iter().enumerate() {
            vals[pattern.vv_diag[v]] += fr.m.dot(&fr.normal);
            vals[pattern.hh_diag[v]] += fr.mass;
            rhs[v] -= fr.m.dot(&rx(v));
            rhs[k + v] -= r[layout.h(v)];
        }

        let matrix = SparseColMatRef::new(pattern.symbolic.as_ref(), &vals);
        let lu = Lu::try_new_with_symbolic(pattern.lu.clone(), matrix)
            .map_err(|e| Error::Solver(format!("numeric factorization failed: {e:?}")))?;
        let apply = |x: &[f64]| {
            let mut y = vec![0.0; x.len()];
            for (col, &xc) in x.iter().enumerate() {
                for (&row, &v) in matrix
                    .row_idx_of_col_raw(col)
                    .iter()
                    .zip(matrix.val_of_col(col))
                {
                    y[row] += v * xc;
                }
            }
            y
        };
        let reduced = refined_solve(&lu, apply, &rhs)?;
        let (dv, dh) = reduced.split_at(k);

        let dx: Vec<Vec3> = (0..k).map(|v| dv[v] * frames[v].p + q[v]).collect();
        let mut w: Vec<Vec3> = (0..k).map(|v| -rx(v) - dv[v] * frames[v].normal).collect();
        for (tri, fc) in triangles.iter().zip(&couplings) {
            for (c, &vc) in tri.iter().enumerate() {
                for (e, &ve) in tri.iter().enumerate() {
                    w[vc] -= fc.xx[c][e] * dx[ve] + dh[ve] * fc.xh[c][e];
                }
            }
        }

        let mut delta = vec![0.0; layout.dimension()];
        for v in 0..k {
            for d in 0..3 {
                delta[layout.x(v, d)] = dx[v][d];
            }
            delta[layout.v(v)] = dv[v];
            delta[layout.h(v)] = dh[v];
            // w = a N + alpha (dbeta1 T1 + dbeta2 T2), so the coefficients
            // come from the transpose of the row matrix
            let coef = frames[v].rows_inv.transpose() * w[v];
            delta[layout.beta(b1, v).unwrap()] = coef[1] / state.alpha;
            delta[layout.beta(b2, v).unwrap()] = coef[2] / state.alpha;
        }
        Ok(delta)
    }
}
