use super::*;
use crate::mesh::{make_ellipsoid, make_icosphere, make_octahedron, make_torus};
use crate::ops::{face_frames, surface_gradient_vector, vertex_normals_weighted, NormalWeighting};
use crate::{Mat3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn octahedron_state(alpha: f64) -> FlowState {
    FlowState::initial(make_octahedron(1.0).unwrap(), alpha).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Random iterate near the initial one so that every term is active.
fn perturbed(state: &FlowState, layout: &Layout, rng: &mut ChaCha8Rng) -> NewtonIterate {
    let base = NewtonIterate::initial(state).to_vector(layout);
    let u: Vec<f64> = base
        .iter()
        .map(|x| x + rng.random_range(-0.05..0.05))
        .collect();
    NewtonIterate::from_vector(&u, layout).unwrap()
}

const FD_STEP: f64 = 1e-6;

fn fd_jacobian(
    state: &FlowState,
    ctx: &StepContext,
    it: &NewtonIterate,
    config: &StepConfig,
) -> nalgebra::DMatrix<f64> {
    let n = ctx.layout.dimension();
    let u = it.to_vector(&ctx.layout);
    let eps = FD_STEP;
    let mut j = nalgebra::DMatrix::zeros(n, n);
    for c in 0..n {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[c] += eps;
        dn[c] -= eps;
        let rp = residual(
            state,
            ctx,
            &NewtonIterate::from_vector(&up, &ctx.layout).unwrap(),
            config,
        )
        .unwrap();
        let rm = residual(
            state,
            ctx,
            &NewtonIterate::from_vector(&dn, &ctx.layout).unwrap(),
            config,
        )
        .unwrap();
        for r in 0..n {
            j[(r, c)] = (rp[r] - rm[r]) / (2.0 * eps);
        }
    }
    j
}

#[test]
fn layout_dimensions_and_roundtrip() {
    let state = octahedron_state(1e6);
    for (f, dim) in [(Formulation::Improved, 42), (Formulation::Plain, 30)] {
        let layout = Layout::new(6, f);
        assert_eq!(layout.dimension(), dim);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let it = perturbed(&state, &layout, &mut rng);
        let back = NewtonIterate::from_vector(&it.to_vector(&layout), &layout).unwrap();
        assert_eq!(back, it);
    }
}

/// Hand assembly of `<f'(H) A - n grad f'(H)^T - f(H) grad X, grad omega>`
/// through the operator module, for every `omega = e_d phi_k`.
fn curvature_functional(state: &FlowState, density: &EnergyDensity) -> Vec<f64> {
    let mesh = &state.mesh;
    let frames = face_frames(mesh).unwrap();
    let w = crate::ops::vertex_normals_weighted(mesh, &frames, Default::default()).unwrap();
    let a = crate::ops::weingarten(mesh, &frames, &w).unwrap();
    let k = mesh.num_vertices();
    let fp: Vec<f64> = state.curvature.iter().map(|&h| density.df(h)).collect();
    let f: Vec<f64> = state.curvature.iter().map(|&h| density.f(h)).collect();
    let grad_fp = crate::ops::surface_gradient_scalar(mesh, &frames, &fp).unwrap();
    let grad_x = surface_gradient_vector(mesh, &frames, mesh.vertices()).unwrap();
    let ones = vec![1.0; k];
    let normal_part: Vec<Mat3> = frames
        .iter()
        .zip(&grad_fp)
        .map(|(fr, g)| fr.normal * g.transpose())
        .collect();
    let mut out = vec![0.0; 3 * k];
    for v in 0..k {
        for d in 0..3 {
            let mut omega = vec![Vec3::zeros(); k];
            omega[v][d] = 1.0;
            let go = surface_gradient_vector(mesh, &frames, &omega).unwrap();
            out[3 * v + d] = crate::ops::inner_lumped_matrix(mesh, &frames, &fp, &a, &go).unwrap()
                - crate::ops::inner_lumped_matrix(mesh, &frames, &ones, &normal_part, &go).unwrap()
                - crate::ops::inner_lumped_matrix(mesh, &frames, &f, &grad_x, &go).unwrap();
        }
    }
    out
}

#[test]
fn residual_at_initial_iterate() {
    for density in EnergyDensity::BUILT_IN {
        let state = octahedron_state(1e6);
        let config = StepConfig::new(1e-3, density.clone());
        let ctx = StepContext::new(&state, &config).unwrap();
        let r = residual(&state, &ctx, &NewtonIterate::initial(&state), &config).unwrap();
        assert!(
            max_abs(&r[18..]) == 0.0,
            "{density}: blocks a, b, d must vanish"
        );
        let expected = curvature_functional(&state, &density);
        for (got, want) in r[..18].iter().zip(&expected) {
            assert!(
                (got + want).abs() < 1e-12 * (1.0 + want.abs()),
                "{density}: {got} vs {}",
                -want
            );
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    for density in EnergyDensity::BUILT_IN {
        for alpha in [1.0, 1e6] {
            for formulation in [Formulation::Improved, Formulation::Plain] {
                let state = octahedron_state(alpha);
                let mut config = StepConfig::new(1e-2, density.clone());
                config.formulation = formulation;
                let ctx = StepContext::new(&state, &config).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(7);
                let it = perturbed(&state, &ctx.layout, &mut rng);
                let j = assemble_newton_system(&state, &ctx, &it, &config)
                    .unwrap()
                    .to_dense();
                let fd = fd_jacobian(&state, &ctx, &it, &config);
                let scale = j.amax();
                // rounding in the central difference quotient
                let r = residual(&state, &ctx, &it, &config).unwrap();
                let noise = 16.0 * f64::EPSILON * max_abs(&r).max(1.0) / FD_STEP;
                let worst = j
                    .iter()
                    .zip(fd.iter())
                    .map(|(a, b)| ((a - b).abs() - noise).max(0.0) / a.abs().max(1e-6 * scale))
                    .fold(0.0, f64::max);
                assert!(
                    worst < 1e-5,
                    "{density} alpha {alpha} {formulation:?}: {worst}"
                );
            }
        }
    }
}

#[test]
fn taylor_remainder_is_second_order() {
    let state = FlowState::initial(make_ellipsoid(2.0, 1.0, 1).unwrap(), 1e3).unwrap();
    let config = StepConfig::new(1e-3, EnergyDensity::QuarticCurvature);
    let ctx = StepContext::new(&state, &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let it = perturbed(&state, &ctx.layout, &mut rng);
    let u = it.to_vector(&ctx.layout);
    let d: Vec<f64> = (0..u.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sys = assemble_newton_system(&state, &ctx, &it, &config).unwrap();
    let jd = sys.apply(&d);
    let r0 = residual(&state, &ctx, &it, &config).unwrap();
    let remainder = |eps: f64| {
        let ue: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
        let re = residual(
            &state,
            &ctx,
            &NewtonIterate::from_vector(&ue, &ctx.layout).unwrap(),
            &config,
        )
        .unwrap();
        re.iter()
            .zip(&r0)
            .zip(&jd)
            .map(|((a, b), c)| (a - b - eps * c).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let e: Vec<f64> = [1e-3, 1e-4, 1e-5].iter().map(|&x| remainder(x)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log10();
        assert!(order >= 1.9, "observed order {order} from {e:?}");
    }
}

#[test]
fn lumped_rows_touch_one_vertex() {
    let state = octahedron_state(1e6);
    let config = StepConfig::new(1e-3, EnergyDensity::Willmore);
    let ctx = StepContext::new(&state, &config).unwrap();
    let sys =
        assemble_newton_system(&state, &ctx, &NewtonIterate::initial(&state), &config).unwrap();
    let l = ctx.layout;
    for k in 0..6 {
        let mut cols: Vec<usize> = sys
            .row_entries(l.v(k))
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        cols.sort_unstable();
        cols.dedup();
        assert_eq!(cols, vec![l.x(k, 0), l.x(k, 1), l.x(k, 2), l.v(k)]);
        for i in 0..2 {
            let mut cols: Vec<usize> = sys
                .row_entries(l.beta(i, k).unwrap())
                .into_iter()
                .map(|(c, _)| c)
                .collect();
            cols.sort_unstable();
            cols.dedup();
            assert_eq!(cols, vec![l.x(k, 0), l.x(k, 1), l.x(k, 2)]);
        }
    }
}

#[test]
fn sphere_willmore_newton_converges() {
    let state = FlowState::initial(make_icosphere(2, 1.0).unwrap(), 1e6).unwrap();
    let config = StepConfig::new(1e-3, EnergyDensity::Willmore);
    let out = newton_solve(&state, &config).unwrap();
    assert!(*out.update_norms.last().unwrap() <= 1e-10);
    let ctx = StepContext::new(&state, &config).unwrap();
    let r = residual(&state, &ctx, &out.iterate, &config).unwrap();
    let k = state.mesh.num_vertices();
    assert!(
        max_abs(&r[4 * k..6 * k]) <= config.newton_tol,
        "tangential rows"
    );
    assert!(max_abs(&r) <= 1e-10);
}

#[test]
fn positions_do_not_depend_on_alpha() {
    let mesh = make_ellipsoid(2.0, 1.0, 2).unwrap();
    let config = StepConfig::new(1e-3, EnergyDensity::Willmore);
    let solve = |alpha: f64| {
        let state = FlowState::initial(mesh.clone(), alpha).unwrap();
        newton_solve(&state, &config).unwrap().iterate
    };
    let a = solve(1e3);
    let b = solve(1e6);
    for (p, q) in a.positions.iter().zip(&b.positions) {
        assert!((p - q).norm() < 1e-9);
    }
    for (p, q) in a.curvature.iter().zip(&b.curvature) {
        assert!((p - q).abs() < 1e-9);
    }
    for (p, q) in a.beta1.iter().zip(&b.beta1) {
        assert!((p * 1e3 - q * 1e6).abs() < 1e-6 * (1.0 + (p * 1e3).abs()));
    }
}

#[test]
fn plain_formulation_is_the_zero_alpha_scheme() {
    let mesh = make_ellipsoid(2.0, 1.0, 2).unwrap();
    let mut config = StepConfig::new(1e-3, EnergyDensity::Willmore);
    config.formulation = Formulation::Plain;
    let state = FlowState::initial(mesh, 0.0).unwrap();
    let plain = newton_solve(&state, &config).unwrap().iterate;
    assert!(plain.beta1.iter().chain(&plain.beta2).all(|&b| b == 0.0));

    config.formulation = Formulation::Improved;
    let ctx = StepContext::new(&state, &config).unwrap();
    let r = residual(&state, &ctx, &plain, &config).unwrap();
    let k = state.mesh.num_vertices();
    assert!(max_abs(&r[..4 * k]) < 1e-9, "blocks c and a");
    assert!(max_abs(&r[6 * k..]) < 1e-9, "block d");
    // the tangential rows are what the penalty adds; without it they do not hold
    assert!(max_abs(&r[4 * k..6 * k]) > 1e-9);
}

#[test]
fn adapt_alpha_branches() {
    let c = StepConfig::new(1e-3, EnergyDensity::Willmore);
    assert_eq!(adapt_alpha(1e6, &[2e-4], &[0.0], &c), 5e6);
    assert_eq!(adapt_alpha(1e6, &[1e-7], &[-1e-7], &c), 2e5);
    assert_eq!(adapt_alpha(1e6, &[5e-5], &[0.0], &c), 1e6);
    assert_eq!(adapt_alpha(1e6, &[0.0], &[-2e-4], &c), 5e6);
}

#[test]
fn config_validation() {
    let mut c = StepConfig::new(1e-3, EnergyDensity::Area);
    assert!(c.validate().is_ok());
    c.alpha_factor = 1.0;
    assert!(c.validate().is_err());
    let mut c = StepConfig::new(0.0, EnergyDensity::Area);
    assert!(c.validate().is_err());
    c.tau = 1e-3;
    c.beta_lower = 1e-3;
    assert!(c.validate().is_err());
}

#[test]
fn sphere_willmore_step_is_nearly_stationary() {
    let state = FlowState::initial(make_icosphere(3, 1.0).unwrap(), 1e6).unwrap();
    let config = StepConfig::new(1e-3, EnergyDensity::Willmore);
    let w0 = state.energy(&config.density).unwrap();
    let (next, stats) = step(&state, &config).unwrap();
    assert!(stats.energy <= w0 + 1e-9 * w0.abs());
    let drift = next
        .mesh
        .vertices()
        .iter()
        .zip(state.mesh.vertices())
        .map(|(p, q)| (p.norm() - q.norm()).abs())
        .fold(0.0, f64::max);
    assert!(drift < 1e-3, "{drift}");
    assert_eq!(next.step_index, 1);
    assert!((next.time - 1e-3).abs() < 1e-18);
}

fn mean_radius(mesh: &crate::mesh::SurfaceMesh) -> f64 {
    mesh.vertices().iter().map(|p| p.norm()).sum::<f64>() / mesh.num_vertices() as f64
}

struct Radii(Vec<(f64, f64)>);

impl StepObserver for Radii {
    fn on_step(&mut self, state: &FlowState, _: &StepStats) -> Result<()> {
        self.0.push((state.time, mean_radius(&state.mesh)));
        Ok(())
    }
}

#[test]
fn mean_curvature_flow_of_a_sphere() {
    let state = FlowState::initial(make_icosphere(3, 2.0).unwrap(), 1e6).unwrap();
    let config = StepConfig::new(1e-3, EnergyDensity::Area);
    let mut radii = Radii(Vec::new());
    let summary = run(state, &config, 0.5, &mut radii).unwrap();
    assert_eq!(summary.stats.len(), 500);
    for (t, r) in radii.0 {
        let exact = (4.0 - 4.0 * t).sqrt();
        assert!((r / exact - 1.0).abs() < 0.01, "t={t}: {r} vs {exact}");
    }
    let areas: Vec<f64> = summary.stats.iter().map(|s| s.area).collect();
    assert!(areas.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn gauss_flow_of_a_sphere() {
    let state = FlowState::initial(make_icosphere(3, 1.5).unwrap(), 1e6).unwrap();
    let config = StepConfig::new(1e-3, EnergyDensity::MeanCurvatureIntegral);
    let mut radii = Radii(Vec::new());
    run(state, &config, 0.25, &mut radii).unwrap();
    for (t, r) in radii.0 {
        let exact = (1.5f64.powi(3) - 6.0 * t).cbrt();
        assert!((r / exact - 1.0).abs() < 0.02, "t={t}: {r} vs {exact}");
    }
}

// The quartic flow of this surface at tau = 10 stalls far from a solution.
fn elongated_ellipsoid() -> crate::mesh::SurfaceMesh {
    make_ellipsoid(4.0, 1.0, 3).unwrap()
}

#[test]
fn huge_step_fails_to_converge() {
    let state = FlowState::initial(elongated_ellipsoid(), 1e6).unwrap();
    let mut config = StepConfig::new(10.0, EnergyDensity::QuarticCurvature);
    config.max_newton_iters = 20;
    match newton_solve(&state, &config) {
        Err(Error::NonConvergence { .. }) | Err(Error::Solver(_)) => {}
        other => panic!("expected a failure, got {:?}", other.map(|o| o.iterations)),
    }
}

struct AbortWatch(Option<usize>);

impl StepObserver for AbortWatch {
    fn on_abort(&mut self, last_good: &FlowState, _: &Error) -> Result<()> {
        self.0 = Some(last_good.step_index);
        Ok(())
    }
}

#[test]
fn failed_run_reports_step_and_last_state() {
    let state = FlowState::initial(elongated_ellipsoid(), 1e6).unwrap();
    let mut config = StepConfig::new(10.0, EnergyDensity::QuarticCurvature);
    config.max_newton_iters = 10;
    let mut watch = AbortWatch(None);
    let err = run(state, &config, 10.0, &mut watch).unwrap_err();
    assert!(matches!(err, Error::RunAborted { step: 1, .. }), "{err}");
    assert_eq!(watch.0, Some(0));
}

#[test]
fn empty_run_returns_initial_state() {
    let state = octahedron_state(1e6);
    let config = StepConfig::new(1e-3, EnergyDensity::Willmore);
    let summary = run(state.clone(), &config, 0.0, &mut NoObserver).unwrap();
    assert!(summary.stats.is_empty());
    assert_eq!(summary.final_state.mesh, state.mesh);
    assert_eq!(summary.final_energy(), summary.initial_energy);
}

#[test]
fn step_counts() {
    assert_eq!(steps_between(0.0, 2.0, 1e-3), 2000);
    assert_eq!(steps_between(0.0, 0.4, 1e-4), 4000);
    assert_eq!(steps_between(0.0, 0.0015, 1e-3), 2);
    assert_eq!(steps_between(1.0, 1.0, 1e-3), 0);
}

#[test]
fn generated_meshes_pass_the_tangent_check() {
    let config = StepConfig::new(1e-3, EnergyDensity::Willmore);
    for mesh in [
        make_icosphere(4, 1.0).unwrap(),
        make_ellipsoid(2.0, 2.0, 3).unwrap(),
        make_torus(3f64.sqrt(), 0.5f64.sqrt(), 44, 14).unwrap(),
    ] {
        let state = FlowState::initial(mesh, 1e6).unwrap();
        StepContext::new(&state, &config).unwrap();
    }
}

#[test]
fn edge_tangents_cancel_on_symmetric_meshes() {
    let mut config = StepConfig::new(1e-3, EnergyDensity::Willmore);
    config.tangent_frame = TangentFrame::Edges;
    let state = octahedron_state(1e6);
    assert!(matches!(
        StepContext::new(&state, &config),
        Err(Error::Conditioning { .. })
    ));
    config.formulation = Formulation::Plain;
    assert!(StepContext::new(&state, &config).is_ok());
}

#[test]
fn reference_tangents_are_orthonormal_and_tangent() {
    let mesh = make_torus(2.0, 0.5, 30, 10).unwrap();
    let frames = face_frames(&mesh).unwrap();
    let normals = vertex_normals_weighted(&mesh, &frames, NormalWeighting::Angle).unwrap();
    let tangents = face_tangents(mesh.triangles(), &frames, &normals, TangentFrame::Reference);
    for (corners, fr) in tangents.iter().zip(&frames) {
        for t in corners {
            assert!((t[0].norm() - 1.0).abs() < 1e-12 && (t[1].norm() - 1.0).abs() < 1e-12);
            assert!(t[0].dot(&t[1]).abs() < 1e-12);
            assert!(t[0].dot(&fr.normal).abs() < 1e-12 && t[1].dot(&fr.normal).abs() < 1e-12);
        }
    }
}

// Vertices may move only normal to their averaged tangent pair, so on a sphere
// that pair has to stay close to the tangent plane.
#[test]
fn sphere_vertices_move_radially() {
    let state = FlowState::initial(make_icosphere(4, 1.0).unwrap(), 1e6).unwrap();
    let config = StepConfig::new(7.5e-4, EnergyDensity::Area);
    let (next, _) = step(&state, &config).unwrap();
    for (p, q) in state.mesh.vertices().iter().zip(next.mesh.vertices()) {
        let d = q - p;
        let tilt = (d.dot(p).abs() / (d.norm() * p.norm())).min(1.0).acos();
        assert!(
            tilt.to_degrees() < 2.0,
            "tilt {} degrees",
            tilt.to_degrees()
        );
    }
}

#[test]
fn reduced_update_matches_the_full_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let meshes = [
        make_icosphere(1, 1.0).unwrap(),
        make_ellipsoid(2.0, 0.5, 1).unwrap(),
        make_torus(2.0, 0.8, 9, 6).unwrap(),
    ];
    for mesh in meshes {
        for density in EnergyDensity::BUILT_IN {
            for alpha in [1.0, 1e6] {
                let state = FlowState::initial(mesh.clone(), alpha).unwrap();
                let config = StepConfig::new(1e-2, density.clone());
                let ctx = StepContext::new(&state, &config).unwrap();
                let it = perturbed(&state, &ctx.layout, &mut rng);
                let full = LinearSolver::new()
                    .solve(&assemble_newton_system(&state, &ctx, &it, &config).unwrap())
                    .unwrap();
                let reduced = CondensedSolver::new()
                    .update(&state, &ctx, &it, &config)
                    .unwrap();
                let k = ctx.layout.vertices;
                // compare each block on its own scale
                for (lo, hi) in [(0, 3 * k), (3 * k, 4 * k), (4 * k, 6 * k), (6 * k, 7 * k)] {
                    let scale = max_abs(&full[lo..hi]).max(1e-300);
                    let err = (lo..hi)
                        .map(|i| (full[i] - reduced[i]).abs())
                        .fold(0.0, f64::max);
                    assert!(
                        err <= 1e-7 * scale,
                        "{density} alpha={alpha} block {lo}: {err:e} vs {scale:e}"
                    );
                }
            }
        }
    }
}
