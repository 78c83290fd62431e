//! Implicit time stepping with tangential-velocity control.
//!
//! Each step solves a nonlinear system for `X^{m+1}`, the normal velocity
//! `V`, tangential multipliers `beta1`, `beta2` and the curvature `H^{m+1}`
//! by Newton's method, then rescales the penalty `alpha` from the size of
//! `beta`.

mod condensed;
mod linear;
mod system;

pub use condensed::CondensedSolver;

pub use linear::{
    solve_sparse, LinearSolver, SparseSystem, LINEAR_RESIDUAL_LIMIT, LINEAR_RESIDUAL_TARGET,
};
pub use system::{
    assemble_newton_system, check_tangent_conditioning, face_tangents, residual, CornerTangents,
    Layout, NewtonIterate, StepContext, TANGENT_GRAM_RELATIVE_LIMIT,
};

use crate::density::EnergyDensity;
use crate::diagnostics::discrete_energy;
use crate::error::{Error, Result};
use crate::mesh::{signed_volume, SurfaceMesh};
use crate::ops::{
    curvature_from_normals_weighted, face_frames, inner_lumped_scalar, NormalWeighting,
};

/// Which discrete system a step solves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Formulation {
    /// Normal velocity plus penalized tangential motion (`7K` unknowns).
    #[default]
    Improved,
    /// No tangential multipliers (`5K` unknowns); equivalent to `alpha = 0`.
    Plain,
}

/// Tangent pairs tested against by the tangential rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TangentFrame {
    /// Orthonormal pair `n x a / |n x a|`, `n x (that)` in each face, where
    /// the reference `a` is chosen per vertex from two fixed directions.
    #[default]
    Reference,
    /// Unit vectors along the two triangle edges leaving the first corner.
    /// On symmetric meshes their vertex averages can cancel exactly.
    Edges,
}

/// How each Newton update is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LinearStrategy {
    /// Eliminate positions and multipliers vertex by vertex and factor the
    /// remaining `2K` system in `(V, H)`. Used for the improved formulation
    /// with a positive penalty; otherwise falls back to [`Self::Full`].
    #[default]
    Reduced,
    /// Factor the whole stacked Jacobian.
    Full,
}

/// Surface, curvature, penalty and clock at one time level.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub mesh: SurfaceMesh,
    pub curvature: Vec<f64>,
    pub alpha: f64,
    pub time: f64,
    pub step_index: usize,
}

impl FlowState {
    /// Initial state with curvature projected from the discrete Weingarten map.
    pub fn initial(mesh: SurfaceMesh, alpha0: f64) -> Result<Self> {
        Self::initial_weighted(mesh, alpha0, NormalWeighting::default())
    }

    pub fn initial_weighted(
        mesh: SurfaceMesh,
        alpha0: f64,
        weighting: NormalWeighting,
    ) -> Result<Self> {
        let curvature = curvature_from_normals_weighted(&mesh, weighting)?;
        Self::with_curvature(mesh, curvature, alpha0)
    }

    pub fn with_curvature(mesh: SurfaceMesh, curvature: Vec<f64>, alpha: f64) -> Result<Self> {
        if curvature.len() != mesh.num_vertices() {
            return Err(Error::Shape {
                expected: mesh.num_vertices(),
                found: curvature.len(),
            });
        }
        if !(alpha >= 0.0) {
            return Err(Error::Domain(format!(
                "alpha must be non-negative, got {alpha}"
            )));
        }
        Ok(Self {
            mesh,
            curvature,
            alpha,
            time: 0.0,
            step_index: 0,
        })
    }

    pub fn energy(&self, density: &EnergyDensity) -> Result<f64> {
        let frames = face_frames(&self.mesh)?;
        discrete_energy(&self.mesh, &frames, &self.curvature, density)
    }
}

#[derive(Clone, Debug)]
pub struct StepConfig {
    pub tau: f64,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub alpha0: f64,
    pub alpha_factor: f64,
    pub beta_upper: f64,
    pub beta_lower: f64,
    pub density: EnergyDensity,
    pub formulation: Formulation,
    pub tangent_frame: TangentFrame,
    /// Vertex normals behind the Weingarten map of each step.
    pub normal_weighting: NormalWeighting,
    pub linear_strategy: LinearStrategy,
}

impl StepConfig {
    pub fn new(tau: f64, density: EnergyDensity) -> Self {
        Self {
            tau,
            newton_tol: 1e-10,
            max_newton_iters: 50,
            alpha0: 1e6,
            alpha_factor: 5.0,
            beta_upper: 1e-4,
            beta_lower: 1e-6,
            density,
            formulation: Formulation::Improved,
            tangent_frame: TangentFrame::Reference,
            normal_weighting: NormalWeighting::default(),
            linear_strategy: LinearStrategy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("newton_tol", self.newton_tol),
            ("beta_lower", self.beta_lower),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha0 >= 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Domain(format!(
                "alpha0 must be non-negative, got {}",
                self.alpha0
            )));
        }
        if !(self.alpha_factor > 1.0 && self.alpha_factor.is_finite()) {
            return Err(Error::Domain(format!(
                "alpha factor must exceed 1, got {}",
                self.alpha_factor
            )));
        }
        if !(self.beta_lower < self.beta_upper) {
            return Err(Error::Domain("beta_lower must be below beta_upper".into()));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::Domain("max_newton_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-step measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub time: f64,
    pub newton_iters: usize,
    /// Max norm of each Newton update, in order.
    pub update_norms: Vec<f64>,
    /// Lumped L2 norm of the normal velocity on the old surface.
    pub v_l2: f64,
    pub beta_max: f64,
    /// Penalty used for this step.
    pub alpha: f64,
    pub energy: f64,
    pub area: f64,
    pub volume: f64,
}

impl StepStats {
    /// Observed exponent `p` in `|d_{l+1}| = c |d_l|^p` from the last three
    /// updates, when they are available and informative.
    pub fn newton_order(&self) -> Option<f64> {
        let u = &self.update_norms;
        if u.len() < 3 {
            return None;
        }
        let (a, b, c) = (u[u.len() - 3], u[u.len() - 2], u[u.len() - 1]);
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || a == b {
            return None;
        }
        Some((c / b).ln() / (b / a).ln())
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub iterate: NewtonIterate,
    pub iterations: usize,
    pub update_norms: Vec<f64>,
}

/// Solves one implicit step from `(X^m, 0, 0, 0, H^m)`, stopping once the max
/// norm of the update is at most `newton_tol`.
pub fn newton_solve(state: &FlowState, config: &StepConfig) -> Result<NewtonOutcome> {
    let ctx = StepContext::new(state, config)?;
    newton_solve_with(state, config, &ctx, &mut Workspace::default())
}

/// Factorizations reused across Newton iterations and steps.
#[derive(Default)]
struct Workspace {
    full: LinearSolver,
    reduced: CondensedSolver,
}

impl Workspace {
    fn update(
        &mut self,
        state: &FlowState,
        ctx: &StepContext,
        it: &NewtonIterate,
        config: &StepConfig,
    ) -> Result<Vec<f64>> {
        let reduced = config.linear_strategy == LinearStrategy::Reduced
            && config.formulation == Formulation::Improved
            && state.alpha > 0.0;
        if reduced {
            self.reduced.update(state, ctx, it, config)
        } else {
            let system = assemble_newton_system(state, ctx, it, config)?;
            self.full.solve(&system)
        }
    }
}

fn newton_solve_with(
    state: &FlowState,
    config: &StepConfig,
    ctx: &StepContext,
    work: &mut Workspace,
) -> Result<NewtonOutcome> {
    let mut it = NewtonIterate::initial(state);
    let mut norms = Vec::new();
    for l in 1..=config.max_newton_iters {
        let delta = work.update(state, ctx, &it, config)?;
        let size = it.apply_update(&delta, &ctx.layout);
        norms.push(size);
        if !size.is_finite() {
            break;
        }
        if size <= config.newton_tol {
            return Ok(NewtonOutcome {
                iterate: it,
                iterations: l,
                update_norms: norms,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: norms.len(),
        last_update: norms.last().copied().unwrap_or(f64::NAN),
    })
}

/// Adaptive penalty: grow by `C` when `max |beta_i| >= beta_upper`, shrink by
/// `C` when it is at most `beta_lower`.
pub fn adapt_alpha(alpha: f64, beta1: &[f64], beta2: &[f64], config: &StepConfig) -> f64 {
    let beta = beta_max(beta1, beta2);
    if beta >= config.beta_upper {
        alpha * config.alpha_factor
    } else if beta <= config.beta_lower {
        alpha / config.alpha_factor
    } else {
        alpha
    }
}

fn beta_max(beta1: &[f64], beta2: &[f64]) -> f64 {
    beta1.iter().chain(beta2).fold(0.0, |m, b| m.max(b.abs()))
}

/// Advances one time step.
pub fn step(state: &FlowState, config: &StepConfig) -> Result<(FlowState, StepStats)> {
    step_with(state, config, &mut Workspace::default())
}

fn step_with(
    state: &FlowState,
    config: &StepConfig,
    work: &mut Workspace,
) -> Result<(FlowState, StepStats)> {
    config.validate()?;
    let ctx = StepContext::new(state, config)?;
    let outcome = newton_solve_with(state, config, &ctx, work)?;
    let it = outcome.iterate;
    let next_index = state.step_index + 1;

    let mesh = state
        .mesh
        .with_vertices(it.positions.clone())
        .map_err(|e| Error::MeshCollapse {
            step: next_index,
            reason: e.to_string(),
        })?;
    let frames = face_frames(&mesh).map_err(|e| Error::MeshCollapse {
        step: next_index,
        reason: e.to_string(),
    })?;

    let v_l2 = inner_lumped_scalar(&state.mesh, &ctx.frames, &it.velocity, &it.velocity)?.sqrt();
    let beta = match config.formulation {
        Formulation::Improved => beta_max(&it.beta1, &it.beta2),
        Formulation::Plain => 0.0,
    };
    let alpha = match config.formulation {
        Formulation::Improved => adapt_alpha(state.alpha, &it.beta1, &it.beta2, config),
        Formulation::Plain => state.alpha,
    };
    let energy = discrete_energy(&mesh, &frames, &it.curvature, &config.density)?;
    let stats = StepStats {
        step: next_index,
        time: state.time + config.tau,
        newton_iters: outcome.iterations,
        update_norms: outcome.update_norms,
        v_l2,
        beta_max: beta,
        alpha: state.alpha,
        energy,
        area: frames.iter().map(|f| f.area).sum(),
        volume: signed_volume(&mesh),
    };
    let next = FlowState {
        mesh,
        curvature: it.curvature,
        alpha,
        time: stats.time,
        step_index: next_index,
    };
    Ok((next, stats))
}

/// Callbacks invoked by [`run`].
pub trait StepObserver {
    fn on_start(&mut self, _initial: &FlowState, _energy: f64) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, _state: &FlowState, _stats: &StepStats) -> Result<()> {
        Ok(())
    }

    /// Called with the last good state before a failed run returns.
    fn on_abort(&mut self, _last_good: &FlowState, _error: &Error) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl StepObserver for NoObserver {}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub initial_energy: f64,
    pub final_state: FlowState,
    pub stats: Vec<StepStats>,
}

impl RunSummary {
    pub fn final_energy(&self) -> f64 {
        self.stats.last().map_or(self.initial_energy, |s| s.energy)
    }

    pub fn max_newton_iters(&self) -> usize {
        self.stats.iter().map(|s| s.newton_iters).max().unwrap_or(0)
    }

    pub fn median_newton_iters(&self) -> f64 {
        let mut it: Vec<usize> = self.stats.iter().map(|s| s.newton_iters).collect();
        if it.is_empty() {
            return 0.0;
        }
        it.sort_unstable();
        let n = it.len();
        if n % 2 == 1 {
            it[n / 2] as f64
        } else {
            0.5 * (it[n / 2 - 1] + it[n / 2]) as f64
        }
    }
}

/// Number of fixed steps of size `tau` needed to go from `from` to `to`.
pub fn steps_between(from: f64, to: f64, tau: f64) -> usize {
    let n = (to - from) / tau;
    if n <= 0.0 {
        0
    } else {
        // absorb rounding so that exact multiples are not overshot
        (n - 1e-9 * n.max(1.0)).ceil() as usize
    }
}

/// Steps from `initial` until `t_end`. A failing step is reported as
/// [`Error::RunAborted`] carrying the index of the step that failed, after
/// `observer.on_abort` has seen the last good state.
pub fn run(
    initial: FlowState,
    config: &StepConfig,
    t_end: f64,
    observer: &mut dyn StepObserver,
) -> Result<RunSummary> {
    config.validate()?;
    if !(t_end >= initial.time) {
        return Err(Error::Domain(format!(
            "end time {t_end} precedes the initial time {}",
            initial.time
        )));
    }
    let initial_energy = initial.energy(&config.density)?;
    observer.on_start(&initial, initial_energy)?;
    let n = steps_between(initial.time, t_end, config.tau);
    let mut state = initial;
    let mut stats = Vec::with_capacity(n);
    let mut work = Workspace::default();
    for _ in 0..n {
        match step_with(&state, config, &mut work) {
            Ok((next, s)) => {
                observer.on_step(&next, &s)?;
                stats.push(s);
                state = next;
            }
            Err(e) => {
                observer.on_abort(&state, &e)?;
                return Err(Error::RunAborted {
                    step: state.step_index + 1,
                    source: Box::new(e),
                });
            }
        }
    }
    Ok(RunSummary {
        initial_energy,
        final_state: state,
        stats,
    })
}

#[cfg(test)]
mod tests;
