use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("mesh too large: {requested} subdivisions exceeds the cap of {cap}")]
    SizeCap { requested: u32, cap: u32 },

    #[error("torus would self-intersect: major radius {major} must exceed minor radius {minor}")]
    SelfIntersection { major: f64, minor: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate triangle {face}: area {area:e}")]
    DegenerateElement { face: usize, area: f64 },

    #[error("vertex {vertex} has a vanishing averaged normal")]
    DegenerateNormal { vertex: usize },

    #[error("shape mismatch: expected {expected} entries, got {found}")]
    Shape { expected: usize, found: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unsupported element: {message}")]
    UnsupportedElement {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(
        "averaged tangents at vertex {vertex} are nearly parallel (gram determinant {gram:e})"
    )]
    Conditioning { vertex: usize, gram: f64 },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error(
        "Newton iteration did not converge in {iterations} iterations (last update {last_update:e}); \
         try a smaller time step"
    )]
    NonConvergence { iterations: usize, last_update: f64 },

    #[error("mesh collapsed at step {step}: {reason}")]
    MeshCollapse { step: usize, reason: String },

    #[error("run aborted at step {step}: {source}")]
    RunAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
