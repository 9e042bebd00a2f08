use thiserror::Error;

/// Everything that can go wrong in the geometric and numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape parameter: {0}")]
    InvalidShape(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("mesh is not closed: edge ({0}, {1}) borders {2} triangle(s)")]
    NotClosed(usize, usize, usize),

    #[error("mesh is not orientable: edge ({0}, {1}) is traversed twice in the same direction")]
    NotOrientable(usize, usize),

    #[error("field has {got} values but the surface has {expected} vertices")]
    FieldLength { expected: usize, got: usize },

    #[error("compatibility violation on component {component}: weighted mean {mean:.3e} exceeds tolerance {tol:.3e}")]
    Compatibility {
        component: usize,
        mean: f64,
        tol: f64,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("height {value:.3e} at vertex {vertex} exceeds the tubular bound {bound:.3e}")]
    HeightTooLarge {
        vertex: usize,
        value: f64,
        bound: f64,
    },

    #[error("graph surface folds over at {} vertex/vertices (first: {:?})", .0.len(), .0.first())]
    FoldOver(Vec<usize>),

    #[error("target is not a normal graph over the reference at vertex {vertex}: {reason}")]
    NotAGraph { vertex: usize, reason: &'static str },

    #[error("step did not converge: {0}")]
    NotConverged(String),

    #[error("remeshing failed: {0}")]
    Remesh(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
