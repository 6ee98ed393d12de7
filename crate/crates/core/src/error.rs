use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid edge ({i}, {j}) for p = {p}: need 1 <= j < i <= p")]
    InvalidEdge { i: usize, j: usize, p: usize },

    #[error("edge index {k} out of range [1, {m}]")]
    InvalidEdgeIndex { k: usize, m: usize },

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not symmetric (max |A - A^T| = {max_asym:e})")]
    NotSymmetric { max_asym: f64 },

    #[error("covariance is not positive semidefinite (smallest eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("L(w) + J is not positive definite; the weighted graph is likely disconnected")]
    NotPositiveDefinite { iterate: Vec<f64> },

    #[error("{what} outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cubic update for edge {edge} has no positive root (a = 0, C = {c:e} <= 0, rhs = {rhs:e} > 0)")]
    InfeasibleUpdate { edge: usize, c: f64, rhs: f64 },

    #[error("all metadata distances are zero; cannot pick a kernel width")]
    DegenerateMetadata,

    #[error("modularity is undefined for a graph with zero total weight")]
    UndefinedModularity,

    #[error("node labels do not match: missing {missing:?}, unexpected {extra:?}")]
    LabelMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures raised by the optimizer or the instance generator,
    /// as opposed to bad input.
    pub fn is_solver_error(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::InfeasibleUpdate { .. }
                | Error::Generation(_)
        )
    }
}
