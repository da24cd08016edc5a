use thiserror::Error;

/// Errors raised while building grids, assembling operators or advancing a solver.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("velocity node {index} (v = {value}) has no mirrored partner")]
    AsymmetricGrid { index: usize, value: f64 },

    #[error("kernel `{name}` is invalid: {reason}")]
    InvalidKernel { name: &'static str, reason: String },

    #[error("CFL condition violated for {species}: tau = {tau:.4} > {limit}")]
    Cfl {
        species: &'static str,
        tau: f64,
        limit: f64,
    },

    #[error("singular linear system in {context}")]
    Singular { context: String },

    #[error("collocation node {node} (z = {z}) failed: {source}")]
    Collocation {
        node: usize,
        z: f64,
        #[source]
        source: Box<SolverError>,
    },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, SolverError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SolverError {
    SolverError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
