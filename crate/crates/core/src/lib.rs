//! Guaranteed two-sided error bounds for the curl-curl magnetostatic problem.
//!
//! The crate discretizes `curl μ⁻¹ curl E = F`, `div εE = 0`, `n × E = G` on
//! axis-aligned voxel domains with a staggered (lowest-order de Rham) complex
//! and evaluates functional error majorants and minorants for arbitrary
//! conforming approximations. Because the complex is exact, every bound holds
//! as a strict inequality between computed numbers and can be property
//! tested.
//!
//! Module map:
//! - [`complex`]: grid layout, boundary flags and incidence operators
//! - [`linalg`]: CSR matrices, projected conjugate gradients, inverse
//!   iteration and dense reference solvers
//! - [`problem`]: materials, Hodge masses, field sampling and file IO
//! - [`helmholtz`]: Dirichlet fields, the projection π and load projection
//! - [`spectral`]: the discrete Poincaré–Friedrichs constant
//! - [`solver`]: primal solve and weak-curl consistency
//! - [`estimator`]: residual functional, majorants, minorants, reports
//! - [`cli`]: JSON-configured command-line driver

pub mod cli;
pub mod complex;
pub mod estimator;
pub mod helmholtz;
pub mod linalg;
pub mod problem;
pub mod solver;
pub mod spectral;

#[cfg(test)]
pub(crate) mod testutil;

pub use complex::{Cochain, Degree, DiffOps, DofLayout, GridComplex, GridSpec};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cochain degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: u8, found: u8 },
    #[error("{what}: expected {expected} values, found {found}")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("test field is not tangential-zero on the boundary")]
    NotTangentialZero,
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("{what} did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged {
        what: String,
        iterations: usize,
        residual: f64,
    },
    #[error("topology undecided: accepted eigenvalue {accepted:e} too close to rejected eigenvalue {rejected:e}")]
    TopologyUndecided { accepted: f64, rejected: f64 },
    #[error("majorant variant {variant} does not fit the approximation: {reason}")]
    VariantMismatch { variant: String, reason: String },
    #[error("size limit exceeded: {what} has {size} unknowns, limit is {limit}")]
    SizeLimit {
        what: String,
        size: usize,
        limit: usize,
    },
    #[error("{0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for failures of an iterative method rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::TopologyUndecided { .. }
                | Error::Singular(_)
                | Error::NotPositiveDefinite(_)
        )
    }
}
