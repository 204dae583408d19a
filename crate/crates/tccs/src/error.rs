//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Error`]. The variants map onto
//! the process exit codes used by the command-line tool: parameter and shape
//! problems exit with 2, file problems with 3, numerical failures with 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch between operands, e.g. a t-product with
    /// incompatible inner sizes or tensors of different shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A numerical guard tripped: non-finite values, division by a zero
    /// denominator, or excessive imaginary residue after an inverse DFT.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The per-slice SVD backend did not converge.
    #[error("SVD did not converge on frontal slice {slice}")]
    SvdConvergence { slice: usize },

    /// The iterative solver diverged. The step sizes are reported so the
    /// caller can retry with smaller ones.
    #[error(
        "solver diverged (eta_r={eta_r}, eta_c={eta_c}, eta_u={eta_u}): \
         residual exceeded 10x its initial value for 10 consecutive iterations"
    )]
    Divergence { eta_r: f64, eta_c: f64, eta_u: f64 },

    /// A sub-solver failed while completing one slab of a cross sample.
    #[error("sub-solver failed on slab {slab}: {source}")]
    SubSolver {
        slab: char,
        #[source]
        source: Box<Error>,
    },

    /// Malformed on-disk data. `offset` is the byte position where parsing
    /// stopped making sense.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 parameter, 3 I/O, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_) | Error::Parameter(_) => 2,
            Error::Parse { .. } | Error::Io(_) => 3,
            Error::Numerical(_) | Error::SvdConvergence { .. } | Error::Divergence { .. } => 4,
            Error::SubSolver { source, .. } => source.exit_code(),
        }
    }
}
