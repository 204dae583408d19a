//! Tensor completion toolkit built on the tensor-tensor product (t-product).
//!
//! The crate provides the third-order tensor algebra (t-product, t-SVD,
//! tensor pseudoinverse), cross-concentrated sampling plans, exact and
//! iterative t-CUR completion solvers, quality metrics, sample-complexity
//! bound calculators, and a reproducible experiment harness.

pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod sampling;
pub mod solvers;
pub mod spectral;
pub mod tcur;
pub mod tensor;
pub mod theory;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;
