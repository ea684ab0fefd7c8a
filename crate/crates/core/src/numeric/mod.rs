//! Linear-algebra kernels with hand-derived gradients.
//!
//! Both kernels work on `d x d` Gram matrices (`d` = 2 or 3), so the
//! singular values reported are square roots of Gram eigenvalues.

mod eigen;
mod homogeneous;
mod jacobian;
mod linear;

pub use eigen::{condition_number, symmetric_eigen, weighted_condition_number, weighted_gram};
pub use homogeneous::{weighted_homogeneous_lsq, weighted_homogeneous_lsq_grad, HomogeneousLsqSolution};
pub use jacobian::{GradientBundle, Jacobian};
pub use linear::{weighted_linear_lsq, weighted_linear_lsq_grad, LinearLsqGradient, LinearLsqSolution};

pub(crate) use homogeneous::check_weights;

/// Rows with weight at or below this are not counted as effective.
pub const EFFECTIVE_WEIGHT: f64 = 1e-12;
/// Lower bound on eigenvalue gaps in the eigenvector derivative.
pub const SVD_GRADIENT_CLAMP: f64 = 1e-10;
/// Default ridge weight for the linear solve.
pub const DEFAULT_RIDGE: f64 = 1e-8;
/// Condition number above which a linear solve is trivialized.
pub const TRIVIALIZE_CONDITION: f64 = 1e5;
/// Components at or below this magnitude are treated as zero when fixing signs.
pub const SIGN_TOLERANCE: f64 = 1e-12;
