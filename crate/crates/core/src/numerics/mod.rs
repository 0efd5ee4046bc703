//! Dense row-major matrices, a symmetric eigensolver, and PCA projections
//! used to build Euclidean activation spaces.

mod eigen;
mod matrix;
mod pca;

pub use eigen::covariance_eigs;
pub use matrix::{dot, sq_dist, Matrix};
pub use pca::{pca_fit, pca_transform, ActivationSpace, DEFAULT_MAX_COMPONENTS};
