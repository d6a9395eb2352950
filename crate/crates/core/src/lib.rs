//! Distributed differentially private PCA and orthogonal tensor decomposition
//! with correlated noise across sites.
//!
//! * [`tensor`]: symmetric matrices, cubic tensors, multilinear maps, eigensolver.
//! * [`dp`]: Gaussian-mechanism calibration, sensitivities and noise samplers.
//! * [`cape`]: noise planning, zero-sum shares and the scalar averaging protocol.
//! * [`pca`]: distributed private PCA and its baselines.
//! * [`otd`]: moments, whitening, tensor power method and the private variants.
//! * [`datagen`]: seeded synthetic data and planted models.

pub mod cape;
pub mod datagen;
pub mod dp;
pub mod error;
pub mod otd;
pub mod pca;
pub mod rng;
pub mod tensor;
pub mod transcript;

pub use error::{Error, Result};
