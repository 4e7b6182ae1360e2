//! Numerical laboratory for the fractional Laplacian with large
//! incompressible drift on bounded planar domains.
//!
//! The crate discretizes L_A = Δ^{α/2} + A·b·∇ with zero exterior
//! condition, computes principal eigenpairs across drift amplitudes,
//! relates the large-A limit of the eigenvalue to the variational
//! minimum over first integrals of the flow, sums the perturbation
//! series of the drifted heat kernel, and cross-checks everything
//! against a stochastic (Feynman-Kac) estimator.

pub mod config;
pub mod drift;
pub mod error;
pub mod first_integrals;
pub mod fractional;
pub mod geometry;
pub mod kernel;
pub mod mc;
pub mod output;
pub mod spectral;
pub mod util;
