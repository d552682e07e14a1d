//! Transmission diffusions generated by divergence-form operators
//! `∇·(a∇)` whose coefficient jumps across a smooth interface `Γ`.
//!
//! The crate simulates the associated diffusion (bulk Euler steps plus an
//! exact skew step inside a layer around `Γ`), estimates Feynman-Kac
//! expectations and local times, and provides finite-volume and discrete
//! spectral references to check them against.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

pub mod coeffs;
pub mod error;
pub mod feynman_kac;
pub mod geometry;
pub mod linalg;
pub mod pde;
pub mod quad;
pub mod scalar;
pub mod sde;
pub mod skew1d;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type InterfaceGeometry<const D: usize> = geometry::InterfaceGeometry<f64, D>;
pub type CoefficientField<const D: usize> = coeffs::CoefficientField<f64, D>;
pub type Skew1DModel = skew1d::Skew1DModel<f64>;
pub type SimConfig = sde::SimConfig<f64>;
pub type Trajectory<const D: usize> = sde::Trajectory<f64, D>;
pub type DiscreteOperator = pde::DiscreteOperator<f64>;
pub type Grid1D = pde::Grid1D<f64>;
pub type MCEstimate = feynman_kac::MCEstimate;
