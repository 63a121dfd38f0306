//! Numerically exact dynamics of a two-level system coupled to a structured
//! bosonic environment.
//!
//! The crate provides:
//!
//! * [`spectral`]: spectral densities (underdamped, common-environment
//!   mapped, scaled), thermal bath correlation functions and the discretized
//!   influence-functional coefficients.
//! * [`tensor`]: dense tensors, truncated SVD and matrix product state
//!   compression.
//! * [`model`]: dimer and spin-boson parameters, the dimer to spin mapping,
//!   free propagators and initial states.
//! * [`tempo`]: the time-evolving matrix product operator propagator.
//! * [`rc`]: a reaction-coordinate master equation solver used as an
//!   independent benchmark.
//! * [`bath`]: reconstruction of bath mode expectations and of the real-space
//!   displacement field from a system trajectory.
//!
//! Scalar-generic parts of the library (quadrature, spectral densities,
//! system models and bath reconstruction) are parameterized by [`Real`];
//! the tensor-network and master-equation engines run in `f64`. Type aliases
//! for the `f64` instantiations are exported at the crate root.

pub mod bath;
pub mod error;
pub mod model;
pub mod quadrature;
pub mod rc;
pub mod spectral;
pub mod tempo;
pub mod tensor;
pub mod trajectory;

mod real;

pub use error::{Error, Result};
pub use real::Real;

pub use num_complex::Complex64 as C64;

pub type UnderdampedParams = spectral::UnderdampedParams<f64>;
pub type SpectralDensity = spectral::SpectralDensity<f64>;
pub type BathSpec = spectral::BathSpec<f64>;
pub type InfluenceCoefficients = spectral::InfluenceCoefficients<f64>;
pub type QuadratureOptions = quadrature::QuadratureOptions<f64>;
pub type DimerParams = model::DimerParams<f64>;
pub type SpinBosonParams = model::SpinBosonParams<f64>;
pub type SystemState = model::SystemState<f64>;
pub type SigmaZHistory = bath::SigmaZHistory<f64>;
pub type DisplacementField = bath::DisplacementField<f64>;

pub use trajectory::Trajectory;
