//! Isotropic XY chain in a critically decaying random field, simulated
//! through its exact free-fermion reduction.
//!
//! The many-body Heisenberg dynamics of the chain reduces to the one-body
//! propagator `exp(-2itH_n)` of a half-line discrete Schrödinger operator
//! `H_n` with potential `λ V_j / j^{1/2}`. The modules follow that reduction:
//!
//! - [`disorder`]: the random model and the tridiagonal operator `H_n`.
//! - [`spectral`]: eigendecomposition, propagator amplitudes, eigenfunction
//!   correlators.
//! - [`quasifree`]: commutator bounds and witnesses, position moments,
//!   transport exponents, number-operator transport.
//! - [`ensemble`]: reproducible Monte Carlo disorder averages and fits.
//! - [`oracle`]: brute-force `2^n`-dimensional simulator used to validate the
//!   reduction at small `n`.
//! - [`experiment`]: config files, experiment runners, CSV/JSON outputs.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod disorder;
pub mod ensemble;
pub mod experiment;
pub mod oracle;
pub mod quasifree;
pub mod scalar;
pub mod spectral;
pub mod stats;

pub use scalar::Real;

pub use disorder::{DisorderConfig, DisorderError, Distribution};
pub use ensemble::{DecayFit, EnsembleError, EnsembleRunner, EnsembleStats};
pub use quasifree::{ProductState, QuasifreeError};
pub use spectral::SpectralError;

pub type OneBodyOperator64 = disorder::OneBodyOperator<f64>;
pub type OneBodyOperator32 = disorder::OneBodyOperator<f32>;
pub type SpectralDecomposition64 = spectral::SpectralDecomposition<f64>;
pub type SpectralDecomposition32 = spectral::SpectralDecomposition<f32>;
pub type TimeSeries64 = quasifree::TimeSeries<f64>;
pub type TimeSeries32 = quasifree::TimeSeries<f32>;
pub type Complex64 = num_complex::Complex<f64>;
