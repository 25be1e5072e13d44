//! Numerical laboratory for stochastic kinetic equations on 2-D phase space
//! (x, v): spectral kinetic semigroup, anisotropic Littlewood-Paley analysis
//! with weights (3, 1), velocity-time white noise, mild-Euler SKE solvers,
//! and the degenerate nonlinear filtering pipeline.
//!
//! Everything is generic over the floating scalar (f32/f64); the f64
//! aliases below are what the binaries and tests use.

pub mod besov;
pub mod error;
pub mod fields;
pub mod filtering;
pub mod grid;
pub mod noise;
pub mod scalar;
pub mod semigroup;
pub mod solver;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// f64 phase grid.
pub type Grid64 = grid::PhaseGrid<f64>;
/// f64 real field.
pub type Field64 = grid::Field<f64>;
/// f64 spectral coefficients.
pub type SpectralField64 = spectral::SpectralField<f64>;
/// f64 FFT engine.
pub type Engine64 = spectral::SpectralEngine<f64>;
/// f64 dyadic partition.
pub type Partition64 = besov::DyadicPartition<f64>;
/// f64 Wiener increments.
pub type Increments64 = noise::WienerIncrements<f64>;
/// f64 trajectory.
pub type Trajectory64 = solver::Trajectory<f64>;
