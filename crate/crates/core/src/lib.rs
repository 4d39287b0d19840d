//! Numerical core for the free multiplicative convolution of spectral measures.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It covers:
//!
//! - [`measures`]: atomic and gridded spectral measures on `(0, ∞)` with their
//!   Stieltjes, M- and L-transforms;
//! - [`subordination`]: the subordination system for `μ_A ⊠ μ_B`, solved by a damped
//!   fixed point followed by Newton, with η-continuation and a Kantorovich certificate;
//! - [`convolution`]: density, edges and quantiles of `μ_A ⊠ μ_B`;
//! - [`spiked`]: outlier locations, fluctuation scales and eigenvector overlaps for
//!   finite-rank multiplicative spikes.
//!
//! The `std` feature only switches the float backend from `libm` to the platform
//! implementation.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod convolution;
pub mod error;
pub mod measures;
pub mod spiked;
pub mod subordination;

mod roots;

pub use num_complex::Complex64;

pub use convolution::{ConvolutionResult, Edge, QuantileTable};
pub use error::{Error, Result};
pub use measures::{MeasureKind, SpectralMeasure, TransformValue};
pub use spiked::{OutlierPrediction, OverlapPrediction, Side, SpikeLabel, SpikedModel};
pub use subordination::{
    KantorovichCertificate, SolverConfig, StabilityReport, SubordinationSolution,
};
