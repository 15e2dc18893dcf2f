//! Pseudo-spectral Lagrangian solver for the barotropic compressible
//! Navier-Stokes equations on the periodic torus, together with numerical
//! checks of the harmonic-analysis estimates behind its contraction argument.
//!
//! Fields live on a uniform grid of `(0, L)^n`, `n` in 1..=3. Physical values
//! are authoritative and the Fourier coefficients are kept in sync. Nonlinear
//! products are dealiased with the 2/3 rule.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bony;
pub mod error;
pub mod eulerian;
pub mod fixed_point;
pub mod lagrangian;
pub mod lame;
pub mod littlewood_paley;
pub mod quadrature;
pub mod random;
pub mod report;
pub mod spectral;

pub use littlewood_paley::{BesovParams, Partition, TimeSeriesField};

pub use error::{Error, Result};

pub use spectral::{Grid, Rank, SpectralField};
