//! Grids, FFTs, real fields with synchronized Fourier coefficients, and
//! spectral differential operators.

mod fft;
mod field;
mod grid;
mod interp;
mod multiplier;
mod ops;

pub use fft::{dft_naive, fft_forward, fft_inverse, Fft};
pub use field::{imaginary_residue, Rank, SpectralField};
pub(crate) use field::lp_of_magnitude;
pub use grid::Grid;
pub use interp::{compose, FourierEvaluator};
pub use multiplier::{apply_multiplier, MultiplierSymbol, SymbolKind, ZeroMode};
pub use ops::{
    compressible_split, curl, deformation, divergence, gradient, jacobian, laplacian, nabla,
    partial, reassemble_from_split, tensor_divergence,
};
