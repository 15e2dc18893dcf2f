//! Seeded random band-limited fields.
//!
//! Modes are drawn in a fixed enumeration over `[-K, K]^dim`, so a given
//! seed produces the same trigonometric polynomial on every grid that
//! resolves it. This is what makes fitted constants comparable across
//! resolutions.

use alloc::format;
use alloc::vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Grid, Rank, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFieldSpec {
    /// Largest `|k_i|` drawn.
    pub max_wavenumber: i64,
    /// Amplitudes decay like `|k|^-slope`.
    pub slope: f64,
    pub amplitude: f64,
}

impl Default for RandomFieldSpec {
    fn default() -> Self {
        Self {
            max_wavenumber: 6,
            slope: 1.0,
            amplitude: 1.0,
        }
    }
}

/// SplitMix64 mix of a base seed and a stream index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean-free real random field of the given rank.
pub fn random_field(grid: Grid, rank: Rank, spec: &RandomFieldSpec, seed: u64) -> Result<SpectralField> {
    let kmax = spec.max_wavenumber;
    if kmax < 1 || kmax > grid.dealias_cutoff() {
        return Err(Error::InvalidParameter(format!(
            "max wavenumber {kmax} outside 1..={}",
            grid.dealias_cutoff()
        )));
    }
    let d = grid.dim();
    let comps = rank.components(d);
    let len = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); len * comps];
    let side = (2 * kmax + 1) as usize;
    let total = side.pow(d as u32);
    let mut k = [0i64; 3];
    for lin in 0..total {
        let mut rest = lin;
        for axis in (0..d).rev() {
            k[axis] = (rest % side) as i64 - kmax;
            rest /= side;
        }
        // keep one representative of each +-k pair
        let lead = k[..d].iter().copied().find(|&v| v != 0);
        if lead.is_none_or(|v| v < 0) {
            continue;
        }
        let r = k[..d].iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        let amp = spec.amplitude * r.powf(-spec.slope);
        let neg = [-k[0], -k[1], -k[2]];
        let ip = grid.mode_index(&k).expect("mode within band");
        let im = grid.mode_index(&neg).expect("mode within band");
        for c in 0..comps {
            let re: f64 = StandardNormal.sample(&mut rng);
            let imv: f64 = StandardNormal.sample(&mut rng);
            let z = Complex64::new(re, imv) * (amp * core::f64::consts::FRAC_1_SQRT_2);
            coeffs[c * len + ip] = z;
            coeffs[c * len + im] = z.conj();
        }
    }
    Ok(SpectralField::from_coefficients(grid, rank, coeffs))
}
