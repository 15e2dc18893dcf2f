use alloc::format;
use alloc::string::String;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use super::field::{Rank, SpectralField};
use super::ops::{compressible_split, spectral_map};
use crate::error::{Error, Result};

/// What a multiplier does at `xi = 0`, where a homogeneous symbol is not
/// defined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZeroMode {
    Annihilate,
    Value(f64),
}

#[derive(Clone, Copy, Debug)]
pub enum SymbolKind {
    /// `A(D) = |D|^-1 div`, vector to scalar.
    AbsDivergence,
    /// `B(D) = |D|^-1 curl`, vector to tensor.
    AbsCurl,
    /// `|D|^s`, applied componentwise.
    AbsPower(f64),
    /// User symbol, applied componentwise. Modes with a Nyquist component
    /// are dropped so odd symbols keep fields real.
    Custom(fn(&[f64; 3]) -> Complex64),
}

#[derive(Clone, Debug)]
pub struct MultiplierSymbol {
    pub name: String,
    pub degree: f64,
    pub kind: SymbolKind,
    pub zero_mode: Option<ZeroMode>,
}

impl MultiplierSymbol {
    pub fn abs_divergence() -> Self {
        Self {
            name: "A(D)".into(),
            degree: 0.0,
            kind: SymbolKind::AbsDivergence,
            zero_mode: Some(ZeroMode::Annihilate),
        }
    }

    pub fn abs_curl() -> Self {
        Self {
            name: "B(D)".into(),
            degree: 0.0,
            kind: SymbolKind::AbsCurl,
            zero_mode: Some(ZeroMode::Annihilate),
        }
    }

    pub fn abs_power(s: f64) -> Self {
        Self {
            name: format!("|D|^{s}"),
            degree: s,
            kind: SymbolKind::AbsPower(s),
            zero_mode: Some(ZeroMode::Annihilate),
        }
    }

    /// Custom symbol; its homogeneity is checked against `degree` on a few
    /// sample frequencies.
    pub fn custom(
        name: &str,
        degree: f64,
        symbol: fn(&[f64; 3]) -> Complex64,
        zero_mode: Option<ZeroMode>,
    ) -> Result<Self> {
        let samples = [[1.0, 0.3, -0.7], [-0.4, 2.0, 0.5], [0.9, -1.1, 0.2]];
        for xi in samples {
            let twice = [2.0 * xi[0], 2.0 * xi[1], 2.0 * xi[2]];
            let (a, b) = (symbol(&xi), symbol(&twice));
            let expect = a * 2f64.powf(degree);
            if (b - expect).norm() > 1e-10 * (1.0 + expect.norm()) {
                return Err(Error::InvalidParameter(format!(
                    "symbol `{name}` is not homogeneous of degree {degree}"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            degree,
            kind: SymbolKind::Custom(symbol),
            zero_mode,
        })
    }

    pub fn input_rank(&self) -> Option<Rank> {
        match self.kind {
            SymbolKind::AbsDivergence | SymbolKind::AbsCurl => Some(Rank::Vector),
            _ => None,
        }
    }

    pub fn output_rank(&self, input: Rank) -> Rank {
        match self.kind {
            SymbolKind::AbsDivergence => Rank::Scalar,
            SymbolKind::AbsCurl => Rank::Tensor,
            _ => input,
        }
    }
}

/// Applies a Fourier multiplier to `f`.
pub fn apply_multiplier(symbol: &MultiplierSymbol, f: &SpectralField) -> Result<SpectralField> {
    let zero = symbol
        .zero_mode
        .ok_or_else(|| Error::MissingZeroMode(symbol.name.clone()))?;
    if let Some(r) = symbol.input_rank() {
        if f.rank() != r {
            return Err(Error::Mismatch(format!(
                "{} expects a {r:?} field, got {:?}",
                symbol.name,
                f.rank()
            )));
        }
    }
    let zero_value = match zero {
        ZeroMode::Annihilate => 0.0,
        ZeroMode::Value(v) => v,
    };
    let out = match symbol.kind {
        SymbolKind::AbsDivergence => {
            let (d, _) = compressible_split(f);
            d
        }
        SymbolKind::AbsCurl => {
            let (_, om) = compressible_split(f);
            om
        }
        SymbolKind::AbsPower(s) => spectral_map(f, f.rank(), |_, _, xi, a, out| {
            let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
            let m = if r == 0.0 { zero_value } else { r.powf(s) };
            for (o, v) in out.iter_mut().zip(a) {
                *o = v * m;
            }
        }),
        SymbolKind::Custom(sym) => {
            let grid = *f.grid();
            let nyq = -(grid.n() as i64) / 2;
            spectral_map(f, f.rank(), |idx, _, xi, a, out| {
                let k = grid.wavenumbers(idx);
                if k[..grid.dim()].contains(&nyq) {
                    return;
                }
                let m = if idx == 0 {
                    Complex64::new(zero_value, 0.0)
                } else {
                    sym(xi)
                };
                for (o, v) in out.iter_mut().zip(a) {
                    *o = v * m;
                }
            })
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;

    #[test]
    fn abs_power_scales_mode() {
        let g = Grid::standard(2, 16).unwrap();
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| (3.0 * x[0] + 4.0 * x[1]).cos());
        let out = apply_multiplier(&MultiplierSymbol::abs_power(2.0), &f).unwrap();
        assert!(out.max_abs_diff(&f.scale(25.0)) < 1e-11);
    }

    #[test]
    fn abs_divergence_of_gradient_mode() {
        let g = Grid::standard(2, 16).unwrap();
        // u = grad sin(x) = (cos x, 0); |D|^-1 div u = -sin x
        let u = SpectralField::from_fn(g, Rank::Vector, |x, c| if c == 0 { x[0].cos() } else { 0.0 });
        let d = apply_multiplier(&MultiplierSymbol::abs_divergence(), &u).unwrap();
        let exact = SpectralField::from_fn(g, Rank::Scalar, |x, _| -x[0].sin());
        assert!(d.max_abs_diff(&exact) < 1e-13);
        // constant field: mean annihilated
        let c = SpectralField::from_fn(g, Rank::Vector, |_, _| 1.0);
        assert!(apply_multiplier(&MultiplierSymbol::abs_divergence(), &c).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn undeclared_zero_mode_is_an_error() {
        fn sym(xi: &[f64; 3]) -> Complex64 {
            Complex64::new(xi[0] * xi[0] + xi[1] * xi[1], 0.0)
        }
        let mut s = MultiplierSymbol::custom("lap", 2.0, sym, None).unwrap();
        let g = Grid::standard(2, 8).unwrap();
        let f = SpectralField::constant(g, 1.0);
        assert!(matches!(apply_multiplier(&s, &f), Err(Error::MissingZeroMode(_))));
        s.zero_mode = Some(ZeroMode::Annihilate);
        assert!(apply_multiplier(&s, &f).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn wrong_degree_rejected() {
        fn sym(xi: &[f64; 3]) -> Complex64 {
            Complex64::new(xi[0] * xi[0], 0.0)
        }
        assert!(MultiplierSymbol::custom("bad", 1.0, sym, Some(ZeroMode::Annihilate)).is_err());
    }
}
