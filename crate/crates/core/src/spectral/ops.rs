use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use super::field::{Rank, SpectralField};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Applies a per-mode linear map to the coefficients of `f`.
///
/// The closure gets the mode index, the odd-safe frequency (Nyquist
/// components zeroed), the full frequency, the input components and the
/// output slot.
pub(crate) fn spectral_map(
    f: &SpectralField,
    out_rank: Rank,
    map: impl Fn(usize, &[f64; 3], &[f64; 3], &[Complex64], &mut [Complex64]),
) -> SpectralField {
    let grid = *f.grid();
    let len = grid.len();
    let cin = f.components();
    let cout = out_rank.components(grid.dim());
    let mut coeffs = vec![ZERO; len * cout];
    let mut inbuf = [ZERO; 9];
    let mut outbuf = [ZERO; 9];
    for idx in 0..len {
        for c in 0..cin {
            inbuf[c] = f.coeffs()[c * len + idx];
        }
        outbuf[..cout].fill(ZERO);
        map(idx, &grid.xi_odd(idx), &grid.xi(idx), &inbuf[..cin], &mut outbuf[..cout]);
        for c in 0..cout {
            coeffs[c * len + idx] = outbuf[c];
        }
    }
    SpectralField::from_coefficients(grid, out_rank, coeffs)
}

/// `d f / d x_axis`, componentwise.
pub fn partial(f: &SpectralField, axis: usize) -> SpectralField {
    assert!(axis < f.dim());
    spectral_map(f, f.rank(), |_, xo, _, a, out| {
        for (o, v) in out.iter_mut().zip(a) {
            *o = I * xo[axis] * v;
        }
    })
}

/// Gradient of a scalar field.
pub fn gradient(f: &SpectralField) -> SpectralField {
    assert_eq!(f.rank(), Rank::Scalar, "gradient expects a scalar field");
    let d = f.dim();
    spectral_map(f, Rank::Vector, |_, xo, _, a, out| {
        for j in 0..d {
            out[j] = I * xo[j] * a[0];
        }
    })
}

/// `(Du)_ij = d_j u^i`.
pub fn jacobian(u: &SpectralField) -> SpectralField {
    assert_eq!(u.rank(), Rank::Vector, "jacobian expects a vector field");
    let d = u.dim();
    spectral_map(u, Rank::Tensor, |_, xo, _, a, out| {
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = I * xo[j] * a[i];
            }
        }
    })
}

/// `(nabla u)_ij = d_i u^j`, the transpose of [`jacobian`].
pub fn nabla(u: &SpectralField) -> SpectralField {
    assert_eq!(u.rank(), Rank::Vector, "nabla expects a vector field");
    let d = u.dim();
    spectral_map(u, Rank::Tensor, |_, xo, _, a, out| {
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = I * xo[i] * a[j];
            }
        }
    })
}

/// `D(u) = (Du + nabla u) / 2`.
pub fn deformation(u: &SpectralField) -> SpectralField {
    assert_eq!(u.rank(), Rank::Vector, "deformation expects a vector field");
    let d = u.dim();
    spectral_map(u, Rank::Tensor, |_, xo, _, a, out| {
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = I * 0.5 * (xo[j] * a[i] + xo[i] * a[j]);
            }
        }
    })
}

/// Divergence of a vector field.
pub fn divergence(u: &SpectralField) -> SpectralField {
    assert_eq!(u.rank(), Rank::Vector, "divergence expects a vector field");
    let d = u.dim();
    spectral_map(u, Rank::Scalar, |_, xo, _, a, out| {
        out[0] = (0..d).map(|j| I * xo[j] * a[j]).sum();
    })
}

/// Matrix divergence `(div F)^j = sum_i d_i F_ij`.
pub fn tensor_divergence(f: &SpectralField) -> SpectralField {
    assert_eq!(f.rank(), Rank::Tensor, "tensor_divergence expects a tensor field");
    let d = f.dim();
    spectral_map(f, Rank::Vector, |_, xo, _, a, out| {
        for j in 0..d {
            out[j] = (0..d).map(|i| I * xo[i] * a[i * d + j]).sum();
        }
    })
}

/// `(curl u)_ij = d_i u^j - d_j u^i`.
pub fn curl(u: &SpectralField) -> SpectralField {
    assert_eq!(u.rank(), Rank::Vector, "curl expects a vector field");
    let d = u.dim();
    spectral_map(u, Rank::Tensor, |_, xo, _, a, out| {
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = I * (xo[i] * a[j] - xo[j] * a[i]);
            }
        }
    })
}

/// Componentwise Laplacian.
pub fn laplacian(f: &SpectralField) -> SpectralField {
    spectral_map(f, f.rank(), |_, _, xi, a, out| {
        let k2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        for (o, v) in out.iter_mut().zip(a) {
            *o = -k2 * v;
        }
    })
}

fn unit_odd(xo: &[f64; 3], xi: &[f64; 3]) -> Option<[f64; 3]> {
    let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
    if r == 0.0 {
        None
    } else {
        Some([xo[0] / r, xo[1] / r, xo[2] / r])
    }
}

/// Splits `u` into `d = |D|^-1 div u` and `Omega = |D|^-1 curl u`.
/// The mean mode is annihilated.
pub fn compressible_split(u: &SpectralField) -> (SpectralField, SpectralField) {
    assert_eq!(u.rank(), Rank::Vector, "compressible_split expects a vector field");
    let d = u.dim();
    let div = spectral_map(u, Rank::Scalar, |_, xo, xi, a, out| {
        if let Some(e) = unit_odd(xo, xi) {
            out[0] = (0..d).map(|j| I * e[j] * a[j]).sum();
        }
    });
    let rot = spectral_map(u, Rank::Tensor, |_, xo, xi, a, out| {
        if let Some(e) = unit_odd(xo, xi) {
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = I * (e[i] * a[j] - e[j] * a[i]);
                }
            }
        }
    });
    (div, rot)
}

/// Inverse of [`compressible_split`] on mean-free fields:
/// `u_j = -i sum_i e_i Omega_ij - i e_j d` with `e = xi / |xi|`.
pub fn reassemble_from_split(div: &SpectralField, rot: &SpectralField) -> SpectralField {
    assert_eq!(div.rank(), Rank::Scalar);
    assert_eq!(rot.rank(), Rank::Tensor);
    let grid = *div.grid();
    let d = grid.dim();
    let len = grid.len();
    let mut coeffs: Vec<Complex64> = vec![ZERO; len * d];
    for idx in 0..len {
        let (xo, xi) = (grid.xi_odd(idx), grid.xi(idx));
        let Some(e) = unit_odd(&xo, &xi) else { continue };
        let dh = div.coeffs()[idx];
        for j in 0..d {
            let mut acc = -I * e[j] * dh;
            for i in 0..d {
                acc -= I * e[i] * rot.coeffs()[(i * d + j) * len + idx];
            }
            coeffs[j * len + idx] = acc;
        }
    }
    SpectralField::from_coefficients(grid, Rank::Vector, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;

    fn g2() -> Grid {
        Grid::standard(2, 16).unwrap()
    }

    #[test]
    fn gradient_of_mode() {
        let g = g2();
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| (2.0 * x[0] + 3.0 * x[1]).sin());
        let gr = gradient(&f);
        let exact = SpectralField::from_fn(g, Rank::Vector, |x, c| {
            [2.0, 3.0][c] * (2.0 * x[0] + 3.0 * x[1]).cos()
        });
        assert!(gr.max_abs_diff(&exact) < 1e-12);
    }

    #[test]
    fn jacobian_conventions() {
        let g = g2();
        // u = (sin y, 0): (Du)_12 = d_2 u^1 = cos y
        let u = SpectralField::from_fn(g, Rank::Vector, |x, c| if c == 0 { x[1].sin() } else { 0.0 });
        let du = jacobian(&u);
        let cos = SpectralField::from_fn(g, Rank::Scalar, |x, _| x[1].cos());
        assert!(du.component_field(1).max_abs_diff(&cos) < 1e-13);
        assert!(du.component_field(2).max_abs() < 1e-13);
        assert!(nabla(&u).max_abs_diff(&du.transpose()) < 1e-13);
        let c = curl(&u);
        // (curl u)_21 = d_2 u^1 - d_1 u^2 = cos y
        assert!(c.component_field(2).max_abs_diff(&cos) < 1e-13);
    }

    #[test]
    fn divergence_of_identity_field() {
        let g = g2();
        let f = SpectralField::from_fn(g, Rank::Tensor, |x, c| if c % 3 == 0 { x[0].sin() } else { 0.0 });
        let dv = tensor_divergence(&f);
        assert!(dv.component_field(0).max_abs_diff(&SpectralField::from_fn(g, Rank::Scalar, |x, _| x[0].cos())) < 1e-13);
        assert!(dv.component_field(1).max_abs() < 1e-13);
    }

    #[test]
    fn split_roundtrip() {
        let g = g2();
        let u = SpectralField::from_fn(g, Rank::Vector, |x, c| {
            if c == 0 { (x[0] + 2.0 * x[1]).sin() } else { (3.0 * x[0]).cos() * x[1].sin() }
        });
        let (d, om) = compressible_split(&u);
        let back = reassemble_from_split(&d, &om);
        assert!(back.max_abs_diff(&u) < 1e-13);
    }

    #[test]
    fn laplacian_of_mode() {
        let g = Grid::standard(3, 8).unwrap();
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| (x[0] + x[1] - 2.0 * x[2]).cos());
        assert!(laplacian(&f).max_abs_diff(&f.scale(-6.0)) < 1e-12);
    }
}
