//! Flow maps of Lagrangian velocity fields and the algebra of `DX`, its
//! inverse `A`, its adjugate and its Jacobian `J`, plus the twisted
//! operators `D_A` and `div_A`.

use alloc::string::ToString;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::littlewood_paley::{BesovParams, LittlewoodPaley, Partition, TimeSeriesField};
use crate::quadrature::{cumulative_trapezoid, loglog_slope};
use crate::report::InequalityReport;
use crate::spectral::{
    compose, deformation, divergence, gradient, jacobian, nabla, tensor_divergence, Rank, SpectralField,
};

/// Small dense matrices stored row-major with dimension `d <= 3`.
pub mod mat {
    pub fn det(d: usize, m: &[f64]) -> f64 {
        match d {
            1 => m[0],
            2 => m[0] * m[3] - m[1] * m[2],
            _ => {
                m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                    + m[2] * (m[3] * m[7] - m[4] * m[6])
            }
        }
    }

    /// Transposed cofactor matrix, so that `M adj(M) = det(M) Id`.
    pub fn adjugate(d: usize, m: &[f64], out: &mut [f64]) {
        match d {
            1 => out[0] = 1.0,
            2 => {
                out[0] = m[3];
                out[1] = -m[1];
                out[2] = -m[2];
                out[3] = m[0];
            }
            _ => {
                out[0] = m[4] * m[8] - m[5] * m[7];
                out[1] = m[2] * m[7] - m[1] * m[8];
                out[2] = m[1] * m[5] - m[2] * m[4];
                out[3] = m[5] * m[6] - m[3] * m[8];
                out[4] = m[0] * m[8] - m[2] * m[6];
                out[5] = m[2] * m[3] - m[0] * m[5];
                out[6] = m[3] * m[7] - m[4] * m[6];
                out[7] = m[1] * m[6] - m[0] * m[7];
                out[8] = m[0] * m[4] - m[1] * m[3];
            }
        }
    }

    pub fn inverse(d: usize, m: &[f64], out: &mut [f64]) {
        adjugate(d, m, out);
        let det = det(d, m);
        for v in out[..d * d].iter_mut() {
            *v /= det;
        }
    }

    /// Largest absolute row sum.
    pub fn norm_inf(d: usize, m: &[f64]) -> f64 {
        (0..d)
            .map(|i| (0..d).map(|j| m[i * d + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Flow `X(t, y) = y + int_0^t v(tau, y) dtau` and its derived fields at
/// the sample times of the velocity.
#[derive(Clone, Debug)]
pub struct FlowMap {
    times: Vec<f64>,
    displacement: Vec<SpectralField>,
    strain: Vec<SpectralField>,
    jacobian: Vec<SpectralField>,
    inverse: Vec<SpectralField>,
    adjugate: Vec<SpectralField>,
}

/// Borrowed view of a [`FlowMap`] at one sample time.
#[derive(Clone, Copy)]
pub struct FlowSnapshot<'a> {
    pub time: f64,
    /// `X - y`.
    pub displacement: &'a SpectralField,
    /// `C = DX - Id`.
    pub strain: &'a SpectralField,
    /// `J = det DX`.
    pub jacobian: &'a SpectralField,
    /// `A = DX^-1`.
    pub inverse: &'a SpectralField,
    /// `adj(DX) = J A`.
    pub adjugate: &'a SpectralField,
}

impl FlowSnapshot<'_> {
    pub fn dx(&self) -> SpectralField {
        self.strain.add(&SpectralField::identity(*self.strain.grid()))
    }
}

impl FlowMap {
    /// Builds the derived fields from displacements `X - y`. Fails when `J`
    /// is not positive at some node.
    pub fn from_displacements(times: Vec<f64>, displacement: Vec<SpectralField>) -> Result<Self> {
        let mut strain = Vec::with_capacity(displacement.len());
        let mut jac = Vec::with_capacity(displacement.len());
        let mut inv = Vec::with_capacity(displacement.len());
        let mut adj = Vec::with_capacity(displacement.len());
        for (k, disp) in displacement.iter().enumerate() {
            if disp.rank() != Rank::Vector {
                return Err(Error::Mismatch("displacement must be a vector field".into()));
            }
            let c = jacobian(disp);
            let dx = c.add(&SpectralField::identity(*c.grid()));
            let j = dx.map_matrix_scalar(mat::det);
            if let Some((node, &value)) = j
                .values()
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v > 0.0))
            {
                return Err(Error::FlowDegenerate {
                    node,
                    sample: k,
                    jacobian: value,
                });
            }
            inv.push(dx.map_matrix(mat::inverse));
            adj.push(dx.map_matrix(mat::adjugate));
            strain.push(c);
            jac.push(j);
        }
        Ok(Self {
            times,
            displacement,
            strain,
            jacobian: jac,
            inverse: inv,
            adjugate: adj,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshot(&self, k: usize) -> FlowSnapshot<'_> {
        FlowSnapshot {
            time: self.times[k],
            displacement: &self.displacement[k],
            strain: &self.strain[k],
            jacobian: &self.jacobian[k],
            inverse: &self.inverse[k],
            adjugate: &self.adjugate[k],
        }
    }

    pub fn displacements(&self) -> &[SpectralField] {
        &self.displacement
    }

    pub fn jacobians(&self) -> &[SpectralField] {
        &self.jacobian
    }
}

/// Integrates the flow of `v` with the trapezoid rule at its sample times.
pub fn integrate_flow(v: &TimeSeriesField) -> Result<FlowMap> {
    if v.rank() != Rank::Vector {
        return Err(Error::Mismatch("flow of a non-vector field".into()));
    }
    let h = v.dt();
    let mut disp = Vec::with_capacity(v.len());
    let mut acc = SpectralField::zeros(*v.grid(), Rank::Vector);
    for k in 0..v.len() {
        if k > 0 {
            acc = acc.axpy(0.5 * h, v.sample(k - 1)).axpy(0.5 * h, v.sample(k));
        }
        disp.push(acc.clone());
    }
    FlowMap::from_displacements(v.times().to_vec(), disp)
}

/// `J(t) = 1 + int_0^t Dv : adj(DX) dtau` by the trapezoid rule. Agrees with
/// `det DX` up to the time-quadrature error.
pub fn jacobian_integral_form(v: &TimeSeriesField, flow: &FlowMap) -> Vec<SpectralField> {
    let grid = *v.grid();
    let integrand: Vec<SpectralField> = (0..v.len())
        .map(|k| jacobian(v.sample(k)).contract(flow.snapshot(k).adjugate))
        .collect();
    let h = v.dt();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = SpectralField::constant(grid, 1.0);
    for k in 0..v.len() {
        if k > 0 {
            acc = acc.axpy(0.5 * h, &integrand[k - 1]).axpy(0.5 * h, &integrand[k]);
        }
        out.push(acc.clone());
    }
    out
}

/// `Id - adj(Id + C) = (C - tr C Id) + P2(C)`.
pub struct AdjugateExpansion {
    pub linear: SpectralField,
    /// Vanishes for `n <= 2`; equals `-adj(C)` for `n = 3`.
    pub quadratic: SpectralField,
    pub adjugate: SpectralField,
}

pub fn adjugate_expansion(c: &SpectralField) -> AdjugateExpansion {
    assert_eq!(c.rank(), Rank::Tensor);
    let grid = *c.grid();
    let id = SpectralField::identity(grid);
    let linear = c.sub(&c.trace().times_identity());
    let quadratic = if grid.dim() == 3 {
        // Cayley-Hamilton: adj(C) = C^2 - tr(C) C + sigma_2(C) Id
        let tr = c.trace();
        let c2 = c.matmul(c);
        let sigma2 = tr.mul(&tr).sub(&c2.trace()).scale(0.5);
        c2.sub(&tr.mul(c)).add(&sigma2.times_identity()).scale(-1.0)
    } else {
        SpectralField::zeros(grid, Rank::Tensor)
    };
    let adjugate = id.sub(&linear).sub(&quadratic);
    AdjugateExpansion {
        linear,
        quadratic,
        adjugate,
    }
}

/// `(Id + C)^-1 = sum_k (-C)^k`, summed until the next term drops below
/// `tol`. Requires the pointwise row-sum norm of `C` below 1.
pub fn inverse_by_neumann(c: &SpectralField, tol: f64, max_terms: usize) -> Result<(SpectralField, usize)> {
    let d = c.dim();
    let len = c.grid().len();
    let mut worst = 0.0f64;
    let mut m = [0.0; 9];
    for x in 0..len {
        for k in 0..d * d {
            m[k] = c.values()[k * len + x];
        }
        worst = worst.max(mat::norm_inf(d, &m[..d * d]));
    }
    if worst >= 1.0 {
        return Err(Error::SeriesDiverges(worst));
    }
    let mut term = SpectralField::identity(*c.grid());
    let mut sum = term.clone();
    for k in 1..=max_terms {
        term = term.matmul(c).scale(-1.0);
        sum = sum.add(&term);
        if term.max_abs() < tol {
            return Ok((sum, k));
        }
    }
    Err(Error::SeriesDiverges(worst))
}

/// `D_A(z) = (Dz A + A^T nabla z) / 2`.
pub fn twisted_deformation(a: &SpectralField, z: &SpectralField) -> SpectralField {
    let dz = jacobian(z);
    dz.matmul(a).add(&a.transpose().matmul(&nabla(z))).scale(0.5)
}

/// `div_A z = A^T : nabla z = tr(Dz A)`.
pub fn twisted_divergence(a: &SpectralField, z: &SpectralField) -> SpectralField {
    jacobian(z).contract(a)
}

/// Residuals of the Lagrangian gradient and divergence identities
/// `(nabla K) o X = J^-1 div_y(adj(DX) K o X)` and
/// `(div H) o X = J^-1 div_y(adj(DX) H o X)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub gradient: f64,
    pub divergence: f64,
}

pub fn gradient_identity_check(k: &SpectralField, h: &SpectralField, flow: &FlowSnapshot<'_>) -> Result<IdentityResidual> {
    if k.rank() != Rank::Scalar || h.rank() != Rank::Vector {
        return Err(Error::Mismatch("identity check takes a scalar and a vector field".into()));
    }
    let inv_j = flow.jacobian.map(|j| 1.0 / j);
    let kbar = compose(k, flow.displacement);
    let lhs_g = compose(&gradient(k), flow.displacement);
    let rhs_g = inv_j.mul(&tensor_divergence(&flow.adjugate.mul(&kbar)));
    let hbar = compose(h, flow.displacement);
    let lhs_d = compose(&divergence(h), flow.displacement);
    let rhs_d = inv_j.mul(&divergence(&flow.adjugate.matmul(&hbar)));
    Ok(IdentityResidual {
        gradient: lhs_g.max_abs_diff(&rhs_g),
        divergence: lhs_d.max_abs_diff(&rhs_d),
    })
}

/// `int_0^T ||Dv||_{B^{n/p}} <= c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallnessCertificate {
    pub integral: f64,
    pub bound: f64,
}

impl SmallnessCertificate {
    pub fn holds(&self) -> bool {
        self.integral <= self.bound
    }
}

/// Running integrals `int_0^{t_k} ||Dv||_{B^{n/p}}`.
pub fn gradient_integrals(v: &TimeSeriesField, p: f64, partition: &Partition) -> Vec<f64> {
    let lp = LittlewoodPaley::new(*v.grid(), *partition);
    let params = BesovParams {
        s: v.grid().dim() as f64 / p,
        p,
    };
    let vals: Vec<f64> = v.samples().iter().map(|s| lp.besov_derivative(s, 1, &params)).collect();
    cumulative_trapezoid(&vals, v.dt())
}

pub fn smallness_certificate(v: &TimeSeriesField, p: f64, partition: &Partition, bound: f64) -> SmallnessCertificate {
    let integral = *gradient_integrals(v, p, partition).last().unwrap_or(&0.0);
    SmallnessCertificate { integral, bound }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimateReport {
    pub certificate: SmallnessCertificate,
    pub reports: Vec<InequalityReport>,
}

/// Fits the constants of the flow estimates for velocity `v`, using `w`
/// as the argument of the twisted-operator discrepancies. The discrepancy
/// estimates are measured in `L^1_t`.
pub fn flow_estimate_check(
    v: &TimeSeriesField,
    w: &TimeSeriesField,
    p: f64,
    partition: &Partition,
    bound: f64,
) -> Result<FlowEstimateReport> {
    if !v.same_sampling(w) {
        return Err(Error::Mismatch("v and w sampled at different times".into()));
    }
    let certificate = smallness_certificate(v, p, partition, bound);
    if !certificate.holds() {
        return Err(Error::Smallness {
            value: certificate.integral,
            bound,
        });
    }
    let grid = *v.grid();
    let lp = LittlewoodPaley::new(grid, *partition);
    let crit = BesovParams::critical(grid.dim(), p)?;
    let flow = integrate_flow(v)?;
    let iv = gradient_integrals(v, p, partition);
    let iw = gradient_integrals(w, p, partition);
    let id = SpectralField::identity(grid);
    let one = SpectralField::constant(grid, 1.0);
    let names = ["U1 Id-adj", "U2 Id-A", "J-1", "1/J-1", "U3 twisted deformation", "U4 twisted divergence"];
    let mut reports: Vec<InequalityReport> = names
        .iter()
        .map(|n| InequalityReport::new(n).with_param("p", p).with_param("T", v.horizon()))
        .collect();
    let mut u3 = Vec::with_capacity(v.len());
    let mut u4 = Vec::with_capacity(v.len());
    for k in 0..v.len() {
        let s = flow.snapshot(k);
        let wk = w.sample(k);
        let d3 = s.adjugate.matmul(&twisted_deformation(s.inverse, wk)).sub(&deformation(wk));
        let d4 = s
            .adjugate
            .mul(&twisted_divergence(s.inverse, wk))
            .sub(&divergence(wk).times_identity());
        u3.push(lp.besov(&d3, &crit));
        u4.push(lp.besov(&d4, &crit));
    }
    let u3i = cumulative_trapezoid(&u3, v.dt());
    let u4i = cumulative_trapezoid(&u4, v.dt());
    for k in 1..v.len() {
        let s = flow.snapshot(k);
        let lhs = [
            lp.besov(&id.sub(s.adjugate), &crit),
            lp.besov(&id.sub(s.inverse), &crit),
            lp.besov(&s.jacobian.sub(&one), &crit),
            lp.besov(&s.jacobian.map(|j| 1.0 / j - 1.0), &crit),
        ];
        for (r, l) in reports.iter_mut().zip(lhs) {
            r.record(k, l, iv[k]);
        }
        reports[4].record(k, u3i[k], iv[k] * iw[k]);
        reports[5].record(k, u4i[k], iv[k] * iw[k]);
    }
    Ok(FlowEstimateReport { certificate, reports })
}

/// Fits `||F(v2) - F(v1)|| <= C int ||D(v2 - v1)||` for `F` = `A`, `adj`, `J`.
pub fn flow_difference_check(
    v1: &TimeSeriesField,
    v2: &TimeSeriesField,
    p: f64,
    partition: &Partition,
    bound: f64,
) -> Result<Vec<InequalityReport>> {
    for v in [v1, v2] {
        let c = smallness_certificate(v, p, partition, bound);
        if !c.holds() {
            return Err(Error::Smallness {
                value: c.integral,
                bound,
            });
        }
    }
    let grid = *v1.grid();
    let lp = LittlewoodPaley::new(grid, *partition);
    let crit = BesovParams::critical(grid.dim(), p)?;
    let f1 = integrate_flow(v1)?;
    let f2 = integrate_flow(v2)?;
    let dv = v2.sub(v1)?;
    let idv = gradient_integrals(&dv, p, partition);
    let mut reports: Vec<InequalityReport> = ["C1 dA", "C1 dadj", "C1 dJ"]
        .iter()
        .map(|n| InequalityReport::new(n).with_param("p", p))
        .collect();
    for k in 1..v1.len() {
        let (a, b) = (f1.snapshot(k), f2.snapshot(k));
        let lhs = [
            lp.besov(&b.inverse.sub(a.inverse), &crit),
            lp.besov(&b.adjugate.sub(a.adjugate), &crit),
            lp.besov(&b.jacobian.sub(a.jacobian), &crit),
        ];
        for (r, l) in reports.iter_mut().zip(lhs) {
            r.record(k, l, idv[k]);
        }
    }
    Ok(reports)
}

/// Amplitude sweep of the flow quantities at the final time: linear terms
/// should scale like the amplitude, quadratic ones like its square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSweep {
    pub amplitudes: Vec<f64>,
    pub series: Vec<(alloc::string::String, Vec<f64>, f64)>,
}

impl AmplitudeSweep {
    pub fn slope(&self, name: &str) -> Option<f64> {
        self.series.iter().find(|s| s.0 == name).map(|s| s.2)
    }
}

/// Scales `v` and `w` together by each amplitude and records
/// `||Id - adj||`, `||J - 1||` (linear), the `L^1_t` twisted discrepancies
/// and `||P2(C)||` (quadratic).
pub fn flow_amplitude_sweep(
    v: &TimeSeriesField,
    w: &TimeSeriesField,
    amplitudes: &[f64],
    p: f64,
    partition: &Partition,
) -> Result<AmplitudeSweep> {
    let grid = *v.grid();
    let lp = LittlewoodPaley::new(grid, *partition);
    let crit = BesovParams::critical(grid.dim(), p)?;
    let id = SpectralField::identity(grid);
    let one = SpectralField::constant(grid, 1.0);
    let names = ["Id-adj", "J-1", "U3", "U4", "P2"];
    let mut values: Vec<Vec<f64>> = names.iter().map(|_| Vec::new()).collect();
    for &amp in amplitudes {
        let va = v.map(|_, s| s.scale(amp));
        let wa = w.map(|_, s| s.scale(amp));
        let flow = integrate_flow(&va)?;
        let last = flow.snapshot(flow.len() - 1);
        values[0].push(lp.besov(&id.sub(last.adjugate), &crit));
        values[1].push(lp.besov(&last.jacobian.sub(&one), &crit));
        let mut u3 = Vec::new();
        let mut u4 = Vec::new();
        for k in 0..va.len() {
            let s = flow.snapshot(k);
            let wk = wa.sample(k);
            u3.push(lp.besov(
                &s.adjugate.matmul(&twisted_deformation(s.inverse, wk)).sub(&deformation(wk)),
                &crit,
            ));
            u4.push(lp.besov(
                &s.adjugate
                    .mul(&twisted_divergence(s.inverse, wk))
                    .sub(&divergence(wk).times_identity()),
                &crit,
            ));
        }
        values[2].push(*cumulative_trapezoid(&u3, va.dt()).last().unwrap_or(&0.0));
        values[3].push(*cumulative_trapezoid(&u4, va.dt()).last().unwrap_or(&0.0));
        values[4].push(lp.besov(&adjugate_expansion(last.strain).quadratic, &crit));
    }
    let series = names
        .iter()
        .zip(values)
        .map(|(n, vals)| {
            let slope = loglog_slope(amplitudes, &vals);
            (n.to_string(), vals, slope)
        })
        .collect();
    Ok(AmplitudeSweep {
        amplitudes: amplitudes.to_vec(),
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_field, RandomFieldSpec};
    use crate::spectral::Grid;

    fn shear(grid: Grid, alpha: f64, steps: usize, t: f64) -> TimeSeriesField {
        let s: Vec<SpectralField> = (0..=steps)
            .map(|_| SpectralField::from_fn(grid, Rank::Vector, |x, c| if c == 0 { alpha * x[1].sin() } else { 0.0 }))
            .collect();
        TimeSeriesField::uniform(t, s).unwrap()
    }

    #[test]
    fn shear_flow_is_volume_preserving() {
        let g = Grid::standard(2, 16).unwrap();
        let flow = integrate_flow(&shear(g, 0.3, 8, 1.0)).unwrap();
        let last = flow.snapshot(8);
        assert!(last.jacobian.shift(-1.0).max_abs() < 1e-13);
        let dx = last.dx();
        assert!(dx.matmul(last.inverse).max_abs_diff(&SpectralField::identity(g)) < 1e-13);
    }

    #[test]
    fn adjugate_is_j_times_inverse() {
        let g = Grid::standard(3, 8).unwrap();
        let spec = RandomFieldSpec { max_wavenumber: 2, slope: 1.0, amplitude: 0.05 };
        let s: Vec<SpectralField> = (0..3).map(|k| random_field(g, Rank::Vector, &spec, k).unwrap()).collect();
        let v = TimeSeriesField::uniform(0.5, s).unwrap();
        let flow = integrate_flow(&v).unwrap();
        let snap = flow.snapshot(2);
        let ja = snap.jacobian.mul(snap.inverse);
        assert!(ja.max_abs_diff(snap.adjugate) < 1e-12);
        let exp = adjugate_expansion(snap.strain);
        assert!(exp.adjugate.max_abs_diff(snap.adjugate) < 1e-12);
    }

    #[test]
    fn two_dimensional_expansion_is_linear() {
        let g = Grid::standard(2, 8).unwrap();
        let c = SpectralField::from_fn(g, Rank::Tensor, |x, k| 0.1 * (x[0] + k as f64).sin());
        let exp = adjugate_expansion(&c);
        assert_eq!(exp.quadratic.max_abs(), 0.0);
        let direct = c.add(&SpectralField::identity(g)).map_matrix(mat::adjugate);
        assert!(exp.adjugate.max_abs_diff(&direct) < 1e-14);
    }

    #[test]
    fn neumann_matches_inverse() {
        let g = Grid::standard(2, 8).unwrap();
        let c = SpectralField::from_fn(g, Rank::Tensor, |x, k| 0.2 * (x[1] + k as f64).cos());
        let (inv, terms) = inverse_by_neumann(&c, 1e-15, 200).unwrap();
        let direct = c.add(&SpectralField::identity(g)).map_matrix(mat::inverse);
        assert!(inv.max_abs_diff(&direct) < 1e-13);
        assert!(terms > 5);
        let big = c.scale(10.0);
        assert!(matches!(inverse_by_neumann(&big, 1e-12, 50), Err(Error::SeriesDiverges(_))));
    }

    #[test]
    fn degenerate_flow_is_reported() {
        let g = Grid::standard(2, 16).unwrap();
        let s: Vec<SpectralField> = (0..3)
            .map(|_| SpectralField::from_fn(g, Rank::Vector, |x, c| if c == 0 { -3.0 * x[0].sin() } else { 0.0 }))
            .collect();
        let v = TimeSeriesField::uniform(1.0, s).unwrap();
        assert!(matches!(integrate_flow(&v), Err(Error::FlowDegenerate { .. })));
    }

    #[test]
    fn twisted_operators_reduce_at_identity() {
        let g = Grid::standard(2, 16).unwrap();
        let spec = RandomFieldSpec { max_wavenumber: 3, ..RandomFieldSpec::default() };
        let z = random_field(g, Rank::Vector, &spec, 4).unwrap();
        let id = SpectralField::identity(g);
        assert!(twisted_deformation(&id, &z).max_abs_diff(&deformation(&z)) < 1e-12);
        assert!(twisted_divergence(&id, &z).max_abs_diff(&divergence(&z)) < 1e-12);
    }

    #[test]
    fn gradient_identity_converges_spectrally() {
        let residual = |n: usize| {
            let g = Grid::standard(2, n).unwrap();
            let flow = integrate_flow(&shear(g, 1.0, 2, 1.0)).unwrap();
            let k = SpectralField::from_fn(g, Rank::Scalar, |x, _| x[0].sin());
            let h = SpectralField::from_fn(g, Rank::Vector, |x, c| if c == 0 { x[0].cos() } else { x[0].sin() });
            gradient_identity_check(&k, &h, &flow.snapshot(2)).unwrap()
        };
        let (a, b) = (residual(8), residual(16));
        assert!(a.gradient > 4.0 * b.gradient, "{a:?} {b:?}");
        assert!(b.gradient < 1e-6 && b.divergence < 1e-6);
    }

    #[test]
    fn integral_jacobian_is_second_order() {
        let err = |steps: usize| {
            let g = Grid::standard(2, 16).unwrap();
            let s: Vec<SpectralField> = (0..=steps)
                .map(|k| {
                    let t = k as f64 / steps as f64;
                    SpectralField::from_fn(g, Rank::Vector, move |x, c| {
                        (-t).exp() * 0.3 * if c == 0 { x[0].sin() * x[1].cos() } else { (x[0] + x[1]).cos() }
                    })
                })
                .collect();
            let v = TimeSeriesField::uniform(1.0, s).unwrap();
            let flow = integrate_flow(&v).unwrap();
            let ji = jacobian_integral_form(&v, &flow);
            ji[steps].max_abs_diff(flow.snapshot(steps).jacobian)
        };
        let order = (err(16) / err(32)).log2();
        assert!(order > 1.9, "order {order}");
    }
}
