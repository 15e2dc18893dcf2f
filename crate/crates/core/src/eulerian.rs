//! Passage between Lagrangian and Eulerian descriptions: flow inversion,
//! pull-back and push-forward of fields, characteristics, and residuals of
//! both forms of the equations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{FluidProblem, Laws};
use crate::lagrangian::{twisted_deformation, twisted_divergence, FlowMap};
use crate::littlewood_paley::{BesovParams, LittlewoodPaley, Partition, TimeSeriesField};
use crate::quadrature::trapezoid;
use crate::random::{derive_seed, random_field, RandomFieldSpec};
use crate::report::InequalityReport;
use crate::spectral::{
    compose, deformation, divergence, gradient, jacobian, tensor_divergence, FourierEvaluator, Rank, SpectralField,
};

pub const INVERSION_CAP: usize = 100;

/// Inverse of one flow snapshot: `X^-1(x) = x + inverse(x)`.
#[derive(Clone, Debug)]
pub struct InverseMap {
    pub displacement: SpectralField,
    pub iterations: usize,
    /// `max |X(X^-1(x)) - x|`.
    pub residual: f64,
}

/// Solves `y + disp(y) = x` at every node by the damped fixed point
/// `y <- y - omega (y + disp(y) - x)`, started from `y = x - disp(x)`.
pub fn invert_displacement(disp: &SpectralField, tol: f64, omega: f64) -> Result<InverseMap> {
    if disp.rank() != Rank::Vector {
        return Err(Error::Mismatch("displacement must be a vector field".into()));
    }
    let grid = *disp.grid();
    let d = grid.dim();
    let len = grid.len();
    let ev = FourierEvaluator::new(disp);
    let mut inv = vec![0.0; len * d];
    let mut worst_iters = 0;
    let mut worst_res = 0.0f64;
    let mut y = [0.0; 3];
    let mut out = [0.0; 9];
    for idx in 0..len {
        let x = grid.node(idx);
        for a in 0..d {
            y[a] = x[a] - disp.values()[a * len + idx];
        }
        let mut res = f64::INFINITY;
        let mut it = 0;
        while it < INVERSION_CAP {
            ev.eval(&y[..d], &mut out);
            res = 0.0;
            for a in 0..d {
                let r = y[a] + out[a] - x[a];
                res = res.max(r.abs());
                y[a] -= omega * r;
            }
            it += 1;
            if res <= tol {
                break;
            }
        }
        if !(res <= tol) {
            return Err(Error::InversionFailed {
                iterations: it,
                residual: res,
            });
        }
        worst_iters = worst_iters.max(it);
        worst_res = worst_res.max(res);
        for a in 0..d {
            inv[a * len + idx] = y[a] - x[a];
        }
    }
    Ok(InverseMap {
        displacement: SpectralField::from_values(grid, Rank::Vector, inv)?,
        iterations: worst_iters,
        residual: worst_res,
    })
}

/// Forward flow together with its inverse at every sample.
#[derive(Clone, Debug)]
pub struct CoordinateChange {
    pub forward: FlowMap,
    pub inverse: Vec<InverseMap>,
}

impl CoordinateChange {
    pub fn max_residual(&self) -> f64 {
        self.inverse.iter().map(|m| m.residual).fold(0.0, f64::max)
    }
}

pub fn invert_flow(flow: &FlowMap, tol: f64) -> Result<CoordinateChange> {
    let inverse = flow
        .displacements()
        .iter()
        .map(|d| invert_displacement(d, tol, 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoordinateChange {
        forward: flow.clone(),
        inverse,
    })
}

/// `rho = rho_bar o X^-1`, `u = u_bar o X^-1`.
pub fn to_eulerian(
    rho_bar: &TimeSeriesField,
    u_bar: &TimeSeriesField,
    change: &CoordinateChange,
) -> Result<(TimeSeriesField, TimeSeriesField)> {
    if !rho_bar.same_sampling(u_bar) || rho_bar.len() != change.inverse.len() {
        return Err(Error::Mismatch("fields and coordinate change sampled differently".into()));
    }
    let rho = rho_bar.map(|k, f| compose(f, &change.inverse[k].displacement));
    let u = u_bar.map(|k, f| compose(f, &change.inverse[k].displacement));
    Ok((rho, u))
}

/// `f o X` at every sample of a flow.
pub fn pull_back(f: &TimeSeriesField, flow: &FlowMap) -> Result<TimeSeriesField> {
    if f.len() != flow.len() {
        return Err(Error::Mismatch("field and flow sampled differently".into()));
    }
    Ok(f.map(|k, s| compose(s, &flow.displacements()[k])))
}

/// Characteristics `dX/dt = u(t, X)` by Heun's method with off-grid
/// evaluation of `u`, then `rho_bar = rho o X`, `u_bar = u o X`.
pub fn to_lagrangian(
    rho: &TimeSeriesField,
    u: &TimeSeriesField,
) -> Result<(TimeSeriesField, TimeSeriesField, FlowMap)> {
    if !rho.same_sampling(u) || u.rank() != Rank::Vector {
        return Err(Error::Mismatch("to_lagrangian expects rho and a vector u on one time grid".into()));
    }
    let grid = *u.grid();
    let d = grid.dim();
    let len = grid.len();
    let h = u.dt();
    let mut disp = vec![SpectralField::zeros(grid, Rank::Vector)];
    let mut cur = vec![0.0; len * d];
    let mut out0 = [0.0; 9];
    let mut out1 = [0.0; 9];
    let mut x = [0.0; 3];
    let mut pred = [0.0; 3];
    let cell = grid.spacing();
    for k in 1..u.len() {
        let e0 = FourierEvaluator::new(u.sample(k - 1));
        let e1 = FourierEvaluator::new(u.sample(k));
        let mut next = cur.clone();
        for idx in 0..len {
            let y = grid.node(idx);
            for a in 0..d {
                x[a] = y[a] + cur[a * len + idx];
            }
            e0.eval(&x[..d], &mut out0);
            for a in 0..d {
                pred[a] = x[a] + h * out0[a];
            }
            e1.eval(&pred[..d], &mut out1);
            for a in 0..d {
                let step = 0.5 * h * (out0[a] + out1[a]);
                if !(step.abs() < cell) {
                    return Err(Error::InvalidParameter(format!(
                        "characteristic moves {step:e} in one step, more than a grid cell"
                    )));
                }
                next[a * len + idx] += step;
            }
        }
        cur = next;
        disp.push(SpectralField::from_values(grid, Rank::Vector, cur.clone())?);
    }
    let flow = FlowMap::from_displacements(u.times().to_vec(), disp)?;
    let rho_bar = pull_back(rho, &flow)?;
    let u_bar = pull_back(u, &flow)?;
    Ok((rho_bar, u_bar, flow))
}

/// Per-sample `L^2` norms of a residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ResidualTrajectory {
    fn from_fields(times: &[f64], fields: &[SpectralField]) -> Self {
        Self {
            times: times.to_vec(),
            values: fields.iter().map(|f| f.lp_norm(2.0)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Trapezoid `L^1_t` integral.
    pub fn integral(&self) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        trapezoid(&self.values, self.times[1] - self.times[0])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub mass: ResidualTrajectory,
    pub momentum: ResidualTrajectory,
}

/// Mass residual `d_t rho + div(rho u)` and momentum residual
/// `d_t(rho u) + div(rho u (x) u) - 2 div(mu(rho) D(u)) - grad(lambda(rho) div u) + grad(P(rho) - P(1))`,
/// with second-order differences in time.
pub fn eulerian_residual(rho: &TimeSeriesField, u: &TimeSeriesField, laws: &Laws) -> Result<Residuals> {
    if !rho.same_sampling(u) {
        return Err(Error::Mismatch("rho and u sampled differently".into()));
    }
    let drho = rho.time_derivative()?;
    let mom = rho.map(|k, r| r.mul(u.sample(k)));
    let dmom = mom.time_derivative()?;
    let mut mass = Vec::with_capacity(rho.len());
    let mut momentum = Vec::with_capacity(rho.len());
    for k in 0..rho.len() {
        let (r, v) = (rho.sample(k), u.sample(k));
        let m = mom.sample(k);
        mass.push(drho.sample(k).add(&divergence(m)));
        let flux = outer(m, v);
        let mu = laws.mu.apply(r);
        let la = laws.lambda.apply(r);
        let visc = tensor_divergence(&mu.mul(&deformation(v))).scale(2.0).add(&gradient(&la.mul(&divergence(v))));
        let res = dmom
            .sample(k)
            .add(&tensor_divergence(&flux))
            .sub(&visc)
            .add(&gradient(&laws.pressure_excess(r)));
        momentum.push(res);
    }
    Ok(Residuals {
        mass: ResidualTrajectory::from_fields(rho.times(), &mass),
        momentum: ResidualTrajectory::from_fields(rho.times(), &momentum),
    })
}

// (a (x) b)_ij = a_i b_j
fn outer(a: &SpectralField, b: &SpectralField) -> SpectralField {
    let d = a.dim();
    let len = a.grid().len();
    let mut v = vec![0.0; d * d * len];
    for i in 0..d {
        for j in 0..d {
            for x in 0..len {
                v[(i * d + j) * len + x] = a.values()[i * len + x] * b.values()[j * len + x];
            }
        }
    }
    SpectralField::from_values(*a.grid(), Rank::Tensor, v).expect("finite products")
}

/// Lagrangian residuals: `d_t(J rho_bar)` and
/// `rho0 d_t u_bar - div(adj(DX)(2 mu(rho_bar) D_A(u_bar) + lambda(rho_bar) div_A u_bar Id - (P(rho_bar) - P(1)) Id))`,
/// with second-order differences in time.
pub fn lagrangian_residual(
    rho_bar: &TimeSeriesField,
    u_bar: &TimeSeriesField,
    flow: &FlowMap,
    problem: &FluidProblem,
) -> Result<Residuals> {
    if !rho_bar.same_sampling(u_bar) || rho_bar.len() != flow.len() {
        return Err(Error::Mismatch("fields and flow sampled differently".into()));
    }
    let mass_field = rho_bar.map(|k, r| r.mul(flow.snapshot(k).jacobian));
    let dmass = mass_field.time_derivative()?;
    let du = u_bar.time_derivative()?;
    let laws = &problem.laws;
    let mut momentum = Vec::with_capacity(u_bar.len());
    for k in 0..u_bar.len() {
        let s = flow.snapshot(k);
        let (r, w) = (rho_bar.sample(k), u_bar.sample(k));
        let sigma = laws
            .mu
            .apply(r)
            .mul(&twisted_deformation(s.inverse, w))
            .scale(2.0)
            .add(&laws.lambda.apply(r).mul(&twisted_divergence(s.inverse, w)).times_identity())
            .sub(&laws.pressure_excess(r).times_identity());
        let res = problem
            .rho0
            .mul(du.sample(k))
            .sub(&tensor_divergence(&s.adjugate.matmul(&sigma)));
        momentum.push(res);
    }
    Ok(Residuals {
        mass: ResidualTrajectory::from_fields(rho_bar.times(), dmass.samples()),
        momentum: ResidualTrajectory::from_fields(u_bar.times(), &momentum),
    })
}

/// `max |D(f o X) - (Df o X) DX|` for a map `X = id + disp`.
pub fn chain_rule_defect(f: &SpectralField, disp: &SpectralField) -> f64 {
    assert_eq!(f.rank(), Rank::Vector);
    let lhs = jacobian(&compose(f, disp));
    let dx = jacobian(disp).add(&SpectralField::identity(*disp.grid()));
    let rhs = compose(&jacobian(f), disp).matmul(&dx);
    lhs.max_abs_diff(&rhs)
}

/// `||f o X||_{B^s} <= C ||f||_{B^s}` over seeded random scalar fields,
/// one report per `s`.
pub fn composition_bound_check(
    disp: &SpectralField,
    s_values: &[f64],
    p: f64,
    partition: &Partition,
    trials: usize,
    seed: u64,
    spec: &RandomFieldSpec,
) -> Result<Vec<InequalityReport>> {
    let grid = *disp.grid();
    let lp = LittlewoodPaley::new(grid, *partition);
    let mut reports: Vec<InequalityReport> = s_values
        .iter()
        .map(|&s| {
            let mut r = InequalityReport::new("composition bound").with_param("s", s).with_param("p", p);
            if s >= 1.0 {
                r.flag("s >= 1 branch");
            }
            r
        })
        .collect();
    for t in 0..trials {
        let f = random_field(grid, Rank::Scalar, spec, derive_seed(seed, t as u64))?;
        let g = compose(&f, disp);
        for (r, &s) in reports.iter_mut().zip(s_values) {
            let params = BesovParams::new(s, p)?;
            r.record(t, lp.besov(&g, &params), lp.besov(&f, &params));
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::integrate_flow;
    use crate::spectral::Grid;

    fn grid(n: usize) -> Grid {
        Grid::standard(2, n).unwrap()
    }

    #[test]
    fn identity_and_translation_inverses() {
        let g = grid(16);
        let zero = SpectralField::zeros(g, Rank::Vector);
        let inv = invert_displacement(&zero, 1e-14, 1.0).unwrap();
        assert_eq!(inv.displacement.max_abs(), 0.0);
        let shift = SpectralField::from_fn(g, Rank::Vector, |_, c| 0.3 + c as f64 * 0.1);
        let inv = invert_displacement(&shift, 1e-14, 1.0).unwrap();
        assert!(inv.displacement.max_abs_diff(&shift.scale(-1.0)) < 1e-14);
    }

    #[test]
    fn shear_inverse_is_closed_form() {
        let g = grid(32);
        let (t, alpha) = (0.5, 0.4);
        let disp = SpectralField::from_fn(g, Rank::Vector, |x, c| if c == 0 { t * alpha * x[1].sin() } else { 0.0 });
        let inv = invert_displacement(&disp, 1e-12, 1.0).unwrap();
        assert!(inv.displacement.max_abs_diff(&disp.scale(-1.0)) < 1e-11);
        let back = invert_displacement(&inv.displacement, 1e-13, 1.0).unwrap();
        assert!(back.displacement.max_abs_diff(&disp) < 1e-10);
    }

    #[test]
    fn translation_composes_to_phase_shift() {
        let g = grid(16);
        let f = SpectralField::from_fn(g, Rank::Scalar, |x, _| (3.0 * x[0]).sin());
        let shift = SpectralField::from_fn(g, Rank::Vector, |_, c| if c == 0 { 0.25 } else { 0.0 });
        let exact = SpectralField::from_fn(g, Rank::Scalar, |x, _| (3.0 * (x[0] + 0.25)).sin());
        assert!(compose(&f, &shift).max_abs_diff(&exact) < 1e-13);
    }

    #[test]
    fn rest_state_residuals_vanish() {
        let g = grid(16);
        let rho = TimeSeriesField::uniform(0.1, vec![SpectralField::constant(g, 1.0); 4]).unwrap();
        let u = TimeSeriesField::uniform(0.1, vec![SpectralField::zeros(g, Rank::Vector); 4]).unwrap();
        let r = eulerian_residual(&rho, &u, &Laws::default()).unwrap();
        assert!(r.mass.max() < 1e-12 && r.momentum.max() < 1e-12);
        let (rb, ub, flow) = to_lagrangian(&rho, &u).unwrap();
        let p = FluidProblem::new(SpectralField::constant(g, 1.0), SpectralField::zeros(g, Rank::Vector), Laws::default(), 2.0).unwrap();
        let l = lagrangian_residual(&rb, &ub, &flow, &p).unwrap();
        assert!(l.mass.max() < 1e-12 && l.momentum.max() < 1e-12);
    }

    #[test]
    fn constant_velocity_characteristics() {
        let g = grid(16);
        let c = SpectralField::from_fn(g, Rank::Vector, |_, k| if k == 0 { 0.2 } else { -0.1 });
        let u = TimeSeriesField::uniform(1.0, vec![c.clone(); 11]).unwrap();
        let rho = TimeSeriesField::uniform(1.0, vec![SpectralField::constant(g, 1.0); 11]).unwrap();
        let (_, ub, flow) = to_lagrangian(&rho, &u).unwrap();
        assert!(flow.displacements()[10].max_abs_diff(&c) < 1e-13);
        assert!(ub.last().max_abs_diff(&c) < 1e-13);
    }

    #[test]
    fn steady_shear_characteristics_are_second_order() {
        // u = (sin x2, 0) with x2 fixed along characteristics: X1 = y1 + t sin y2 exactly,
        // so use a rotating field instead: u = 0.3 (sin x2, sin x1)
        let err = |steps: usize| {
            let g = grid(16);
            let f = SpectralField::from_fn(g, Rank::Vector, |x, c| 0.3 * if c == 0 { x[1].sin() } else { x[0].sin() });
            let u = TimeSeriesField::uniform(1.0, vec![f.clone(); steps + 1]).unwrap();
            let rho = TimeSeriesField::uniform(1.0, vec![SpectralField::constant(g, 1.0); steps + 1]).unwrap();
            let (_, _, flow) = to_lagrangian(&rho, &u).unwrap();
            flow.displacements()[steps].clone()
        };
        let (a, b, c) = (err(10), err(20), err(40));
        let order = (a.max_abs_diff(&b) / b.max_abs_diff(&c)).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn chain_rule_is_exact_for_band_limited_fields() {
        let g = grid(64);
        let f = SpectralField::from_fn(g, Rank::Vector, |x, c| (x[0] + 2.0 * x[1] + c as f64).sin());
        let disp = SpectralField::from_fn(g, Rank::Vector, |x, c| 0.02 * if c == 0 { x[1].sin() } else { x[0].cos() });
        assert!(chain_rule_defect(&f, &disp) < 1e-10);
    }

    #[test]
    fn round_trip_through_eulerian_coordinates() {
        let g = grid(32);
        let v = SpectralField::from_fn(g, Rank::Vector, |x, c| 0.05 * if c == 0 { x[1].sin() } else { (x[0] - x[1]).cos() });
        let u = TimeSeriesField::uniform(0.2, vec![v.clone(); 3]).unwrap();
        let flow = integrate_flow(&u).unwrap();
        let change = invert_flow(&flow, 1e-13).unwrap();
        let probe = SpectralField::from_fn(g, Rank::Scalar, |x, _| 1.0 + 0.1 * (2.0 * x[0]).cos());
        let rho_bar = TimeSeriesField::uniform(0.2, vec![probe.clone(); 3]).unwrap();
        let (rho, _) = to_eulerian(&rho_bar, &u, &change).unwrap();
        let back = pull_back(&rho, &flow).unwrap();
        assert!(back.last().max_abs_diff(&probe) < 1e-9);
    }
}
