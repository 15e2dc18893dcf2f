use lagns_core::eulerian::{invert_displacement, invert_flow, to_eulerian, to_lagrangian};
use lagns_core::fixed_point::{
    picard_solve, reconstruct_density, FluidProblem, Iterate, Laws, Mode, PhiMap, PicardConfig, PicardStatus, ScalarLaw,
};
use lagns_core::random::{random_field, RandomFieldSpec};
use lagns_core::spectral::jacobian;
use lagns_core::{Grid, Rank, SpectralField, TimeSeriesField};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::standard(2, 16).unwrap()
}

fn small_field(rank: Rank, seed: u64, size: f64) -> SpectralField {
    small_field_on(grid(), rank, seed, size)
}

// Compositions with inverse maps are not band-limited; the round trips need
// a finer grid to reach interpolation accuracy.
fn small_field_on(g: Grid, rank: Rank, seed: u64, size: f64) -> SpectralField {
    let spec = RandomFieldSpec {
        max_wavenumber: 3,
        ..RandomFieldSpec::default()
    };
    let f = random_field(g, rank, &spec, seed).unwrap();
    f.scale(size / f.max_abs())
}

fn problem(seed: u64) -> FluidProblem {
    let rho0 = small_field(Rank::Scalar, seed, 0.05).shift(1.0);
    let u0 = small_field(Rank::Vector, seed ^ 1, 0.05);
    FluidProblem::new(rho0, u0, Laws::default(), 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn converged_iterates_stay_in_the_ball(seed in any::<u64>(), general in any::<bool>()) {
        let p = problem(seed);
        let mode = if general { Mode::General } else { Mode::Homogeneous };
        let out = picard_solve(&p, &PicardConfig::new(mode, 0.5, 0.05, 8)).unwrap();
        prop_assert_eq!(out.state.status, PicardStatus::Converged);
        prop_assert!(out.state.fixed_point_residual <= 1e-9);
        for r in &out.state.iterates {
            prop_assert!(r.ball_distance <= 0.5);
        }
        let dens = reconstruct_density(&out.solution.u, &p).unwrap();
        prop_assert!(dens.mass_defect <= 1e-12);
    }

    #[test]
    fn double_inversion_is_the_identity(seed in any::<u64>(), size in 0.005f64..0.05) {
        let d = small_field_on(Grid::standard(2, 64).unwrap(), Rank::Vector, seed, 1.0);
        let d = d.scale(size / jacobian(&d).max_abs());
        let inv = invert_displacement(&d, 1e-14, 1.0).unwrap();
        let back = invert_displacement(&inv.displacement, 1e-14, 1.0).unwrap();
        prop_assert!(back.displacement.max_abs_diff(&d) <= 1e-10);
    }

    #[test]
    fn eulerian_lagrangian_round_trip(seed in any::<u64>()) {
        let g = Grid::standard(2, 64).unwrap();
        let u = small_field_on(g, Rank::Vector, seed, 0.03);
        let rho = small_field_on(g, Rank::Scalar, seed ^ 3, 0.1).shift(1.0);
        let vel = TimeSeriesField::uniform(0.5, vec![u.clone(); 5]).unwrap();
        let den = TimeSeriesField::uniform(0.5, vec![rho.clone(); 5]).unwrap();
        let (rb, ub, flow) = to_lagrangian(&den, &vel).unwrap();
        let change = invert_flow(&flow, 1e-14).unwrap();
        let (r2, u2) = to_eulerian(&rb, &ub, &change).unwrap();
        for k in 0..5 {
            prop_assert!(r2.sample(k).max_abs_diff(&rho) <= 1e-10);
            prop_assert!(u2.sample(k).max_abs_diff(&u) <= 1e-10);
        }
    }
}

#[test]
fn identical_configs_give_identical_iterates() {
    let p = problem(42);
    let cfg = PicardConfig::new(Mode::General, 0.5, 0.05, 8);
    let a = picard_solve(&p, &cfg).unwrap();
    let b = picard_solve(&p, &cfg).unwrap();
    let bits = |o: &lagns_core::fixed_point::PicardOutcome| {
        o.state.iterates.iter().map(|r| (r.norm.to_bits(), r.increment.to_bits())).collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.solution.u.last().values(), b.solution.u.last().values());
}

#[test]
fn assemblers_agree_at_unit_density() {
    let g = grid();
    let u0 = small_field(Rank::Vector, 9, 0.05);
    let laws = Laws {
        pressure: ScalarLaw::Affine { offset: 0.0, slope: 1.0 },
        mu: ScalarLaw::Constant { value: 1.0 },
        lambda: ScalarLaw::Constant { value: 0.5 },
    };
    let p = FluidProblem::new(SpectralField::constant(g, 1.0), u0, laws, 2.0).unwrap();
    let v = Iterate::from_report(&lagns_core::fixed_point::free_solution(&p, 0.05, 8).unwrap());
    let gen = PhiMap::new(&p, Mode::General, 0.05, 8, 0.05).unwrap().apply(&v).unwrap();
    let hom = PhiMap::new(&p, Mode::Homogeneous, 0.05, 8, 0.05).unwrap().apply(&v).unwrap();
    let diff = Iterate::from_report(&gen).sub(&Iterate::from_report(&hom)).unwrap().ep_norm(&p).unwrap().total();
    assert!(diff <= 1e-9, "{diff:e}");
}
