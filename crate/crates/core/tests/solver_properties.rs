use lagns_core::lame::{solve_constant_lame, solve_variable_lame, LameCoefficients, NormSpec};
use lagns_core::random::{random_field, RandomFieldSpec};
use lagns_core::spectral::{compressible_split, curl, divergence, reassemble_from_split};
use lagns_core::{Grid, Rank, SpectralField, TimeSeriesField};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::standard(2, 16).unwrap()
}

fn spec() -> RandomFieldSpec {
    RandomFieldSpec {
        max_wavenumber: 5,
        ..RandomFieldSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn constant_forcing_is_integrated_exactly(
        mu in 0.1f64..5.0,
        mu_prime in 0.0f64..5.0,
        k1 in 1i32..5,
        k2 in 0i32..5,
        along in any::<bool>(),
    ) {
        let g = grid();
        let (k1f, k2f) = (k1 as f64, k2 as f64);
        let k2n = k1f * k1f + k2f * k2f;
        // gradient mode points along k, solenoidal mode across it
        let dir = if along { [k1f, k2f] } else { [-k2f, k1f] };
        let mode = SpectralField::from_fn(g, Rank::Vector, |x, c| dir[c] * (k1f * x[0] + k2f * x[1]).cos());
        let rate = if along { (mu + mu_prime) * k2n } else { mu * k2n };
        let (t, steps) = (0.4, 7);
        let f = mode.scale(0.3);
        let forcing = TimeSeriesField::uniform(t, vec![f; steps + 1]).unwrap();
        let r = solve_constant_lame(&mode, Some(&forcing), mu, mu_prime, t, steps, &NormSpec::solution(2)).unwrap();
        for (k, u) in r.solution.samples().iter().enumerate() {
            let tk = r.solution.times()[k];
            let e = (-rate * tk).exp();
            let exact = mode.scale(e + 0.3 * (1.0 - e) / rate);
            prop_assert!(u.max_abs_diff(&exact) < 1e-12);
        }
    }

    #[test]
    fn potential_and_solenoidal_parts_do_not_mix(seed in any::<u64>(), mu in 0.1f64..3.0, mu_prime in 0.0f64..3.0) {
        let u = random_field(grid(), Rank::Vector, &spec(), seed).unwrap();
        let (d, om) = compressible_split(&u);
        let potential = reassemble_from_split(&d, &om.scale(0.0));
        let solenoidal = u.sub(&potential);
        let rp = solve_constant_lame(&potential, None, mu, mu_prime, 0.2, 4, &NormSpec::solution(2)).unwrap();
        let rs = solve_constant_lame(&solenoidal, None, mu, mu_prime, 0.2, 4, &NormSpec::solution(2)).unwrap();
        prop_assert!(curl(rp.solution.last()).max_abs() < 1e-12);
        prop_assert!(divergence(rs.solution.last()).max_abs() < 1e-12);
    }

    #[test]
    fn variable_solver_reduces_to_constant(seed in any::<u64>(), mu in 0.2f64..2.0, mu_prime in 0.0f64..2.0) {
        let u0 = random_field(grid(), Rank::Vector, &spec(), seed).unwrap();
        let c = LameCoefficients::constant(grid(), mu, mu_prime).unwrap();
        let v = solve_variable_lame(&c, &u0, None, 0.1, 6, None, &NormSpec::solution(2)).unwrap();
        let k = solve_constant_lame(&u0, None, mu, mu_prime, 0.1, 6, &NormSpec::solution(2)).unwrap();
        for (a, b) in v.solution.samples().iter().zip(k.solution.samples()) {
            prop_assert!(a.max_abs_diff(b) <= 1e-10);
        }
        for (a, b) in v.du_dt.samples().iter().zip(k.du_dt.samples()) {
            prop_assert!(a.max_abs_diff(b) <= 1e-10 * b.max_abs().max(1.0));
        }
    }
}
