use lagns_core::random::{random_field, RandomFieldSpec};
use lagns_core::spectral::{apply_multiplier, gradient, MultiplierSymbol};
use lagns_core::{Grid, Rank, SpectralField};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::standard(2, 32).unwrap()
}

fn spec(k: i64) -> RandomFieldSpec {
    RandomFieldSpec {
        max_wavenumber: k,
        ..RandomFieldSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn values_coefficients_round_trip(seed in any::<u64>(), shift in -2.0f64..2.0) {
        let f = random_field(grid(), Rank::Vector, &spec(10), seed).unwrap().shift(shift);
        let back = SpectralField::from_coefficients(grid(), Rank::Vector, f.coeffs().to_vec());
        let scale = f.max_abs();
        prop_assert!(back.max_abs_diff(&f) <= 1e-12 * scale);
    }

    #[test]
    fn product_rule_on_the_band(seed in any::<u64>()) {
        let f = random_field(grid(), Rank::Scalar, &spec(5), seed).unwrap();
        let g = random_field(grid(), Rank::Scalar, &spec(5), seed ^ 0xA5A5).unwrap();
        let lhs = gradient(&f.mul(&g));
        let rhs = gradient(&f).mul(&g).add(&gradient(&g).mul(&f));
        let scale = lhs.max_abs().max(1.0);
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10 * scale);
    }

    #[test]
    fn degree_zero_symbols_are_l2_bounded(seed in any::<u64>()) {
        let u = random_field(grid(), Rank::Vector, &spec(10), seed).unwrap();
        let a = apply_multiplier(&MultiplierSymbol::abs_divergence(), &u).unwrap();
        let b = apply_multiplier(&MultiplierSymbol::abs_curl(), &u).unwrap();
        let n = u.lp_norm(2.0);
        prop_assert!(a.lp_norm(2.0) <= n * (1.0 + 1e-12));
        // |D|^-1 curl as a tensor carries the rotation twice
        prop_assert!(b.lp_norm(2.0) <= 2f64.sqrt() * n * (1.0 + 1e-12));
    }
}
