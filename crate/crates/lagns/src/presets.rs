//! Initial data of the named regimes.

use lagns_core::fixed_point::FluidProblem;
use lagns_core::{Grid, Rank, SpectralField};

use crate::config::{Preset, ProblemConfig};

/// `(density amplitude, velocity amplitude)` used when the config leaves
/// them out.
pub fn default_amplitudes(preset: Preset) -> (f64, f64) {
    match preset {
        Preset::Rest => (0.0, 0.0),
        Preset::NearHomogeneous => (0.05, 0.05),
        Preset::RoughDensity => (0.4, 0.01),
        Preset::ShearProbe => (0.0, 0.05),
        Preset::Manufactured => (0.2, 0.05),
    }
}

fn amplitudes(cfg: &ProblemConfig) -> (f64, f64) {
    let (e, a) = default_amplitudes(cfg.preset);
    (cfg.density_amplitude.unwrap_or(e), cfg.velocity_amplitude.unwrap_or(a))
}

/// `rho0` of the preset.
pub fn initial_density(grid: Grid, cfg: &ProblemConfig) -> SpectralField {
    let (eps, _) = amplitudes(cfg);
    match cfg.preset {
        Preset::Rest | Preset::ShearProbe => SpectralField::constant(grid, 1.0),
        Preset::NearHomogeneous | Preset::RoughDensity => {
            SpectralField::from_fn(grid, Rank::Scalar, |x, _| 1.0 + eps * x[0].cos())
        }
        Preset::Manufactured => SpectralField::from_fn(grid, Rank::Scalar, |x, _| 1.0 + eps * x[0].sin()),
    }
}

/// `u0` of the preset. Components past the second vanish.
pub fn initial_velocity(grid: Grid, cfg: &ProblemConfig) -> SpectralField {
    let (_, a) = amplitudes(cfg);
    match cfg.preset {
        Preset::Rest => SpectralField::zeros(grid, Rank::Vector),
        Preset::NearHomogeneous | Preset::RoughDensity => SpectralField::from_fn(grid, Rank::Vector, |x, c| match c {
            0 => a * x[1].sin(),
            1 => a * (x[0] + x[1]).cos(),
            _ => 0.0,
        }),
        Preset::ShearProbe => SpectralField::from_fn(grid, Rank::Vector, |x, c| if c == 0 { a * x[1].sin() } else { 0.0 }),
        Preset::Manufactured => SpectralField::from_fn(grid, Rank::Vector, |x, c| if c == 0 { a * x[0].sin() } else { 0.0 }),
    }
}

pub fn build_problem(grid: Grid, cfg: &ProblemConfig) -> lagns_core::Result<FluidProblem> {
    let laws = cfg.laws.unwrap_or_default();
    Ok(FluidProblem::new(initial_density(grid, cfg), initial_velocity(grid, cfg), laws, cfg.p)?
        .with_partition(cfg.partition()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(preset: Preset) -> ProblemConfig {
        ProblemConfig {
            preset,
            density_amplitude: None,
            velocity_amplitude: None,
            p: 2.0,
            laws: None,
            partition: None,
        }
    }

    #[test]
    fn rest_is_trivial() {
        let g = Grid::standard(2, 8).unwrap();
        let p = build_problem(g, &cfg(Preset::Rest)).unwrap();
        assert_eq!(p.u0.max_abs(), 0.0);
        assert_eq!(p.a0().max_abs(), 0.0);
    }

    #[test]
    fn rough_density_has_the_stated_range() {
        let g = Grid::standard(2, 16).unwrap();
        let rho = initial_density(g, &cfg(Preset::RoughDensity));
        assert!((rho.max_value() - 1.4).abs() < 1e-12 && (rho.min_value() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn amplitudes_override_defaults() {
        let g = Grid::standard(2, 16).unwrap();
        let mut c = cfg(Preset::ShearProbe);
        c.velocity_amplitude = Some(0.5);
        assert!((initial_velocity(g, &c).max_abs() - 0.5).abs() < 1e-12);
    }
}
