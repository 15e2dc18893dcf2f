//! Negative controls: inputs that must trip their gates.

use lagns_core::eulerian::eulerian_residual;
use lagns_core::fixed_point::reconstruct_density;
use lagns_core::random::{derive_seed, random_field, RandomFieldSpec};
use lagns_core::{Rank, SpectralField, TimeSeriesField};
use serde::Serialize;

use crate::config::Scenario;
use crate::presets::build_problem;
use crate::report::{Gate, ReportBundle};

#[derive(Serialize)]
struct Expectation<'a> {
    expected_failures: &'a [String],
    observed_failures: Vec<&'a str>,
    matched: bool,
}

pub fn run(sc: &Scenario, b: &mut ReportBundle) -> anyhow::Result<()> {
    let c = sc.controls.clone().expect("validated");
    let grid = sc.grid.grid()?;
    let problem = build_problem(grid, &sc.problem)?;

    // compressive velocity -a (sin x1, sin x2); the map folds once a T > 1
    let a = c.degenerate_amplitude;
    let v = SpectralField::from_fn(grid, Rank::Vector, |x, i| if i < 2 { -a * x[i].sin() } else { 0.0 });
    let series = TimeSeriesField::uniform(c.degenerate_horizon, vec![v; c.degenerate_steps + 1])?;
    match reconstruct_density(&series, &problem) {
        Ok(d) => b.gate(Gate::check(
            "flow nondegenerate",
            true,
            format!("min J rho_bar = {:.3e}", d.rho.samples().iter().map(|r| r.min_value()).fold(f64::INFINITY, f64::min)),
        )),
        Err(e) => b.gate(Gate::error("flow nondegenerate", &e)),
    }

    // fields unrelated to any solution
    let spec = RandomFieldSpec::default();
    let base = derive_seed(sc.seed, 12);
    let mut rho = Vec::with_capacity(c.residual_samples);
    let mut u = Vec::with_capacity(c.residual_samples);
    for k in 0..c.residual_samples {
        let s = derive_seed(base, k as u64);
        rho.push(random_field(grid, Rank::Scalar, &spec, derive_seed(s, 0))?.scale(0.1).shift(1.0));
        u.push(random_field(grid, Rank::Vector, &spec, derive_seed(s, 1))?.scale(0.1));
    }
    let horizon = 0.1;
    let res = eulerian_residual(
        &TimeSeriesField::uniform(horizon, rho)?,
        &TimeSeriesField::uniform(horizon, u)?,
        &problem.laws,
    )?;
    b.gate(Gate::at_most(
        "eulerian residual small",
        res.momentum.max().max(res.mass.max()),
        c.residual_tol,
        format!(
            "random fields: momentum residual {:.3e}, mass residual {:.3e}",
            res.momentum.max(),
            res.mass.max()
        ),
    ));

    let observed = b.failed_ids();
    let matched = observed.len() == c.expect_failures.len()
        && c.expect_failures.iter().all(|id| observed.contains(&id.as_str()));
    let summary = serde_json::to_value(Expectation {
        expected_failures: &c.expect_failures,
        observed_failures: observed,
        matched,
    })?;
    b.section("expectation", summary);
    Ok(())
}
