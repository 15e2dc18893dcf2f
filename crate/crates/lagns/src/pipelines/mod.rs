//! One module per pipeline. Each fills a [`ReportBundle`]; independent
//! trials and levels run on the rayon pool and are collected in input
//! order, so reports do not depend on the thread count.

mod controls;
mod equivalence;
mod flow;
mod lame;
mod lemmas;
mod solve;
mod stability;

use std::path::Path;

use crate::config::{Pipeline, Scenario};
use crate::report::ReportBundle;

pub use equivalence::mapped_residuals;
pub use lame::{exact_mode_error, manufactured_heat_error};
pub use solve::lagrangian_residual_at;

pub fn execute(sc: &Scenario, out: &Path) -> anyhow::Result<ReportBundle> {
    let mut b = ReportBundle::new(&sc.name, sc.pipeline.name(), sc.seed);
    if let Some(d) = &sc.description {
        b.section("description", d.as_str());
    }
    match sc.pipeline {
        Pipeline::VerifyLame => lame::run(sc, &mut b)?,
        Pipeline::VerifyLemmas => lemmas::run(sc, &mut b)?,
        Pipeline::VerifyFlow => flow::run(sc, &mut b)?,
        Pipeline::Solve => solve::run(sc, out, &mut b)?,
        Pipeline::Equivalence => equivalence::run(sc, out, &mut b)?,
        Pipeline::Stability => stability::run(sc, &mut b)?,
        Pipeline::Controls => controls::run(sc, &mut b)?,
    }
    Ok(b)
}

/// Largest over smallest of positive finite values; infinite otherwise.
pub(crate) fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if lo > 0.0 && hi.is_finite() {
        hi / lo
    } else {
        f64::INFINITY
    }
}
