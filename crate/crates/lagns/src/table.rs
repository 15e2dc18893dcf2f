//! Convergence tables: errors against `(N, steps)` with observed orders.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Level, Pipeline, Scenario};
use crate::pipelines;

/// Errors at or below this are treated as exact.
pub const EXACT_FLOOR: f64 = 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("a convergence table needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("{levels} levels but {errors} errors")]
    Length { levels: usize, errors: usize },
    #[error("level {0:?} does not refine the previous one")]
    NotRefining(Level),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Order {
    Observed(f64),
    /// Both errors at machine precision.
    Exact(String),
}

impl Order {
    pub fn value(&self) -> Option<f64> {
        match self {
            Order::Observed(v) => Some(*v),
            Order::Exact(_) => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Order::Exact(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub n: usize,
    pub steps: usize,
    pub error: f64,
    /// Against the previous row; absent on the first.
    pub order: Option<Order>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub quantity: String,
    pub rows: Vec<Row>,
}

impl ConvergenceTable {
    /// Orders are `log2(e_prev / e) / log2(r)` with `r` the larger of the
    /// `N` and step ratios, so doubling both gives plain `log2` ratios.
    pub fn new(quantity: &str, levels: &[Level], errors: &[f64]) -> Result<Self, TableError> {
        if levels.len() < 2 {
            return Err(TableError::TooFewLevels(levels.len()));
        }
        if levels.len() != errors.len() {
            return Err(TableError::Length {
                levels: levels.len(),
                errors: errors.len(),
            });
        }
        let mut rows = Vec::with_capacity(levels.len());
        for (i, (&[n, steps], &error)) in levels.iter().zip(errors).enumerate() {
            let order = if i == 0 {
                None
            } else {
                let [pn, ps] = levels[i - 1];
                let r = (n as f64 / pn as f64).max(steps as f64 / ps as f64);
                if r.is_nan() || r <= 1.0 {
                    return Err(TableError::NotRefining([n, steps]));
                }
                let prev = errors[i - 1];
                Some(if prev <= EXACT_FLOOR && error <= EXACT_FLOOR {
                    Order::Exact("exact".into())
                } else {
                    Order::Observed((prev / error).log2() / r.log2())
                })
            };
            rows.push(Row { n, steps, error, order });
        }
        Ok(Self {
            quantity: quantity.into(),
            rows,
        })
    }

    pub fn orders(&self) -> Vec<&Order> {
        self.rows.iter().filter_map(|r| r.order.as_ref()).collect()
    }

    /// Ratios `e_prev / e` between successive rows.
    pub fn factors(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[0].error / w[1].error).collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| N | steps | {} | order |", self.quantity);
        let _ = writeln!(s, "|---|---|---|---|");
        for r in &self.rows {
            let order = match &r.order {
                None => String::new(),
                Some(Order::Exact(t)) => t.clone(),
                Some(Order::Observed(v)) => format!("{v:.3}"),
            };
            let _ = writeln!(s, "| {} | {} | {:.4e} | {} |", r.n, r.steps, r.error, order);
        }
        s
    }
}

/// Refinement levels a scenario declares itself.
fn own_levels(sc: &Scenario) -> Vec<Level> {
    match sc.pipeline {
        Pipeline::Solve => sc.solve.as_ref().map(|s| s.refinement.clone()).unwrap_or_default(),
        Pipeline::Equivalence => sc.equivalence.as_ref().map(|e| e.levels.clone()).unwrap_or_default(),
        Pipeline::VerifyLame => sc
            .lame
            .as_ref()
            .and_then(|l| l.manufactured.as_ref())
            .map(|m| m.steps.iter().map(|&s| [sc.grid.n, s]).collect())
            .unwrap_or_default(),
        _ => Vec::new(),
    }
}

/// Runs the scenario's refinement quantity at each level (the scenario's
/// own levels when `levels` is empty): the manufactured heat error or the
/// exact-mode error for `verify-lame`, the Lagrangian momentum residual for
/// `solve`, the Eulerian momentum residual for `equivalence`.
pub fn convergence_table(sc: &Scenario, levels: &[Level]) -> anyhow::Result<ConvergenceTable> {
    let levels = if levels.is_empty() { own_levels(sc) } else { levels.to_vec() };
    if levels.len() < 2 {
        return Err(TableError::TooFewLevels(levels.len()).into());
    }
    let grid_at = |n: usize| sc.grid.with_n(n).grid();
    let mut errors = Vec::with_capacity(levels.len());
    let quantity;
    match sc.pipeline {
        Pipeline::VerifyLame => {
            let lame = sc.lame.clone().unwrap_or_default();
            if let Some(m) = &lame.manufactured {
                quantity = "max error at T";
                let eps = sc.problem.density_amplitude.unwrap_or(0.2);
                for &[n, steps] in &levels {
                    errors.push(pipelines::manufactured_heat_error(grid_at(n)?, eps, m.horizon, steps)?);
                }
            } else if let Some(e) = &lame.exact {
                quantity = "exact mode error";
                let norms = lagns_core::lame::NormSpec {
                    params: lagns_core::BesovParams::solution(sc.grid.dim, sc.problem.p)?,
                    partition: sc.problem.partition()?,
                };
                for &[n, steps] in &levels {
                    errors.push(pipelines::exact_mode_error(grid_at(n)?, e, steps, &norms));
                }
            } else {
                anyhow::bail!("verify-lame scenario has neither [lame.manufactured] nor [lame.exact]");
            }
        }
        Pipeline::Solve => {
            quantity = "Lagrangian momentum residual";
            let s = sc.solve.as_ref().expect("validated");
            let (Some(r), Some(t)) = (s.radius, s.horizon) else {
                anyhow::bail!("a solve table needs a fixed radius and horizon");
            };
            for &level in &levels {
                errors.push(pipelines::lagrangian_residual_at(sc, level, s.modes[0], r, t)?);
            }
        }
        Pipeline::Equivalence => {
            quantity = "Eulerian momentum residual";
            let e = sc.equivalence.as_ref().expect("validated");
            for &level in &levels {
                errors.push(pipelines::mapped_residuals(sc, level, e.radius, e.horizon, e.inversion_tol, None)?.eulerian_momentum);
            }
        }
        p => anyhow::bail!("pipeline `{}` has no refinement quantity", p.name()),
    }
    Ok(ConvergenceTable::new(quantity, &levels, &errors)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_is_an_error() {
        assert_eq!(
            ConvergenceTable::new("e", &[[16, 8]], &[1.0]),
            Err(TableError::TooFewLevels(1))
        );
    }

    #[test]
    fn second_order_errors_give_order_two() {
        let t = ConvergenceTable::new("e", &[[16, 8], [32, 16], [64, 32]], &[1.6e-3, 4e-4, 1e-4]).unwrap();
        for o in t.orders() {
            assert!((o.value().unwrap() - 2.0).abs() < 1e-12);
        }
        assert!(t.to_markdown().contains("| 64 | 32 |"));
    }

    #[test]
    fn machine_precision_is_marked_exact() {
        let t = ConvergenceTable::new("e", &[[16, 4], [16, 8]], &[3e-16, 1e-16]).unwrap();
        assert!(t.orders()[0].is_exact());
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"exact\""));
    }

    #[test]
    fn non_refining_levels_are_rejected() {
        assert!(matches!(
            ConvergenceTable::new("e", &[[32, 16], [16, 8]], &[1.0, 2.0]),
            Err(TableError::NotRefining(_))
        ));
    }
}
