//! Picard solve of the Lagrangian system with its gates: contraction,
//! fixed-point residual, mass identity and residual refinement.

use std::path::Path;

use lagns_core::eulerian::lagrangian_residual;
use lagns_core::fixed_point::{
    estimate_exponential_constant, free_solution, picard_solve, reconstruct_density, select_ball_and_horizon,
    BallConfig, FluidProblem, Mode, PicardConfig, PicardOutcome, PicardStatus,
};
use lagns_core::lame::{explicit_step_limit, select_threshold, solve_variable_lame, ThresholdSelection, DEFAULT_CFL};
use lagns_core::{Rank, SpectralField};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Level, Scenario, SolveConfig};
use crate::presets::build_problem;
use crate::report::{Gate, ReportBundle};
use crate::snapshot::write_snapshot;
use crate::table::ConvergenceTable;

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::General => "general",
        Mode::Homogeneous => "homogeneous",
    }
}

pub(crate) fn picard_config(s: &SolveConfig, mode: Mode, radius: f64, horizon: f64, steps: usize) -> PicardConfig {
    PicardConfig {
        max_iters: s.max_iters,
        tol: s.tol,
        flag_ratio: s.max_ratio,
        eta: s.eta,
        smallness: s.smallness,
        ..PicardConfig::new(mode, radius, horizon, steps)
    }
}

/// Steps needed to respect the explicit step limit, at least `min`.
fn steps_for(horizon: f64, limit: f64, min: usize) -> usize {
    if limit.is_finite() {
        ((horizon / limit).ceil() as usize).max(min)
    } else {
        min
    }
}

#[derive(Serialize)]
struct ProblemSummary {
    n: usize,
    a0_norm: f64,
    ellipticity: f64,
    density_range: (f64, f64),
    velocity_max: f64,
    step_limit: f64,
}

#[derive(Serialize)]
struct Horizon {
    radius: f64,
    horizon: f64,
    steps: usize,
    selected: bool,
    exponential_constant: Option<f64>,
}

pub fn run(sc: &Scenario, out: &Path, b: &mut ReportBundle) -> anyhow::Result<()> {
    let s = sc.solve.clone().expect("validated");
    let grid = sc.grid.grid()?;
    let problem = match build_problem(grid, &sc.problem) {
        Ok(p) => p,
        Err(e) => {
            b.gate(Gate::error("problem setup", &e));
            return Ok(());
        }
    };
    let coeffs = problem.lame_coefficients()?;
    let limit = explicit_step_limit(&grid, coeffs.deviation(), DEFAULT_CFL);
    b.section(
        "problem",
        ProblemSummary {
            n: grid.n(),
            a0_norm: problem.a0_norm(),
            ellipticity: problem.alpha,
            density_range: (problem.rho0.min_value(), problem.rho0.max_value()),
            velocity_max: problem.u0.max_abs(),
            step_limit: limit,
        },
    );

    let mut threshold: Option<ThresholdSelection> = None;
    if s.modes.contains(&Mode::General) {
        match select_threshold(&coeffs, s.eta, problem.p, &problem.partition) {
            Ok(t) => {
                b.gate(Gate::check(
                    "threshold selection",
                    true,
                    format!("m = {}, rough part {:.3e} <= eta alpha", t.m, t.achieved_highfreq_norm),
                ));
                b.section("threshold", &t);
                threshold = Some(t);
            }
            Err(e) => b.gate(Gate::error("threshold selection", &e)),
        }
    }

    let ref_steps = steps_for(s.reference_horizon, limit, s.steps);
    if s.lame_probe {
        let probe = if problem.u0.max_abs() > 0.0 {
            problem.u0.clone()
        } else {
            SpectralField::from_fn(grid, Rank::Vector, |x, c| if c == 0 { x[1].sin() } else { x[0].cos() })
        };
        match solve_variable_lame(&coeffs, &probe, None, s.reference_horizon, ref_steps, threshold.as_ref(), &problem.norms()) {
            Ok(r) => b.gate(Gate::check(
                "variable lame estimate",
                r.decay_constant.is_finite() && r.decay_constant > 0.0,
                format!(
                    "fitted constant {:.4e} over T = {} with {ref_steps} steps",
                    r.decay_constant, s.reference_horizon
                ),
            )),
            Err(e) => b.gate(Gate::error("variable lame estimate", &e)),
        }
    }

    let horizon = match (s.radius, s.horizon) {
        (Some(r), Some(t)) => Horizon {
            radius: r,
            horizon: t,
            steps: s.steps,
            selected: false,
            exponential_constant: None,
        },
        _ => {
            let selection = estimate_exponential_constant(&problem, s.reference_horizon, ref_steps).and_then(|c| {
                let ul = free_solution(&problem, s.reference_horizon, ref_steps)?;
                let cfg = BallConfig {
                    eta: s.eta,
                    smallness: s.smallness,
                    radius: None,
                    exp_constant: c,
                };
                Ok((c, select_ball_and_horizon(&problem, &ul, &cfg)?))
            });
            match selection {
                Ok((c, sel)) => {
                    b.gate(Gate::check(
                        "ball and horizon selection",
                        true,
                        format!("R = {:.4e}, T = {:.4e} after {} halvings", sel.radius, sel.horizon, sel.halvings),
                    ));
                    b.section("ball selection", &sel);
                    Horizon {
                        radius: sel.radius,
                        horizon: sel.horizon,
                        steps: steps_for(sel.horizon, limit, s.steps),
                        selected: true,
                        exponential_constant: Some(c),
                    }
                }
                Err(e) => {
                    b.gate(Gate::error("ball and horizon selection", &e));
                    return Ok(());
                }
            }
        }
    };
    b.section("horizon", &horizon);

    let runs: Vec<(Mode, lagns_core::Result<PicardOutcome>)> = s
        .modes
        .par_iter()
        .map(|&m| {
            let cfg = picard_config(&s, m, horizon.radius, horizon.horizon, horizon.steps);
            (m, picard_solve(&problem, &cfg))
        })
        .collect();
    for (i, (mode, run)) in runs.into_iter().enumerate() {
        let tag = mode_name(mode);
        match run {
            Ok(o) => {
                picard_gates(&s, &problem, &o, tag, b);
                if s.snapshots && i == 0 {
                    let dir = out.join("snapshots");
                    let u = o.solution.u.last();
                    write_snapshot(&dir, &format!("{tag}_u_final"), u, horizon.horizon)?;
                    if let Ok(d) = reconstruct_density(&o.solution.u, &problem) {
                        write_snapshot(&dir, &format!("{tag}_rho_final"), d.rho.last(), horizon.horizon)?;
                    }
                }
            }
            Err(e) => b.gate(Gate::error(&format!("picard converged [{tag}]"), &e)),
        }
    }

    if !s.refinement.is_empty() {
        let mode = s.modes[0];
        let res: anyhow::Result<Vec<f64>> = s
            .refinement
            .par_iter()
            .map(|&level| lagrangian_residual_at(sc, level, mode, horizon.radius, horizon.horizon))
            .collect();
        let table = res.and_then(|r| Ok(ConvergenceTable::new("Lagrangian momentum residual", &s.refinement, &r)?));
        match table {
            Ok(t) => {
                let factor = t.factors().into_iter().fold(f64::INFINITY, f64::min);
                if let Some(min) = s.min_refinement_factor {
                    b.gate(Gate::at_least(
                        "lagrangian residual refinement",
                        factor,
                        min,
                        "smallest residual ratio when (N, steps) double",
                    ));
                }
                b.section("lagrangian residual table", t.to_markdown());
                b.section("lagrangian residual refinement", &t);
            }
            Err(e) => b.gate(Gate::error("lagrangian residual refinement", &e)),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ModeSummary<'a> {
    state: &'a lagns_core::fixed_point::IterationState,
    mass_defect: Option<f64>,
    lagrangian_momentum: Option<f64>,
    lagrangian_mass: Option<f64>,
}

fn picard_gates(s: &SolveConfig, problem: &FluidProblem, o: &PicardOutcome, tag: &str, b: &mut ReportBundle) {
    let st = &o.state;
    b.gate(Gate::check(
        &format!("picard converged [{tag}]"),
        st.status == PicardStatus::Converged,
        format!("{:?} after {} iterations (cap {})", st.status, st.iterations(), s.max_iters),
    ));
    b.gate(Gate::at_most(
        &format!("contraction ratios [{tag}]"),
        st.max_ratio(),
        s.max_ratio,
        format!("{} recorded ratios", st.contraction_ratios.len()),
    ));
    let incs: Vec<f64> = st.iterates.iter().map(|r| r.increment).collect();
    b.gate(Gate::check(
        &format!("increments decrease [{tag}]"),
        incs.windows(2).all(|w| w[1] <= w[0]),
        incs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "),
    ));
    if let Some(tol) = s.residual_tol {
        b.gate(Gate::at_most(
            &format!("fixed-point residual [{tag}]"),
            st.fixed_point_residual,
            tol,
            "|Phi(u) - u| in E_p",
        ));
    }
    let mut summary = ModeSummary {
        state: st,
        mass_defect: None,
        lagrangian_momentum: None,
        lagrangian_mass: None,
    };
    match reconstruct_density(&o.solution.u, problem)
        .and_then(|d| Ok((d.mass_defect, lagrangian_residual(&d.rho, &o.solution.u, &d.flow, problem)?)))
    {
        Ok((defect, res)) => {
            summary.mass_defect = Some(defect);
            summary.lagrangian_momentum = Some(res.momentum.max());
            summary.lagrangian_mass = Some(res.mass.max());
            if let Some(tol) = s.mass_tol {
                b.gate(Gate::at_most(&format!("mass identity [{tag}]"), defect, tol, "max |J rho_bar - rho0|"));
            }
            if let Some(tol) = s.lagrangian_tol {
                b.gate(Gate::at_most(
                    &format!("lagrangian residual [{tag}]"),
                    res.momentum.max().max(res.mass.max()),
                    tol,
                    "largest L2 momentum or mass residual over the samples",
                ));
            }
        }
        Err(e) => b.gate(Gate::error(&format!("density reconstruction [{tag}]"), &e)),
    }
    b.section(&format!("picard [{tag}]"), &summary);
}

/// Largest Lagrangian momentum residual of the converged solution at one
/// refinement level, on a fixed `(R, T)`.
pub fn lagrangian_residual_at(sc: &Scenario, level: Level, mode: Mode, radius: f64, horizon: f64) -> anyhow::Result<f64> {
    let s = sc.solve.clone().unwrap_or_else(|| default_solve(radius, horizon));
    let [n, steps] = level;
    let problem = build_problem(sc.grid.with_n(n).grid()?, &sc.problem)?;
    let out = picard_solve(&problem, &picard_config(&s, mode, radius, horizon, steps))?;
    let d = reconstruct_density(&out.solution.u, &problem)?;
    Ok(lagrangian_residual(&d.rho, &out.solution.u, &d.flow, &problem)?.momentum.max())
}

pub(crate) fn default_solve(radius: f64, horizon: f64) -> SolveConfig {
    let text = format!("radius = {radius:e}\nhorizon = {horizon:e}\n");
    toml::from_str(&text).expect("defaults fill every other field")
}
