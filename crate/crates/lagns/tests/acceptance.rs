//! Runs the shipped scenario of every acceptance criterion and prints one
//! line per criterion. Run with `--nocapture` to see the lines.

use std::io::Write;
use std::path::PathBuf;

use lagns::config::Scenario;
use lagns::{run, ReportBundle, RunOptions};

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

struct Criterion {
    number: u32,
    file: &'static str,
    /// Gates that must be present, so a pipeline that skips a check cannot
    /// pass vacuously.
    required: &'static [&'static str],
    /// Control scenario: the listed gates must fail instead.
    control: bool,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        number: 1,
        file: "01_exact_lame.toml",
        required: &["exact mode decay", "exact mode order column"],
        control: false,
    },
    Criterion {
        number: 2,
        file: "02_estimate_universality.toml",
        required: &["estimate universality"],
        control: false,
    },
    Criterion {
        number: 3,
        file: "03_lp_soundness.toml",
        required: &["partition of unity", "bony identity", "interpolation inequality"],
        control: false,
    },
    Criterion {
        number: 4,
        file: "04_lemma_harness.toml",
        required: &[
            "product estimate",
            "product constant drift",
            "commutator estimate",
            "commutator constant drift",
            "multiplier commutator estimate",
            "multiplier commutator constant drift",
        ],
        control: false,
    },
    Criterion {
        number: 5,
        file: "05_flow_algebra.toml",
        required: &[
            "adjugate expansion exact in 2d",
            "adjugate equals J times inverse",
            "quadratic adjugate term slope in 3d",
            "jacobian integral form order",
        ],
        control: false,
    },
    Criterion {
        number: 6,
        file: "06_flow_estimates.toml",
        required: &["flow estimates hold", "U3 quadratic slope", "U4 quadratic slope"],
        control: false,
    },
    Criterion {
        number: 7,
        file: "07_contraction.toml",
        required: &[
            "picard converged [general]",
            "contraction ratios [general]",
            "increments decrease [general]",
            "picard converged [homogeneous]",
            "contraction ratios [homogeneous]",
            "increments decrease [homogeneous]",
        ],
        control: false,
    },
    Criterion {
        number: 8,
        file: "08_fixed_point.toml",
        required: &[
            "picard converged [general]",
            "fixed-point residual [general]",
            "mass identity [general]",
            "lagrangian residual refinement",
        ],
        control: false,
    },
    Criterion {
        number: 9,
        file: "09_equivalence.toml",
        required: &["eulerian momentum order", "eulerian mass order", "lagrangian eulerian round trip"],
        control: false,
    },
    Criterion {
        number: 10,
        file: "10_stability.toml",
        required: &["bitwise rerun", "lipschitz slope [velocity]", "lipschitz slope [density]"],
        control: false,
    },
    Criterion {
        number: 11,
        file: "11_rough_density.toml",
        required: &[
            "threshold selection",
            "variable lame estimate",
            "ball and horizon selection",
            "picard converged [general]",
        ],
        control: false,
    },
    Criterion {
        number: 12,
        file: "12_controls.toml",
        required: &["flow nondegenerate", "eulerian residual small"],
        control: true,
    },
];

fn judge(c: &Criterion, sc: &Scenario, b: &ReportBundle) -> Result<String, String> {
    let missing: Vec<&str> = c.required.iter().copied().filter(|id| b.find(id).is_none()).collect();
    if !missing.is_empty() {
        return Err(format!("missing gates {missing:?}"));
    }
    if c.control {
        let expected = &sc.controls.as_ref().expect("control block").expect_failures;
        let failed = b.failed_ids();
        if failed.len() != expected.len() || !expected.iter().all(|e| failed.contains(&e.as_str())) {
            return Err(format!("failed gates {failed:?}, expected {expected:?}"));
        }
        let degenerate = b.find("flow nondegenerate").expect("required");
        if !degenerate.detail.contains("flow map degenerate") {
            return Err(format!("wrong diagnostic: {}", degenerate.detail));
        }
        return Ok(format!("designated gates fail: {}", failed.join(", ")));
    }
    if b.passed() {
        Ok(format!("{} gates pass", b.gates.len()))
    } else {
        let why: Vec<String> = b
            .gates
            .iter()
            .filter(|g| !g.passed)
            .map(|g| format!("{} ({})", g.id, g.detail))
            .collect();
        Err(why.join("; "))
    }
}

#[test]
fn acceptance_criteria() {
    let out = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for c in CRITERIA {
        let path = scenario_dir().join(c.file);
        let start = std::time::Instant::now();
        let verdict = Scenario::load(&path).map_err(|e| e.to_string()).and_then(|sc| {
            let opts = RunOptions {
                out: Some(out.path().join(&sc.name)),
                seed: None,
            };
            let outcome = run(&sc, &opts).map_err(|e| format!("{e:#}"))?;
            judge(c, &sc, &outcome.bundle)
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match verdict {
            Ok(msg) => format!("criterion {}: PASS [{}] {msg} ({secs:.1} s)\n", c.number, c.file),
            Err(msg) => {
                failures.push(c.number);
                format!("criterion {}: FAIL [{}] {msg} ({secs:.1} s)\n", c.number, c.file)
            }
        };
        // straight to the stream, past the harness capture, so the verdicts
        // show up in a plain `cargo test` log
        let _ = std::io::stderr().write_all(line.as_bytes());
    }
    assert!(failures.is_empty(), "failing criteria: {failures:?}");
}

#[test]
fn every_criterion_has_exactly_one_scenario_file() {
    let mut numbered: Vec<String> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".toml") && n.as_bytes()[0].is_ascii_digit())
        .collect();
    numbered.sort();
    let listed: Vec<&str> = CRITERIA.iter().map(|c| c.file).collect();
    assert_eq!(numbered, listed);
    for c in CRITERIA {
        Scenario::load(&scenario_dir().join(c.file)).unwrap();
    }
}
