//! Scenario runner for `lagns-core`: TOML scenarios, the verification
//! pipelines, JSON/Markdown reports and binary field snapshots.

pub mod config;
pub mod pipelines;
pub mod presets;
pub mod report;
pub mod snapshot;
pub mod table;

use std::path::{Path, PathBuf};

pub use config::{ConfigError, Pipeline, Scenario};
pub use report::{Gate, ReportBundle};

/// Command-line overrides of a scenario.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub bundle: ReportBundle,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    /// 0 iff every gate passed.
    pub fn exit_code(&self) -> i32 {
        if self.bundle.passed() {
            0
        } else {
            1
        }
    }
}

/// Output directory: the override, else the scenario's `out`, else
/// `out/<name>`.
pub fn output_dir(scenario: &Scenario, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| scenario.out.clone())
        .unwrap_or_else(|| Path::new("out").join(&scenario.name))
}

/// Runs a parsed scenario and writes its report bundle. Numerical failures
/// become failed gates; only IO problems are errors.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> anyhow::Result<RunOutcome> {
    let mut sc = scenario.clone();
    if let Some(seed) = opts.seed {
        sc.seed = seed;
    }
    let out_dir = output_dir(&sc, opts);
    std::fs::create_dir_all(&out_dir)?;
    let bundle = pipelines::execute(&sc, &out_dir)?;
    bundle.write(&out_dir)?;
    Ok(RunOutcome { bundle, out_dir })
}

/// Loads `path` and runs it.
pub fn run_scenario(path: &Path, opts: &RunOptions) -> anyhow::Result<RunOutcome> {
    let sc = Scenario::load(path)?;
    run(&sc, opts)
}
