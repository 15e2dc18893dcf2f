use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lagns::config::{Level, Pipeline, Scenario};
use lagns::table::convergence_table;
use lagns::{run, ConfigError, RunOptions};

#[derive(Parser)]
#[command(name = "lagns", version, about = "Lagrangian compressible Navier-Stokes scenarios")]
struct Cli {
    /// Worker threads for independent trials and levels (reports do not
    /// depend on it).
    #[arg(long, global = true, env = "LAGNS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long, env = "LAGNS_CONFIG")]
    config: PathBuf,
    /// Output directory (default: the scenario's `out`, else out/<name>).
    #[arg(long, env = "LAGNS_OUT")]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, env = "LAGNS_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Picard solve of a `solve` scenario.
    Solve(Common),
    /// Estimate checks: verify-lemmas, verify-flow, verify-lame and controls.
    Verify(Common),
    /// Lagrangian to Eulerian mapping under refinement.
    Equivalence(Common),
    /// Reproducibility and perturbation sweeps.
    Stability(Common),
    /// Any scenario, whatever its pipeline.
    Run(Common),
    /// Convergence table of the scenario's refinement quantity.
    Table {
        #[command(flatten)]
        common: Common,
        /// Levels as `N:steps`, e.g. `--level 32:16 --level 64:32`.
        #[arg(long = "level", value_parser = parse_level)]
        levels: Vec<Level>,
    },
}

fn parse_level(s: &str) -> Result<Level, String> {
    let (n, steps) = s.split_once(':').ok_or_else(|| format!("expected N:steps, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok([p(n)?, p(steps)?])
}

fn accepts(cmd: &Command, p: Pipeline) -> bool {
    match cmd {
        Command::Solve(_) => p == Pipeline::Solve,
        Command::Verify(_) => matches!(
            p,
            Pipeline::VerifyLemmas | Pipeline::VerifyFlow | Pipeline::VerifyLame | Pipeline::Controls
        ),
        Command::Equivalence(_) => p == Pipeline::Equivalence,
        Command::Stability(_) => p == Pipeline::Stability,
        Command::Run(_) | Command::Table { .. } => true,
    }
}

fn load(common: &Common) -> Result<Scenario, ExitCode> {
    Scenario::load(&common.config).map_err(|e: ConfigError| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let common = match &cli.command {
        Command::Solve(c) | Command::Verify(c) | Command::Equivalence(c) | Command::Stability(c) | Command::Run(c) => c,
        Command::Table { common, .. } => common,
    };
    let sc = match load(common) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if !accepts(&cli.command, sc.pipeline) {
        eprintln!(
            "error: {}: pipeline `{}` does not belong to this subcommand",
            common.config.display(),
            sc.pipeline.name()
        );
        return ExitCode::from(2);
    }
    let opts = RunOptions {
        out: common.out.clone(),
        seed: common.seed,
    };
    if let Command::Table { levels, .. } = &cli.command {
        return match convergence_table(&sc, levels) {
            Ok(t) => {
                print!("{}", t.to_markdown());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        };
    }
    match run(&sc, &opts) {
        Ok(outcome) => {
            for g in &outcome.bundle.gates {
                println!("{} {}: {}", if g.passed { "pass" } else { "FAIL" }, g.id, g.detail);
            }
            println!("report: {}", outcome.out_dir.join("report.json").display());
            if outcome.exit_code() != 0 {
                eprintln!("violated gates: {}", outcome.bundle.failed_ids().join(", "));
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
