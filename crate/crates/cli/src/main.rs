use std::path::{Path, PathBuf};
use std::process::ExitCode;

use caginalp::config::parse_config;
use caginalp::driver::{self, DriverError, RunOptions, Status};
use caginalp::scenario::ScenarioConfig;
use clap::{Args, Parser, Subcommand};

/// Two-domain phase-field (Caginalp) solver.
///
/// Exit codes: 0 success, 1 configuration error, 2 solver failure,
/// 3 I/O failure.
#[derive(Parser)]
#[command(name = "caginalp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario; writes diagnostics.csv, snap_<step>.vtk, summary.txt
    Run(Common),
    /// Build and validate the mesh; writes mesh_check.txt and mesh.vtk
    MeshCheck(Common),
    /// Continuous-dependence ladder; writes perturbation_*.csv, perturbation.txt
    PerturbationStudy(Common),
    /// Stepper vs. reference integrator; writes convergence.csv, convergence.txt
    ConvergenceStudy(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (`key = value` lines)
    config: PathBuf,
    /// Overrides `output.dir`
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `threads` (1 = bitwise reproducible, 0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// No progress output
    #[arg(long)]
    quiet: bool,
}

fn load(c: &Common) -> Result<ScenarioConfig, (Status, String)> {
    let text = std::fs::read_to_string(&c.config)
        .map_err(|e| (Status::IoFailure, format!("cannot read {}: {e}", c.config.display())))?;
    let mut cfg = parse_config(&text).map_err(|errs| {
        let lines: Vec<String> = errs.iter().map(|e| format!("  {}: {e}", c.config.display())).collect();
        (Status::ConfigError, format!("invalid configuration:\n{}", lines.join("\n")))
    })?;
    if let Some(d) = &c.output_dir {
        cfg.output.dir = d.clone();
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn report(quiet: bool, dir: &Path, what: &str) {
    if !quiet {
        eprintln!("{what}; outputs in {}", dir.display());
    }
}

fn execute(cli: Cli) -> Result<(), (Status, String)> {
    let fail = |e: DriverError| (e.status(), e.to_string());
    match cli.command {
        Command::Run(c) => {
            let cfg = load(&c)?;
            let s = driver::run_scenario(&cfg, RunOptions { quiet: c.quiet }).map_err(fail)?;
            report(
                c.quiet,
                &cfg.output.dir,
                &format!("{} steps, final frozen fraction {:.4}", s.steps, s.frozen_fraction),
            );
        }
        Command::MeshCheck(c) => {
            let cfg = load(&c)?;
            driver::mesh_check(&cfg).map_err(fail)?;
            report(c.quiet, &cfg.output.dir, "mesh valid");
        }
        Command::PerturbationStudy(c) => {
            let cfg = load(&c)?;
            let res = driver::perturbation_driver(&cfg).map_err(fail)?;
            for (name, slope) in res {
                let s = slope.map_or("undefined (exact-zero differences)".into(), |v| format!("{v:.3}"));
                report(c.quiet, &cfg.output.dir, &format!("{name}: minimum slope {s}"));
            }
        }
        Command::ConvergenceStudy(c) => {
            let cfg = load(&c)?;
            let r = driver::convergence_driver(&cfg).map_err(fail)?;
            report(c.quiet, &cfg.output.dir, &format!("error ratios {:?}", r.error_ratios()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((status, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(status.code() as u8)
        }
    }
}
