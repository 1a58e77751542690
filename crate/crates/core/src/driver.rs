//! File-producing drivers behind the command-line subcommands.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::diagnostics::{transition_width, vertical_profile, Monitor, CSV_HEADER};
use crate::error::Error;
use crate::geometry::{build_nested_rect_mesh, validate_mesh, EdgeTag, Region};
use crate::oracle::{compare_trajectories, reference_integrate};
use crate::par;
use crate::scenario::{Problem, ScenarioConfig};
use crate::vtk;
use crate::wellposedness::{perturbation_study, Component, PerturbationSpec};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    ConfigError = 1,
    SolverFailure = 2,
    IoFailure = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub enum DriverError {
    Config(String),
    Solver(Error),
    Io(PathBuf, io::Error),
}

impl DriverError {
    pub fn status(&self) -> Status {
        match self {
            Self::Config(_) => Status::ConfigError,
            Self::Solver(_) => Status::SolverFailure,
            Self::Io(..) => Status::IoFailure,
        }
    }
}

impl std::fmt::Display for DriverError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Solver(e) => write!(f, "solver failure: {e}"),
            Self::Io(p, e) => write!(f, "I/O failure on {}: {e}", p.display()),
        }
    }
}

impl std::error::Error for DriverError {}

type DResult<T> = std::result::Result<T, DriverError>;

/// Progress output control.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub quiet: bool,
}

fn io_at<T>(path: &Path, r: io::Result<T>) -> DResult<T> {
    r.map_err(|e| DriverError::Io(path.to_path_buf(), e))
}

fn write_file(path: &Path, contents: &str) -> DResult<()> {
    io_at(path, fs::write(path, contents))
}

fn prepare(cfg: &ScenarioConfig) -> DResult<Problem> {
    let dir = &cfg.output.dir;
    io_at(dir, fs::create_dir_all(dir))?;
    cfg.build().map_err(|e| DriverError::Config(e.to_string()))
}

/// What a finished (or failed) run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub t_final: f64,
    pub frozen_fraction: f64,
    pub snapshots: usize,
    /// Width of the 0.9 → −0.9 layer along the vertical midline, taken at
    /// the first step with at least half the medium frozen.
    pub half_frozen_width: Option<f64>,
    pub failure: Option<String>,
}

fn snapshot(dir: &Path, step: usize, mesh: &crate::geometry::Mesh, st: &crate::stepper::FieldState) -> DResult<()> {
    let path = dir.join(format!("snap_{step}.vtk"));
    let mut w = BufWriter::new(io_at(&path, File::create(&path))?);
    io_at(&path, vtk::write_snapshot(&mut w, mesh, st).and_then(|_| w.flush()))
}

/// `run`: diagnostics.csv, snapshots every `stride` steps (plus step 0),
/// summary.txt. Outputs written before a solver failure are kept.
pub fn run_scenario(cfg: &ScenarioConfig, opts: RunOptions) -> DResult<RunSummary> {
    let problem = prepare(cfg)?;
    par::with_threads(cfg.threads, || run_problem(cfg, &problem, opts))
}

fn run_problem(cfg: &ScenarioConfig, problem: &Problem, opts: RunOptions) -> DResult<RunSummary> {
    let dir = cfg.output.dir.as_path();
    let clock = Instant::now();
    let stride = cfg.output.snapshot_stride;
    let total = problem.stepper.step_count(problem.params.t_end);

    let csv_path = dir.join("diagnostics.csv");
    let mut csv = BufWriter::new(io_at(&csv_path, File::create(&csv_path))?);
    let mut mon = Monitor::new(&problem.initial, &problem.params, &problem.ops);
    io_at(&csv_path, writeln!(csv, "{CSV_HEADER}\n{}", mon.last().csv_row()))?;
    snapshot(dir, 0, &problem.mesh, &problem.initial)?;

    let mut summary = RunSummary {
        steps: 0,
        t_final: 0.0,
        frozen_fraction: mon.last().frozen_fraction,
        snapshots: 1,
        half_frozen_width: None,
        failure: None,
    };
    let midline = 0.5 * cfg.mesh.outer_width;
    let mut half_frozen_seen = false;
    // I/O errors inside the hook are parked and surfaced after the run
    let mut io_err: Option<DriverError> = None;
    let result = problem.run(|k, prev, cur| {
        let rec = mon.observe(prev, cur, &problem.ops);
        summary.steps = k;
        summary.t_final = cur.t;
        summary.frozen_fraction = rec.frozen_fraction;
        if !half_frozen_seen && rec.frozen_fraction >= 0.5 {
            half_frozen_seen = true;
            let prof = vertical_profile(&problem.mesh, &cur.phi, midline, 1e-9 * cfg.mesh.outer_width);
            summary.half_frozen_width = transition_width(&prof, 0.9, -0.9);
        }
        if io_err.is_some() {
            return;
        }
        if let Err(e) = io_at(&csv_path, writeln!(csv, "{}", rec.csv_row())) {
            io_err = Some(e);
            return;
        }
        if k % stride == 0 {
            match snapshot(dir, k, &problem.mesh, cur) {
                Ok(()) => summary.snapshots += 1,
                Err(e) => io_err = Some(e),
            }
        }
        if !opts.quiet && (k % (total / 10).max(1) == 0) {
            eprintln!("step {k}/{total}  t = {:.4}  frozen = {:.3}", cur.t, rec.frozen_fraction);
        }
    });
    io_at(&csv_path, csv.flush())?;
    if let Some(e) = io_err {
        return Err(e);
    }
    if let Err(e) = &result {
        let step = match e {
            Error::Step { step, .. } => *step,
            _ => summary.steps + 1,
        };
        summary.failure = Some(format!("step {step}: {e}"));
    }

    let mut text = String::new();
    let _ = writeln!(text, "status = {}", if summary.failure.is_none() { "ok" } else { "failed" });
    let _ = writeln!(text, "steps = {}", summary.steps);
    let _ = writeln!(text, "t_final = {}", summary.t_final);
    let _ = writeln!(text, "frozen_fraction = {}", summary.frozen_fraction);
    let _ = writeln!(text, "snapshots = {}", summary.snapshots);
    if let Some(w) = summary.half_frozen_width {
        let _ = writeln!(text, "half_frozen_layer_width = {w}");
    }
    let _ = writeln!(text, "nodes = {}", problem.mesh.n_nodes());
    let _ = writeln!(text, "omega_nodes = {}", problem.mesh.n_omega());
    let _ = writeln!(text, "wall_clock_s = {:.3}", clock.elapsed().as_secs_f64());
    if let Some(f) = &summary.failure {
        let _ = writeln!(text, "failure = {f}");
    }
    write_file(&dir.join("summary.txt"), &text)?;
    match result {
        Ok(_) => Ok(summary),
        Err(e) => Err(DriverError::Solver(e)),
    }
}

/// `mesh-check`: validates the triangulation, writes mesh_check.txt and
/// mesh.vtk. Any violation is a solver-side failure.
pub fn mesh_check(cfg: &ScenarioConfig) -> DResult<usize> {
    let dir = &cfg.output.dir;
    io_at(dir, fs::create_dir_all(dir))?;
    cfg.mesh.validate().map_err(|e| DriverError::Config(e.to_string()))?;
    let mesh = build_nested_rect_mesh(&cfg.mesh).map_err(|e| DriverError::Config(e.to_string()))?;
    let violations = validate_mesh(&mesh);
    let mut text = String::new();
    let _ = writeln!(text, "nodes = {}", mesh.n_nodes());
    let _ = writeln!(text, "omega_nodes = {}", mesh.n_omega());
    let _ = writeln!(text, "triangles = {}", mesh.triangles.len());
    let _ = writeln!(text, "area_medium = {}", mesh.region_area(Region::Medium));
    let _ = writeln!(text, "area_wall = {}", mesh.region_area(Region::Wall));
    let _ = writeln!(text, "outer_edges = {}", mesh.edges_with_tag(EdgeTag::Outer).count());
    let _ = writeln!(text, "interface_edges = {}", mesh.edges_with_tag(EdgeTag::Interface).count());
    let _ = writeln!(text, "max_edge = {}", mesh.max_edge_length());
    let _ = writeln!(text, "violations = {}", violations.len());
    for v in &violations {
        let _ = writeln!(text, "  {v}");
    }
    write_file(&dir.join("mesh_check.txt"), &text)?;
    let path = dir.join("mesh.vtk");
    let mut w = BufWriter::new(io_at(&path, File::create(&path))?);
    io_at(&path, vtk::write_mesh(&mut w, &mesh, "caginalp mesh").and_then(|_| w.flush()))?;
    if violations.is_empty() {
        Ok(0)
    } else {
        Err(DriverError::Solver(Error::MeshSpec(format!(
            "{} mesh violations (first: {})",
            violations.len(),
            violations[0]
        ))))
    }
}

/// `perturbation-study`: one ladder per data component with a nonzero
/// amplitude (all three reported as zero if none is). Writes
/// perturbation_<component>.csv and perturbation.txt.
pub fn perturbation_driver(cfg: &ScenarioConfig) -> DResult<Vec<(String, Option<f64>)>> {
    let problem = prepare(cfg)?;
    let pt = &cfg.perturbation;
    let spec = PerturbationSpec {
        eps_u0: pt.eps_u0,
        eps_phi0: pt.eps_phi0,
        eps_g: pt.eps_g,
        ladder: pt.ladder.clone(),
    };
    spec.validate().map_err(|e| DriverError::Config(e.to_string()))?;
    let studies: Vec<(String, PerturbationSpec)> = if spec.is_zero() {
        vec![("all".into(), spec.clone())]
    } else {
        Component::ALL
            .iter()
            .map(|c| (c.name().to_string(), spec.only(*c)))
            .filter(|(_, s)| !s.is_zero())
            .collect()
    };
    let mut text = String::new();
    let mut out = Vec::new();
    for (name, s) in studies {
        let report = par::with_threads(cfg.threads, || perturbation_study(&problem, &s)).map_err(DriverError::Solver)?;
        write_file(&cfg.output.dir.join(format!("perturbation_{name}.csv")), &report.to_csv())?;
        let _ = writeln!(text, "[{name}]");
        text.push_str(&report.summary());
        out.push((name, report.min_slope()));
    }
    write_file(&cfg.output.dir.join("perturbation.txt"), &text)?;
    Ok(out)
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub err_l2_u: f64,
    pub err_h1_phi: f64,
    pub energy_residual: f64,
    pub chain_residual: f64,
    pub free_energy_change: f64,
}

impl ConvergenceRow {
    pub fn error(&self) -> f64 {
        self.err_l2_u + self.err_h1_phi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Largest nodal change of the oracle's final state when its substep is
    /// halved.
    pub oracle_self_change: f64,
}

fn ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[0] / w[1]).collect()
}

impl ConvergenceReport {
    pub fn error_ratios(&self) -> Vec<f64> {
        ratios(&self.rows.iter().map(|r| r.error()).collect::<Vec<_>>())
    }

    pub fn energy_ratios(&self) -> Vec<f64> {
        ratios(&self.rows.iter().map(|r| r.energy_residual).collect::<Vec<_>>())
    }

    pub fn chain_ratios(&self) -> Vec<f64> {
        ratios(&self.rows.iter().map(|r| r.chain_residual).collect::<Vec<_>>())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dt,err_l2_u,err_h1_phi,error,energy_residual,chain_residual,free_energy_change\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.dt,
                r.err_l2_u,
                r.err_h1_phi,
                r.error(),
                r.energy_residual,
                r.chain_residual,
                r.free_energy_change
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let fmt = |v: Vec<f64>| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let _ = writeln!(s, "oracle_self_change = {:e}", self.oracle_self_change);
        let _ = writeln!(s, "error_ratios = {}", fmt(self.error_ratios()));
        let _ = writeln!(s, "energy_residual_ratios = {}", fmt(self.energy_ratios()));
        let _ = writeln!(s, "chain_residual_ratios = {}", fmt(self.chain_ratios()));
        if let Some(r) = self.rows.last() {
            let rel = r.energy_residual / r.free_energy_change.abs();
            let _ = writeln!(s, "finest_energy_residual_relative = {rel:e}");
        }
        s
    }
}

/// Errors of the stepper against the oracle and the energy / chain-rule
/// residuals at each `dt`. The oracle runs at `substep` and again at twice
/// that to measure its own convergence.
pub fn convergence_study(problem: &Problem, dts: &[f64], oracle: crate::oracle::OracleConfig) -> Result<ConvergenceReport, Error> {
    let (mesh, ops, params, g) = (&problem.mesh, &problem.ops, &problem.params, &problem.g);
    let reference = reference_integrate(&problem.initial, &oracle, params, mesh, ops, g)?;
    let coarse_cfg = crate::oracle::OracleConfig {
        substep: 2.0 * oracle.substep,
        ..oracle
    };
    let coarse = reference_integrate(&problem.initial, &coarse_cfg, params, mesh, ops, g)?;
    let oracle_self_change = match (reference.last(), coarse.last()) {
        (Some(a), Some(b)) => a.max_abs_diff(b),
        _ => 0.0,
    };
    let mut rows = Vec::new();
    for &dt in dts {
        let p = problem.with_dt(dt);
        let mut traj = vec![p.initial.clone()];
        let mut mon = Monitor::new(&p.initial, params, ops);
        p.run(|_, prev, cur| {
            mon.observe(prev, cur, ops);
            traj.push(cur.clone());
        })?;
        let err = compare_trajectories(&reference, &traj, ops)?;
        let recs = mon.records();
        let (first, last) = (recs[0], recs[recs.len() - 1]);
        rows.push(ConvergenceRow {
            dt,
            err_l2_u: err.max_l2_u,
            err_h1_phi: err.max_h1_phi,
            energy_residual: last.energy_residual,
            chain_residual: last.chain_residual,
            free_energy_change: last.free_energy - first.free_energy,
        });
    }
    Ok(ConvergenceReport { rows, oracle_self_change })
}

/// `convergence-study`: writes convergence.csv and convergence.txt.
pub fn convergence_driver(cfg: &ScenarioConfig) -> DResult<ConvergenceReport> {
    let problem = prepare(cfg)?;
    let cv = &cfg.convergence;
    if cv.dts.is_empty() || cv.dts.iter().any(|d| !(*d > 0.0)) {
        return Err(DriverError::Config("convergence.dts must be positive".into()));
    }
    let report = par::with_threads(cfg.threads, || convergence_study(&problem, &cv.dts, cv.oracle()))
        .map_err(DriverError::Solver)?;
    write_file(&cfg.output.dir.join("convergence.csv"), &report.to_csv())?;
    write_file(&cfg.output.dir.join("convergence.txt"), &report.summary())?;
    Ok(report)
}

/// Reads a diagnostics.csv back (header checked).
pub fn read_diagnostics(path: &Path) -> DResult<Vec<crate::diagnostics::DiagnosticsRecord>> {
    let text = io_at(path, fs::read_to_string(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(DriverError::Config(format!("{} lacks the diagnostics header", path.display())));
    }
    let mut out = Vec::new();
    for (i, l) in lines.enumerate() {
        let v: Vec<f64> = l
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| DriverError::Config(format!("bad number on data row {}", i + 1)))?;
        if v.len() != 9 {
            return Err(DriverError::Config(format!("data row {} has {} fields", i + 1, v.len())));
        }
        out.push(crate::diagnostics::DiagnosticsRecord {
            t: v[0],
            free_energy: v[1],
            l2_u: v[2],
            h1_phi: v[3],
            bnd_flux_accum: v[4],
            phidot_accum: v[5],
            frozen_fraction: v[6],
            energy_residual: v[7],
            chain_residual: v[8],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{self, BoundaryPreset};

    fn cfg_in(dir: &Path) -> ScenarioConfig {
        let mut c = scenario::equilibrium();
        c.output.dir = dir.to_path_buf();
        c.params.t_end = 0.05;
        c.output.snapshot_stride = 7;
        c.threads = 1;
        c
    }

    #[test]
    fn run_writes_expected_files() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg_in(tmp.path());
        let s = run_scenario(&c, RunOptions { quiet: true }).unwrap();
        assert_eq!(s.steps, 50);
        // floor(50 / 7) + 1
        assert_eq!(s.snapshots, 8);
        let snaps = fs::read_dir(tmp.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("snap_"))
            .count();
        assert_eq!(snaps, 8);
        assert!(tmp.path().join("snap_49.vtk").exists());
        let recs = read_diagnostics(&tmp.path().join("diagnostics.csv")).unwrap();
        assert_eq!(recs.len(), 51);
        let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
        assert!(summary.contains("status = ok"));
        assert!(summary.contains("steps = 50"));
        assert!(summary.contains("wall_clock_s"));
    }

    #[test]
    fn equilibrium_snapshots_match_the_first() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg_in(tmp.path());
        run_scenario(&c, RunOptions { quiet: true }).unwrap();
        let body = |name: &str| {
            let t = fs::read_to_string(tmp.path().join(name)).unwrap();
            // drop the title line, which carries the time
            t.lines().skip(2).collect::<Vec<_>>().join("\n")
        };
        let first = body("snap_0.vtk");
        assert_eq!(body("snap_14.vtk"), first);
        assert_eq!(body("snap_49.vtk"), first);
    }

    #[test]
    fn solver_failure_keeps_partial_output() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = cfg_in(tmp.path());
        c.boundary = BoundaryPreset::Ramp {
            start: 0.0,
            rate: 1.0,
            floor: None,
        };
        c.stepper.linsolve_maxit = 1;
        let err = run_scenario(&c, RunOptions { quiet: true }).unwrap_err();
        assert_eq!(err.status(), Status::SolverFailure);
        let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
        assert!(summary.contains("status = failed"));
        assert!(summary.contains("failure = step 1"), "{summary}");
        assert!(tmp.path().join("snap_0.vtk").exists());
        assert_eq!(read_diagnostics(&tmp.path().join("diagnostics.csv")).unwrap().len(), 1);
    }

    #[test]
    fn unwritable_output_is_an_io_failure() {
        let tmp = tempfile::tempdir().unwrap();
        let blocker = tmp.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let c = cfg_in(&blocker.join("sub"));
        let err = run_scenario(&c, RunOptions { quiet: true }).unwrap_err();
        assert_eq!(err.status(), Status::IoFailure);
    }

    #[test]
    fn mesh_check_reports_clean_mesh() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg_in(tmp.path());
        assert_eq!(mesh_check(&c).unwrap(), 0);
        let text = fs::read_to_string(tmp.path().join("mesh_check.txt")).unwrap();
        assert!(text.contains("violations = 0"));
        assert!(tmp.path().join("mesh.vtk").exists());
    }

    #[test]
    fn zero_amplitude_study_reports_exact_zeros() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = cfg_in(tmp.path());
        c.params.t_end = 0.01;
        c.perturbation.eps_u0 = 0.0;
        c.perturbation.eps_phi0 = 0.0;
        c.perturbation.eps_g = 0.0;
        let out = perturbation_driver(&c).unwrap();
        assert_eq!(out, vec![("all".to_string(), None)]);
        let text = fs::read_to_string(tmp.path().join("perturbation.txt")).unwrap();
        assert!(text.contains("exact-zero"));
    }

    #[test]
    fn uniform_reduction_converges_at_first_order() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = cfg_in(tmp.path());
        // insulated, uniform start, no freezing
        c.mesh = crate::geometry::MeshSpec {
            outer_width: 1.0,
            outer_height: 1.0,
            wall_thickness: 0.25,
            target_h: 0.25,
        };
        c.params.lambda_bc = 0.0;
        c.params.t_end = 0.1;
        c.initial = scenario::InitialCondition::Constant { u0: 0.3, phi0: 0.2 };
        c.convergence.dts = vec![4e-3, 2e-3, 1e-3];
        c.convergence.oracle_substep = 2e-5;
        c.convergence.record_interval = 4e-3;
        let r = convergence_driver(&c).unwrap();
        for q in r.error_ratios() {
            assert!((1.5..=3.0).contains(&q), "{q}");
        }
        assert!(r.oracle_self_change < 1e-9);
        assert!(tmp.path().join("convergence.csv").exists());
    }
}
