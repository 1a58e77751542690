//! Flat `key = value` scenario files.
//!
//! ```text
//! # comment
//! preset = ampoule          # optional; later keys override it
//! params.tau = 0.005
//! boundary.kind = ramp
//! ```
//!
//! Without a `preset` line every `mesh.*` and `params.*` key plus
//! `stepper.dt` must be present. Lists are comma separated; boundary tables
//! are `t:v` pairs. Parsing reports every problem found, each with its line.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::scenario::{self, BoundaryPreset, InitialCondition, ScenarioConfig};
use crate::stepper::CubicMode;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based; 0 for problems not tied to one line (missing keys, invariants).
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

const REQUIRED: &[&str] = &[
    "mesh.outer_width",
    "mesh.outer_height",
    "mesh.wall_thickness",
    "mesh.target_h",
    "params.k_omega",
    "params.k_wall",
    "params.latent_l",
    "params.tau",
    "params.xi",
    "params.lambda_bc",
    "params.t_end",
    "stepper.dt",
];

const OPTIONAL: &[&str] = &[
    "preset",
    "stepper.linsolve_tol",
    "stepper.linsolve_maxit",
    "stepper.cubic_mode",
    "initial.kind",
    "initial.u0",
    "initial.phi0",
    "boundary.kind",
    "boundary.value",
    "boundary.start",
    "boundary.rate",
    "boundary.floor",
    "boundary.table",
    "output.stride",
    "output.dir",
    "threads",
    "perturbation.eps_u0",
    "perturbation.eps_phi0",
    "perturbation.eps_g",
    "perturbation.ladder",
    "convergence.dts",
    "convergence.oracle_substep",
    "convergence.record_interval",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
}

impl Entries {
    fn err(&mut self, line: usize, message: String) {
        self.errors.push(ConfigError { line, message });
    }

    fn raw(&self, key: &str) -> Option<(usize, String)> {
        self.map.get(key).cloned()
    }

    fn parsed<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let (line, v) = self.raw(key)?;
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.err(line, format!("{key}: expected {what}, got '{v}'"));
                None
            }
        }
    }

    fn set_f64(&mut self, key: &str, slot: &mut f64) {
        if let Some(v) = self.parsed::<f64>(key, "a number") {
            *slot = v;
        }
    }

    fn set_usize(&mut self, key: &str, slot: &mut usize) {
        if let Some(v) = self.parsed::<usize>(key, "a non-negative integer") {
            *slot = v;
        }
    }

    fn f64_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let (line, v) = self.raw(key)?;
        let items: Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match items {
            Ok(x) if !x.is_empty() => Some(x),
            _ => {
                self.err(line, format!("{key}: expected a comma-separated list of numbers, got '{v}'"));
                None
            }
        }
    }
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a).trim()
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, Vec<ConfigError>> {
    let mut e = Entries {
        map: BTreeMap::new(),
        errors: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            e.err(line, format!("expected `key = value`, got '{body}'"));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !REQUIRED.contains(&k.as_str()) && !OPTIONAL.contains(&k.as_str()) {
            e.err(line, format!("unknown key '{k}'"));
            continue;
        }
        if let Some((first, _)) = e.map.get(&k) {
            let msg = format!("duplicate key '{k}' (first set on line {first})");
            e.err(line, msg);
            continue;
        }
        e.map.insert(k, (line, v));
    }

    let mut cfg = match e.raw("preset") {
        Some((line, name)) => match scenario::preset(&name) {
            Some(c) => c,
            None => {
                e.err(line, format!("unknown preset '{name}' (expected ampoule, freezing or equilibrium)"));
                scenario::equilibrium()
            }
        },
        None => {
            for key in REQUIRED {
                if !e.map.contains_key(*key) {
                    e.err(0, format!("missing required key '{key}'"));
                }
            }
            scenario::equilibrium()
        }
    };

    e.set_f64("mesh.outer_width", &mut cfg.mesh.outer_width);
    e.set_f64("mesh.outer_height", &mut cfg.mesh.outer_height);
    e.set_f64("mesh.wall_thickness", &mut cfg.mesh.wall_thickness);
    e.set_f64("mesh.target_h", &mut cfg.mesh.target_h);
    e.set_f64("params.k_omega", &mut cfg.params.k_omega);
    e.set_f64("params.k_wall", &mut cfg.params.k_wall);
    e.set_f64("params.latent_l", &mut cfg.params.latent_l);
    e.set_f64("params.tau", &mut cfg.params.tau);
    e.set_f64("params.xi", &mut cfg.params.xi);
    e.set_f64("params.lambda_bc", &mut cfg.params.lambda_bc);
    e.set_f64("params.t_end", &mut cfg.params.t_end);
    e.set_f64("stepper.dt", &mut cfg.stepper.dt);
    e.set_f64("stepper.linsolve_tol", &mut cfg.stepper.linsolve_tol);
    e.set_usize("stepper.linsolve_maxit", &mut cfg.stepper.linsolve_maxit);
    if let Some((line, v)) = e.raw("stepper.cubic_mode") {
        match CubicMode::parse(&v) {
            Some(m) => cfg.stepper.cubic_mode = m,
            None => e.err(
                line,
                format!("stepper.cubic_mode: expected semi_implicit, explicit or disabled, got '{v}'"),
            ),
        }
    }

    parse_initial(&mut e, &mut cfg);
    parse_boundary(&mut e, &mut cfg);

    e.set_usize("output.stride", &mut cfg.output.snapshot_stride);
    if let Some((_, v)) = e.raw("output.dir") {
        cfg.output.dir = PathBuf::from(v);
    }
    e.set_usize("threads", &mut cfg.threads);

    e.set_f64("perturbation.eps_u0", &mut cfg.perturbation.eps_u0);
    e.set_f64("perturbation.eps_phi0", &mut cfg.perturbation.eps_phi0);
    e.set_f64("perturbation.eps_g", &mut cfg.perturbation.eps_g);
    if let Some(l) = e.f64_list("perturbation.ladder") {
        cfg.perturbation.ladder = l;
    }
    if let Some(l) = e.f64_list("convergence.dts") {
        cfg.convergence.dts = l;
    }
    e.set_f64("convergence.oracle_substep", &mut cfg.convergence.oracle_substep);
    e.set_f64("convergence.record_interval", &mut cfg.convergence.record_interval);

    if e.errors.is_empty() {
        // invariants only make sense once every value parsed
        if let Err(err) = cfg.validate() {
            e.err(0, err.to_string());
        }
    }
    if e.errors.is_empty() {
        Ok(cfg)
    } else {
        // file order, file-wide problems last
        e.errors.sort_by_key(|x| (x.line == 0, x.line));
        Err(e.errors)
    }
}

fn parse_initial(e: &mut Entries, cfg: &mut ScenarioConfig) {
    let kind = e.raw("initial.kind");
    let explicit_values = e.map.contains_key("initial.u0") || e.map.contains_key("initial.phi0");
    match kind.as_ref().map(|(l, k)| (*l, k.as_str())) {
        Some((_, "melting_point")) => cfg.initial = InitialCondition::MeltingPoint,
        Some((_, "constant")) => {}
        Some((line, other)) => {
            e.err(line, format!("initial.kind: expected melting_point or constant, got '{other}'"));
            return;
        }
        None if !explicit_values => return,
        None => {}
    }
    if kind.as_ref().map_or(true, |(_, k)| k == "constant") {
        let (mut u0, mut phi0) = cfg.initial.values();
        e.set_f64("initial.u0", &mut u0);
        e.set_f64("initial.phi0", &mut phi0);
        cfg.initial = InitialCondition::Constant { u0, phi0 };
    }
}

fn parse_boundary(e: &mut Entries, cfg: &mut ScenarioConfig) {
    let Some((line, kind)) = e.raw("boundary.kind") else {
        return;
    };
    match kind.as_str() {
        "constant" => {
            let mut v = 0.0;
            e.set_f64("boundary.value", &mut v);
            cfg.boundary = BoundaryPreset::Constant(v);
        }
        "ramp" => {
            let (mut start, mut rate) = (0.0, 1.0);
            e.set_f64("boundary.start", &mut start);
            e.set_f64("boundary.rate", &mut rate);
            let floor = e.parsed::<f64>("boundary.floor", "a number");
            cfg.boundary = BoundaryPreset::Ramp { start, rate, floor };
        }
        "table" => {
            let Some((tl, v)) = e.raw("boundary.table") else {
                e.err(line, "boundary.kind = table needs boundary.table".into());
                return;
            };
            let pairs: Option<Vec<(f64, f64)>> = v
                .split(',')
                .map(|item| {
                    let (t, x) = item.split_once(':')?;
                    Some((t.trim().parse().ok()?, x.trim().parse().ok()?))
                })
                .collect();
            match pairs {
                Some(p) => cfg.boundary = BoundaryPreset::Table(p),
                None => e.err(tl, format!("boundary.table: expected `t:v, t:v, ...`, got '{v}'")),
            }
        }
        other => e.err(line, format!("boundary.kind: expected constant, ramp or table, got '{other}'")),
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Writes every key explicitly; `parse_config(&serialize(c)) == Ok(c)`.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let m = &cfg.mesh;
    let p = &cfg.params;
    let st = &cfg.stepper;
    // writing to a String cannot fail
    let _ = (|| -> fmt::Result {
        writeln!(s, "mesh.outer_width = {}", m.outer_width)?;
        writeln!(s, "mesh.outer_height = {}", m.outer_height)?;
        writeln!(s, "mesh.wall_thickness = {}", m.wall_thickness)?;
        writeln!(s, "mesh.target_h = {}", m.target_h)?;
        writeln!(s, "params.k_omega = {}", p.k_omega)?;
        writeln!(s, "params.k_wall = {}", p.k_wall)?;
        writeln!(s, "params.latent_l = {}", p.latent_l)?;
        writeln!(s, "params.tau = {}", p.tau)?;
        writeln!(s, "params.xi = {}", p.xi)?;
        writeln!(s, "params.lambda_bc = {}", p.lambda_bc)?;
        writeln!(s, "params.t_end = {}", p.t_end)?;
        writeln!(s, "stepper.dt = {}", st.dt)?;
        writeln!(s, "stepper.linsolve_tol = {}", st.linsolve_tol)?;
        writeln!(s, "stepper.linsolve_maxit = {}", st.linsolve_maxit)?;
        writeln!(s, "stepper.cubic_mode = {}", st.cubic_mode.as_str())?;
        match cfg.initial {
            InitialCondition::MeltingPoint => writeln!(s, "initial.kind = melting_point")?,
            InitialCondition::Constant { u0, phi0 } => {
                writeln!(s, "initial.kind = constant")?;
                writeln!(s, "initial.u0 = {u0}")?;
                writeln!(s, "initial.phi0 = {phi0}")?;
            }
        }
        match &cfg.boundary {
            BoundaryPreset::Constant(v) => {
                writeln!(s, "boundary.kind = constant")?;
                writeln!(s, "boundary.value = {v}")?;
            }
            BoundaryPreset::Ramp { start, rate, floor } => {
                writeln!(s, "boundary.kind = ramp")?;
                writeln!(s, "boundary.start = {start}")?;
                writeln!(s, "boundary.rate = {rate}")?;
                if let Some(f) = floor {
                    writeln!(s, "boundary.floor = {f}")?;
                }
            }
            BoundaryPreset::Table(samples) => {
                writeln!(s, "boundary.kind = table")?;
                let items: Vec<String> = samples.iter().map(|(t, v)| format!("{t}:{v}")).collect();
                writeln!(s, "boundary.table = {}", items.join(", "))?;
            }
        }
        writeln!(s, "output.stride = {}", cfg.output.snapshot_stride)?;
        writeln!(s, "output.dir = {}", cfg.output.dir.display())?;
        writeln!(s, "threads = {}", cfg.threads)?;
        let pt = &cfg.perturbation;
        writeln!(s, "perturbation.eps_u0 = {}", pt.eps_u0)?;
        writeln!(s, "perturbation.eps_phi0 = {}", pt.eps_phi0)?;
        writeln!(s, "perturbation.eps_g = {}", pt.eps_g)?;
        writeln!(s, "perturbation.ladder = {}", list(&pt.ladder))?;
        let cv = &cfg.convergence;
        writeln!(s, "convergence.dts = {}", list(&cv.dts))?;
        writeln!(s, "convergence.oracle_substep = {}", cv.oracle_substep)?;
        writeln!(s, "convergence.record_interval = {}", cv.record_interval)
    })();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        "\
# small test mesh
mesh.outer_width = 1.2
mesh.outer_height = 2.2
mesh.wall_thickness = 0.1
mesh.target_h = 0.1
params.k_omega = 1
params.k_wall = 0.5
params.latent_l = 1
params.tau = 0.005
params.xi = 0.03
params.lambda_bc = 2   # exchange coefficient
params.t_end = 1
stepper.dt = 0.001
"
        .to_string()
    }

    #[test]
    fn minimal_file_echoes_values() {
        let c = parse_config(&minimal()).unwrap();
        assert_eq!(c.params.xi, 0.03);
        assert_eq!(c.params.tau, 0.005);
        assert_eq!(c.params.lambda_bc, 2.0);
        assert_eq!(c.mesh.outer_height, 2.2);
        assert_eq!(c.stepper.dt, 0.001);
        assert_eq!(c.stepper.cubic_mode, CubicMode::SemiImplicit);
    }

    #[test]
    fn missing_tau_is_a_single_error() {
        let text = minimal().replace("params.tau = 0.005\n", "");
        let errs = parse_config(&text).unwrap_err();
        assert_eq!(errs.len(), 1, "{errs:?}");
        assert!(errs[0].message.contains("params.tau"));
    }

    #[test]
    fn all_errors_are_reported_with_lines() {
        let text = format!("{}bogus = 1\nparams.xi = 2\nstepper.cubic_mode = fast\nthreads = -1\nnot a pair\n", minimal());
        let errs = parse_config(&text).unwrap_err();
        let lines: Vec<usize> = errs.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![14, 15, 16, 17, 18], "{errs:?}");
        assert!(errs[0].message.contains("unknown key"));
        assert!(errs[1].message.contains("duplicate"));
        assert!(errs[3].message.contains("threads"));
    }

    #[test]
    fn type_mismatch_names_key() {
        let text = minimal().replace("params.xi = 0.03", "params.xi = thin");
        let errs = parse_config(&text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 10);
        assert!(errs[0].message.contains("params.xi"));
    }

    #[test]
    fn invariant_violation_is_reported() {
        let text = minimal().replace("params.tau = 0.005", "params.tau = -1");
        let errs = parse_config(&text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("tau"), "{}", errs[0]);
        let text = format!("{}output.stride = 0\n", minimal());
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn preset_with_overrides() {
        let c = parse_config("preset = ampoule\nparams.t_end = 2 # shorter\noutput.dir = /tmp/x\n").unwrap();
        assert_eq!(c.params.t_end, 2.0);
        assert_eq!(c.mesh, scenario::ampoule().mesh);
        assert_eq!(c.output.dir, PathBuf::from("/tmp/x"));
        assert!(parse_config("preset = teapot\n").is_err());
    }

    #[test]
    fn boundary_and_initial_forms() {
        let text = format!(
            "{}boundary.kind = table\nboundary.table = 0:0, 1:-1, 2:-1\ninitial.u0 = 0.25\n",
            minimal()
        );
        let c = parse_config(&text).unwrap();
        assert_eq!(c.boundary, BoundaryPreset::Table(vec![(0.0, 0.0), (1.0, -1.0), (2.0, -1.0)]));
        assert_eq!(c.initial, InitialCondition::Constant { u0: 0.25, phi0: 1.0 });
        let bad = format!("{}boundary.kind = table\nboundary.table = 0;0\n", minimal());
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn round_trip_of_presets() {
        for name in ["ampoule", "freezing", "equilibrium"] {
            let c = scenario::preset(name).unwrap();
            let back = parse_config(&serialize(&c)).unwrap();
            assert_eq!(back, c, "{name}");
        }
        let mut c = scenario::equilibrium();
        c.boundary = BoundaryPreset::Table(vec![(0.0, 0.1), (0.5, -0.3)]);
        c.initial = InitialCondition::Constant { u0: 0.1 + 0.2, phi0: -1.0 / 3.0 };
        c.stepper.cubic_mode = CubicMode::Explicit;
        assert_eq!(parse_config(&serialize(&c)).unwrap(), c);
    }
}
