//! Scenario description (mesh, parameters, data, output) and the solvable
//! [`Problem`] it expands to.
//!
//! All temperatures are in the scaled units of the model; a cooling "rate of
//! 1 degree per second" is a ramp of slope 1 in those units.

use std::path::PathBuf;

use crate::assembly::{assemble_operators, AssembledOperators, BoundaryData, ModelParams};
use crate::diagnostics::{DiagnosticsRecord, Monitor};
use crate::error::{Error, Result};
use crate::geometry::{build_nested_rect_mesh, Mesh, MeshSpec};
use crate::oracle::OracleConfig;
use crate::stepper::{CubicMode, FieldState, Stepper, StepperConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Liquid at the melting point: `u = 0`, `φ = 1`.
    MeltingPoint,
    Constant { u0: f64, phi0: f64 },
}

impl InitialCondition {
    pub fn values(&self) -> (f64, f64) {
        match *self {
            Self::MeltingPoint => (0.0, 1.0),
            Self::Constant { u0, phi0 } => (u0, phi0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryPreset {
    Constant(f64),
    /// `g(t) = start − rate·t`, clamped below at `floor` if given.
    Ramp { start: f64, rate: f64, floor: Option<f64> },
    /// Piecewise linear in time, held constant outside the samples.
    Table(Vec<(f64, f64)>),
}

impl BoundaryPreset {
    pub fn build(&self) -> BoundaryData {
        match self {
            Self::Constant(c) => BoundaryData::constant(*c),
            Self::Ramp { start, rate, floor } => BoundaryData::cooling_ramp(*start, *rate, *floor),
            Self::Table(samples) => BoundaryData::table(samples.clone()),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Params(m));
        match self {
            Self::Constant(c) if !c.is_finite() => bad(format!("boundary value {c} is not finite")),
            Self::Ramp { start, rate, floor } => {
                if !(start.is_finite() && rate.is_finite() && floor.map_or(true, f64::is_finite)) {
                    return bad("ramp start, rate and floor must be finite".into());
                }
                Ok(())
            }
            Self::Table(s) => {
                if s.is_empty() {
                    return bad("boundary table is empty".into());
                }
                if s.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return bad("boundary table has non-finite entries".into());
                }
                if s.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("boundary table times must be strictly increasing".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub snapshot_stride: usize,
    pub dir: PathBuf,
}

/// Ladder settings for `perturbation-study`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSettings {
    pub eps_u0: f64,
    pub eps_phi0: f64,
    pub eps_g: f64,
    pub ladder: Vec<f64>,
}

impl Default for PerturbationSettings {
    fn default() -> Self {
        Self {
            eps_u0: 0.1,
            eps_phi0: 0.1,
            eps_g: 0.1,
            ladder: vec![1.0, 0.1, 0.01],
        }
    }
}

/// Refinement settings for `convergence-study`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSettings {
    pub dts: Vec<f64>,
    pub oracle_substep: f64,
    pub record_interval: f64,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            dts: vec![4e-3, 2e-3, 1e-3],
            oracle_substep: 2e-5,
            record_interval: 4e-3,
        }
    }
}

impl ConvergenceSettings {
    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            substep: self.oracle_substep,
            record_interval: self.record_interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mesh: MeshSpec,
    pub params: ModelParams,
    pub stepper: StepperConfig,
    pub initial: InitialCondition,
    pub boundary: BoundaryPreset,
    pub output: OutputConfig,
    /// Worker threads; 0 uses the default pool, 1 is bitwise reproducible.
    pub threads: usize,
    pub perturbation: PerturbationSettings,
    pub convergence: ConvergenceSettings,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.mesh.validate()?;
        self.params.validate()?;
        self.stepper.validate()?;
        self.boundary.validate()?;
        let (u0, phi0) = self.initial.values();
        if !(u0.is_finite() && phi0.is_finite()) {
            return Err(Error::Params("initial values must be finite".into()));
        }
        if self.output.snapshot_stride == 0 {
            return Err(Error::Params("output.stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Expands the description into mesh, operators and initial state.
    pub fn build(&self) -> Result<Problem> {
        self.validate()?;
        let mesh = build_nested_rect_mesh(&self.mesh)?;
        let ops = assemble_operators(&mesh, &self.params)?;
        let (u0, phi0) = self.initial.values();
        let initial = FieldState::uniform(mesh.n_nodes(), mesh.n_omega(), u0, phi0);
        Ok(Problem {
            mesh,
            ops,
            params: self.params,
            stepper: self.stepper,
            g: self.boundary.build(),
            initial,
        })
    }
}

/// Scaled conductivities and exchange coefficients shared by the presets.
/// The model is non-dimensional, so these are modelling choices; only
/// `xi` and `tau` are fixed.
fn default_params(t_end: f64) -> ModelParams {
    ModelParams {
        k_omega: 1.0,
        k_wall: 0.5,
        latent_l: 1.5,
        tau: 0.005,
        xi: 0.03,
        lambda_bc: 2.0,
        t_end,
    }
}

fn base(mesh: MeshSpec, t_end: f64, dt: f64, boundary: BoundaryPreset, stride: usize) -> ScenarioConfig {
    ScenarioConfig {
        mesh,
        params: default_params(t_end),
        stepper: StepperConfig::new(dt),
        initial: InitialCondition::MeltingPoint,
        boundary,
        output: OutputConfig {
            snapshot_stride: stride,
            dir: PathBuf::from("out"),
        },
        threads: 0,
        perturbation: PerturbationSettings::default(),
        convergence: ConvergenceSettings::default(),
    }
}

/// Ampoule: 1 × 5 medium in a 0.1 wall, liquid at the melting point, outer
/// temperature falling at rate 1 from 0 to a hold at −0.5.
pub fn ampoule() -> ScenarioConfig {
    let mesh = MeshSpec {
        outer_width: 1.2,
        outer_height: 5.2,
        wall_thickness: 0.1,
        target_h: 0.05,
    };
    let ramp = BoundaryPreset::Ramp {
        start: 0.0,
        rate: 1.0,
        floor: Some(-0.5),
    };
    base(mesh, 5.0, 1e-3, ramp, 250)
}

/// Freezing scenario for temporal-order checks: a 1 × 4 medium
/// (about 2k nodes) under an unbounded unit-rate ramp for 2 time units.
pub fn freezing_verification() -> ScenarioConfig {
    let mesh = MeshSpec {
        outer_width: 1.2,
        outer_height: 4.2,
        wall_thickness: 0.1,
        target_h: 0.05,
    };
    let ramp = BoundaryPreset::Ramp {
        start: 0.0,
        rate: 1.0,
        floor: None,
    };
    base(mesh, 2.0, 1e-3, ramp, 500)
}

/// Liquid at the melting point with the outside held there: a fixed point.
pub fn equilibrium() -> ScenarioConfig {
    let mesh = MeshSpec {
        outer_width: 1.2,
        outer_height: 2.2,
        wall_thickness: 0.1,
        target_h: 0.1,
    };
    base(mesh, 0.1, 1e-3, BoundaryPreset::Constant(0.0), 20)
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "ampoule" => Some(ampoule()),
        "freezing" => Some(freezing_verification()),
        "equilibrium" => Some(equilibrium()),
        _ => None,
    }
}

/// Everything needed to integrate one scenario.
#[derive(Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub ops: AssembledOperators,
    pub params: ModelParams,
    pub stepper: StepperConfig,
    pub g: BoundaryData,
    pub initial: FieldState,
}

impl Problem {
    pub fn with_dt(&self, dt: f64) -> Self {
        let mut p = self.clone();
        p.stepper.dt = dt;
        p
    }

    pub fn with_cubic(&self, mode: CubicMode) -> Self {
        let mut p = self.clone();
        p.stepper.cubic_mode = mode;
        p
    }

    /// Runs from `initial` to `t_end`, calling `hook(step, prev, cur)`.
    pub fn run_from<F>(&self, initial: &FieldState, g: &BoundaryData, hook: F) -> Result<FieldState>
    where
        F: FnMut(usize, &FieldState, &FieldState),
    {
        let mut st = Stepper::new(&self.mesh, &self.ops, self.params, self.stepper, g.clone())?;
        st.run(initial, hook)
    }

    pub fn run<F>(&self, hook: F) -> Result<FieldState>
    where
        F: FnMut(usize, &FieldState, &FieldState),
    {
        self.run_from(&self.initial, &self.g, hook)
    }

    /// Every state of a run, initial included.
    pub fn trajectory(&self) -> Result<Vec<FieldState>> {
        let mut traj = vec![self.initial.clone()];
        self.run(|_, _, cur| traj.push(cur.clone()))?;
        Ok(traj)
    }

    /// Run with diagnostics; on failure returns the records gathered so far
    /// alongside the error.
    pub fn monitored_run(&self) -> (Vec<DiagnosticsRecord>, Result<FieldState>) {
        let mut mon = Monitor::new(&self.initial, &self.params, &self.ops);
        let res = self.run(|_, prev, cur| {
            mon.observe(prev, cur, &self.ops);
        });
        (mon.into_records(), res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in ["ampoule", "freezing", "equilibrium"] {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn verification_mesh_is_about_2k_nodes() {
        let p = freezing_verification().build().unwrap();
        assert!((1800..2400).contains(&p.mesh.n_nodes()), "{}", p.mesh.n_nodes());
    }

    #[test]
    fn zero_stride_is_rejected() {
        let mut c = equilibrium();
        c.output.snapshot_stride = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unsorted_table_is_rejected() {
        let mut c = equilibrium();
        c.boundary = BoundaryPreset::Table(vec![(0.0, 0.0), (0.0, 1.0)]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn equilibrium_run_stays_put() {
        let p = equilibrium().build().unwrap();
        let traj = p.trajectory().unwrap();
        assert_eq!(traj.len(), 101);
        for s in &traj {
            assert!(s.max_abs_diff(&p.initial) <= 1e-12);
        }
    }
}
