//! First-order semi-implicit time stepping of the coupled system.
//!
//! Each step is two SPD solves. The phase equation carries no temperature
//! derivative, so it is advanced first from `uⁿ`; the heat equation then
//! uses the fresh discrete `φ_t`:
//!
//! ```text
//! (τ/Δt M_Ω + ξ² K_Ω + ½ L (φⁿ)²) φⁿ⁺¹ = τ/Δt M_Ω φⁿ + 2 C uⁿ + ½ L φⁿ
//! (1/Δt M_U + K_U + λ B_U) uⁿ⁺¹       = 1/Δt M_U uⁿ − (l/2) Cᵀ φ_t + λ ∫_∂U g(tⁿ⁺¹) ζ
//! ```
//!
//! `L` is the diagonal of lumped Ω measures: the whole double-well force
//! `½(φ³ − φ)` is evaluated nodally.

use crate::assembly::{assemble_boundary_load, AssembledOperators, BoundaryData, ModelParams};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::par;
use crate::sparse::{solve_spd_into, CsrMatrix};

/// Nodal fields at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    /// Temperature on U-nodes.
    pub u: Vec<f64>,
    /// Phase on Ω-nodes.
    pub phi: Vec<f64>,
    /// `(φⁿ⁺¹ − φⁿ)/Δt` of the step that produced this state; zero initially.
    pub phi_dot: Vec<f64>,
}

impl FieldState {
    pub fn uniform(n_u: usize, n_omega: usize, u: f64, phi: f64) -> Self {
        Self {
            t: 0.0,
            u: vec![u; n_u],
            phi: vec![phi; n_omega],
            phi_dot: vec![0.0; n_omega],
        }
    }

    pub fn check(&self, n_u: usize, n_omega: usize) -> Result<()> {
        for (what, len, expected) in [
            ("u length", self.u.len(), n_u),
            ("phi length", self.phi.len(), n_omega),
            ("phi_dot length", self.phi_dot.len(), n_omega),
        ] {
            if len != expected {
                return Err(Error::Dimension {
                    what,
                    expected,
                    got: len,
                });
            }
        }
        check_finite("u", &self.u, self.t)?;
        check_finite("phi", &self.phi, self.t)?;
        check_finite("phi_dot", &self.phi_dot, self.t)
    }

    /// Largest nodal difference over all three fields.
    pub fn max_abs_diff(&self, other: &FieldState) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        d(&self.u, &other.u)
            .max(d(&self.phi, &other.phi))
            .max(d(&self.phi_dot, &other.phi_dot))
    }
}

fn check_finite(field: &'static str, v: &[f64], t: f64) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(node) => Err(Error::NonFinite { field, node, t }),
        None => Ok(()),
    }
}

/// Time discretization of the cubic part of the double-well force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubicMode {
    /// `(φⁿ)² φⁿ⁺¹`: keeps the phase matrix SPD for every Δt.
    SemiImplicit,
    /// `(φⁿ)³` on the right-hand side.
    Explicit,
    /// Drops `φ³` altogether, leaving a linear system. Verification hook.
    Disabled,
}

impl CubicMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CubicMode::SemiImplicit => "semi_implicit",
            CubicMode::Explicit => "explicit",
            CubicMode::Disabled => "disabled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "semi_implicit" => Some(CubicMode::SemiImplicit),
            "explicit" => Some(CubicMode::Explicit),
            "disabled" => Some(CubicMode::Disabled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub linsolve_tol: f64,
    pub linsolve_maxit: usize,
    pub cubic_mode: CubicMode,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            linsolve_tol: 1e-12,
            linsolve_maxit: 5000,
            cubic_mode: CubicMode::SemiImplicit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::StepperConfig(format!("dt must be > 0 (got {})", self.dt)));
        }
        if !(self.linsolve_tol > 0.0 && self.linsolve_tol < 1.0) {
            return Err(Error::StepperConfig(format!(
                "linsolve_tol must lie in (0, 1) (got {})",
                self.linsolve_tol
            )));
        }
        if self.linsolve_maxit == 0 {
            return Err(Error::StepperConfig("linsolve_maxit must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_end`, the last one possibly short.
    pub fn step_count(&self, t_end: f64) -> usize {
        ((t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

struct Matrices {
    dt: f64,
    phase: CsrMatrix,
    heat: CsrMatrix,
}

/// Time integrator bound to one mesh, operator set and boundary law.
pub struct Stepper<'a> {
    mesh: &'a Mesh,
    ops: &'a AssembledOperators,
    params: ModelParams,
    cfg: StepperConfig,
    g: BoundaryData,
    cache: Vec<Matrices>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        mesh: &'a Mesh,
        ops: &'a AssembledOperators,
        params: ModelParams,
        cfg: StepperConfig,
        g: BoundaryData,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        if ops.n_u() != mesh.n_nodes() || ops.n_omega() != mesh.n_omega() {
            return Err(Error::Dimension {
                what: "operators vs mesh",
                expected: mesh.n_nodes(),
                got: ops.n_u(),
            });
        }
        Ok(Self {
            mesh,
            ops,
            params,
            cfg,
            g,
            cache: Vec::new(),
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    fn matrices(&mut self, dt: f64) -> &Matrices {
        if let Some(k) = self.cache.iter().position(|m| m.dt == dt) {
            return &self.cache[k];
        }
        let p = &self.params;
        let ops = self.ops;
        let phase = CsrMatrix::linear_combination(&[
            (p.tau / dt, &ops.mass_o),
            (p.xi * p.xi, &ops.stiff_o),
        ]);
        let heat = CsrMatrix::linear_combination(&[
            (1.0 / dt, &ops.mass_u),
            (1.0, &ops.stiff_u),
            (p.lambda_bc, &ops.bmass_u),
        ]);
        if self.cache.len() >= 2 {
            self.cache.remove(0);
        }
        self.cache.push(Matrices { dt, phase, heat });
        self.cache.last().unwrap()
    }

    /// One step of length `cfg.dt`.
    pub fn step(&mut self, state: &FieldState) -> Result<FieldState> {
        let dt = self.cfg.dt;
        self.step_with_dt(state, dt)
    }

    /// One step of arbitrary positive length (used for the final short step).
    pub fn step_with_dt(&mut self, state: &FieldState, dt: f64) -> Result<FieldState> {
        let (n_u, n_o) = (self.ops.n_u(), self.ops.n_omega());
        state.check(n_u, n_o)?;
        if !(dt > 0.0) {
            return Err(Error::StepperConfig(format!("step length must be > 0 (got {dt})")));
        }
        let t_new = state.t + dt;
        if t_new > self.params.t_end + dt * 1e-9 {
            return Err(Error::TimeRange {
                t: t_new,
                t_end: self.params.t_end,
            });
        }
        let t_new = t_new.min(self.params.t_end);
        let (tol, maxit, mode) = (self.cfg.linsolve_tol, self.cfg.linsolve_maxit, self.cfg.cubic_mode);
        let p = self.params;
        let ops = self.ops;
        let load = assemble_boundary_load(self.mesh, &p, &self.g, t_new)?;
        let mats = self.matrices(dt);

        // phase
        let lumped = &ops.lumped_o;
        let phi_n = &state.phi;
        let m_phi = ops.mass_o.mul_vec(phi_n);
        let c_u = ops.couple.mul_vec(&state.u);
        let mut rhs = vec![0.0; n_o];
        par::fill_indexed(&mut rhs, |i| {
            let explicit_cubic = match mode {
                CubicMode::Explicit => 0.5 * lumped[i] * phi_n[i].powi(3),
                _ => 0.0,
            };
            p.tau / dt * m_phi[i] + 2.0 * c_u[i] + 0.5 * lumped[i] * phi_n[i] - explicit_cubic
        });
        let mut phi = phi_n.clone();
        match mode {
            CubicMode::SemiImplicit => {
                let d: Vec<f64> = (0..n_o).map(|i| 0.5 * lumped[i] * phi_n[i] * phi_n[i]).collect();
                let a = mats.phase.with_diagonal_added(&d);
                solve_spd_into(&a, &rhs, &mut phi, tol, maxit)?;
            }
            CubicMode::Explicit | CubicMode::Disabled => {
                solve_spd_into(&mats.phase, &rhs, &mut phi, tol, maxit)?;
            }
        }
        check_finite("phi", &phi, t_new)?;
        let phi_dot: Vec<f64> = phi.iter().zip(phi_n).map(|(a, b)| (a - b) / dt).collect();

        // temperature
        let m_u = ops.mass_u.mul_vec(&state.u);
        let latent = ops.couple_t.mul_vec(&phi_dot);
        let mut rhs = vec![0.0; n_u];
        let half_l = 0.5 * p.latent_l;
        par::fill_indexed(&mut rhs, |i| m_u[i] / dt - half_l * latent[i] + load[i]);
        let mut u = state.u.clone();
        solve_spd_into(&mats.heat, &rhs, &mut u, tol, maxit)?;
        check_finite("u", &u, t_new)?;

        Ok(FieldState {
            t: t_new,
            u,
            phi,
            phi_dot,
        })
    }

    /// Steps from `initial` (at t = 0) to `t_end`, calling
    /// `hook(step, previous, current)` after every step.
    pub fn run<F>(&mut self, initial: &FieldState, mut hook: F) -> Result<FieldState>
    where
        F: FnMut(usize, &FieldState, &FieldState),
    {
        if initial.t != 0.0 {
            return Err(Error::TimeRange {
                t: initial.t,
                t_end: self.params.t_end,
            });
        }
        let n = self.cfg.step_count(self.params.t_end);
        let mut state = initial.clone();
        for k in 1..=n {
            let next = self.advance(&state, k)?;
            hook(k, &state, &next);
            state = next;
        }
        Ok(state)
    }

    /// Step `k` (1-based) of the schedule used by [`Stepper::run`]: lands on
    /// `k·dt`, or exactly on `t_end` for the last step.
    pub fn advance(&mut self, state: &FieldState, k: usize) -> Result<FieldState> {
        let dt = self.cfg.dt;
        let t_end = self.params.t_end;
        let n = self.cfg.step_count(t_end);
        let t_target = if k >= n { t_end } else { k as f64 * dt };
        let h = t_target - state.t;
        let h = if (h - dt).abs() <= 1e-9 * dt { dt } else { h };
        let mut next = self.step_with_dt(state, h).map_err(|e| Error::Step {
            step: k,
            t: state.t,
            source: Box::new(e),
        })?;
        next.t = t_target;
        Ok(next)
    }

    pub fn step_count(&self) -> usize {
        self.cfg.step_count(self.params.t_end)
    }
}

/// Single step with freshly built matrices.
pub fn step(
    state: &FieldState,
    cfg: &StepperConfig,
    params: &ModelParams,
    mesh: &Mesh,
    ops: &AssembledOperators,
    g: &BoundaryData,
) -> Result<FieldState> {
    Stepper::new(mesh, ops, *params, *cfg, g.clone())?.step(state)
}

/// Whole run; see [`Stepper::run`].
pub fn run<F>(
    initial: &FieldState,
    cfg: &StepperConfig,
    params: &ModelParams,
    mesh: &Mesh,
    ops: &AssembledOperators,
    g: &BoundaryData,
    hook: F,
) -> Result<FieldState>
where
    F: FnMut(usize, &FieldState, &FieldState),
{
    Stepper::new(mesh, ops, *params, *cfg, g.clone())?.run(initial, hook)
}
