//! Continuous dependence on the data, measured: paired runs whose data
//! differ by a scaled, fixed profile, and the rate at which the solution
//! differences vanish with the scale.
//!
//! Difference quantities per rung, for `ū = u' − u` and `φ̄ = φ' − φ`:
//! `sup_t ‖ū‖_{L²(U)}`, `sup_t ‖φ̄‖_{H¹(Ω)}`, `(Σ Δt ‖∇ū‖²)^{1/2}` and
//! `(Σ Δt ‖φ̄_t‖²_{L²(Ω)})^{1/2}`. The time integrals are reported as square
//! roots so all four scale linearly when the dependence is Lipschitz.

use std::fmt::Write as _;

use crate::assembly::AssembledOperators;
use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point};
use crate::par;
use crate::scenario::Problem;
use crate::stepper::{FieldState, Stepper};

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    /// Amplitude of the `u⁰` profile (unit `L²(U)` norm).
    pub eps_u0: f64,
    /// Amplitude of the `φ⁰` profile (unit `H¹(Ω)` norm).
    pub eps_phi0: f64,
    /// Amplitude of the `g` profile (unit `L²(∂U)` norm, constant in time).
    pub eps_g: f64,
    /// Strictly decreasing positive scale factors.
    pub ladder: Vec<f64>,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Perturbation(m.into()));
        if self.ladder.is_empty() {
            return bad("ladder is empty");
        }
        if self.ladder.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("ladder entries must be positive and finite");
        }
        if self.ladder.windows(2).any(|w| w[1] >= w[0]) {
            return bad("ladder must be strictly decreasing");
        }
        if ![self.eps_u0, self.eps_phi0, self.eps_g].iter().all(|e| e.is_finite()) {
            return bad("amplitudes must be finite");
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.eps_u0 == 0.0 && self.eps_phi0 == 0.0 && self.eps_g == 0.0
    }

    /// The same ladder with only one amplitude kept.
    pub fn only(&self, which: Component) -> Self {
        let keep = |c: Component, v: f64| if c == which { v } else { 0.0 };
        Self {
            eps_u0: keep(Component::U0, self.eps_u0),
            eps_phi0: keep(Component::Phi0, self.eps_phi0),
            eps_g: keep(Component::G, self.eps_g),
            ladder: self.ladder.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U0,
    Phi0,
    G,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::U0, Component::Phi0, Component::G];

    pub fn name(self) -> &'static str {
        match self {
            Self::U0 => "u0",
            Self::Phi0 => "phi0",
            Self::G => "g",
        }
    }
}

/// Difference norms for one rung.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RungNorms {
    pub scale: f64,
    pub sup_l2_u: f64,
    pub sup_h1_phi: f64,
    pub grad_u_l2t: f64,
    pub phi_t_l2t: f64,
}

impl RungNorms {
    pub fn values(&self) -> [f64; 4] {
        [self.sup_l2_u, self.sup_h1_phi, self.grad_u_l2t, self.phi_t_l2t]
    }
}

pub const NORM_NAMES: [&str; 4] = ["sup_l2_u", "sup_h1_phi", "grad_u_l2t", "phi_t_l2t"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rungs: Vec<RungNorms>,
    /// Least-squares slope of `log(norm)` against `log(scale)`; `None` when
    /// some rung has an exactly zero difference (or there is one rung).
    pub slopes: [Option<f64>; 4],
}

impl ScalingReport {
    pub fn max_difference(&self) -> f64 {
        self.rungs.iter().flat_map(|r| r.values()).fold(0.0, f64::max)
    }

    pub fn min_slope(&self) -> Option<f64> {
        self.slopes
            .iter()
            .try_fold(f64::INFINITY, |m, s| s.map(|s| m.min(s)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("scale,{}\n", NORM_NAMES.join(","));
        for r in &self.rungs {
            let v = r.values();
            let _ = writeln!(s, "{},{},{},{},{}", r.scale, v[0], v[1], v[2], v[3]);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, slope) in NORM_NAMES.iter().zip(&self.slopes) {
            let _ = match slope {
                Some(v) => writeln!(s, "{name}: slope {v:.4}"),
                None if self.rungs.iter().all(|r| r.values().iter().all(|x| *x == 0.0)) => {
                    writeln!(s, "{name}: exact-zero differences (slope undefined)")
                }
                None => writeln!(s, "{name}: slope undefined"),
            };
        }
        s
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `cos²` bump of radius `r` about `c`.
fn bump(p: Point, c: Point, r: f64) -> f64 {
    let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
    if d >= r {
        0.0
    } else {
        (0.5 * std::f64::consts::PI * d / r).cos().powi(2)
    }
}

fn bounds(mesh: &Mesh) -> ([f64; 2], [f64; 2]) {
    mesh.nodes.iter().fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), p| ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])]),
    )
}

/// Unit-norm perturbation profiles on a given mesh.
#[derive(Debug, Clone)]
pub struct Profiles {
    pub u0: Vec<f64>,
    pub phi0: Vec<f64>,
    /// Nodal values on `U`; only outer-boundary nodes matter.
    pub g: Vec<f64>,
    g_centre: Point,
    g_radius: f64,
    g_norm: f64,
}

impl Profiles {
    /// Interior bump centred in the container for `u⁰` and `φ⁰`, and a
    /// bump in the vertical coordinate for `g`.
    pub fn new(mesh: &Mesh, ops: &AssembledOperators) -> Result<Self> {
        let (lo, hi) = bounds(mesh);
        let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let r = 0.4 * (hi[0] - lo[0]).min(hi[1] - lo[1]);
        let u: Vec<f64> = mesh.nodes.iter().map(|p| bump(*p, c, r)).collect();
        let phi: Vec<f64> = mesh.u_of_omega.iter().map(|&n| bump(mesh.nodes[n], c, r)).collect();
        let ry = 0.4 * (hi[1] - lo[1]);
        let g: Vec<f64> = mesh.nodes.iter().map(|p| bump([c[0], p[1]], c, ry)).collect();
        let normalize = |mut v: Vec<f64>, norm: f64, what: &str| {
            if !(norm > 0.0) {
                return Err(Error::Perturbation(format!("{what} profile has zero norm on this mesh")));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            Ok(v)
        };
        let (nu, np, ng) = (ops.l2_norm_u(&u), ops.h1_norm_o(&phi), ops.l2_norm_boundary(&g));
        Ok(Self {
            u0: normalize(u, nu, "u0")?,
            phi0: normalize(phi, np, "phi0")?,
            g: normalize(g, ng, "g")?,
            g_centre: c,
            g_radius: ry,
            g_norm: ng,
        })
    }

    /// The normalized `g` profile at any point (matches `self.g` at nodes).
    pub fn g_at(&self) -> impl Fn(Point) -> f64 + Send + Sync + 'static {
        let (c, r, n) = (self.g_centre, self.g_radius, self.g_norm);
        move |p: Point| bump([c[0], p[1]], c, r) / n
    }
}

fn perturbed_initial(base: &FieldState, prof: &Profiles, spec: &PerturbationSpec, s: f64) -> FieldState {
    let mut st = base.clone();
    if spec.eps_u0 != 0.0 {
        par::axpy(s * spec.eps_u0, &prof.u0, &mut st.u);
    }
    if spec.eps_phi0 != 0.0 {
        par::axpy(s * spec.eps_phi0, &prof.phi0, &mut st.phi);
    }
    st
}

/// Difference norms between the base problem and one perturbed copy,
/// stepping both in lockstep on the same schedule.
fn rung(problem: &Problem, prof: &Profiles, spec: &PerturbationSpec, scale: f64) -> Result<RungNorms> {
    let ops = &problem.ops;
    let g_pert = if spec.eps_g != 0.0 {
        problem.g.with_spatial_perturbation(scale * spec.eps_g, prof.g_at())
    } else {
        problem.g.clone()
    };
    let mut a = Stepper::new(&problem.mesh, ops, problem.params, problem.stepper, problem.g.clone())?;
    let mut b = Stepper::new(&problem.mesh, ops, problem.params, problem.stepper, g_pert)?;
    let mut sa = problem.initial.clone();
    let mut sb = perturbed_initial(&problem.initial, prof, spec, scale);

    let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
    let mut out = RungNorms {
        scale,
        sup_l2_u: ops.l2_norm_u(&diff(&sb.u, &sa.u)),
        sup_h1_phi: ops.h1_norm_o(&diff(&sb.phi, &sa.phi)),
        grad_u_l2t: 0.0,
        phi_t_l2t: 0.0,
    };
    let (mut grad_sq, mut phit_sq) = (0.0, 0.0);
    for k in 1..=a.step_count() {
        let na = a.advance(&sa, k)?;
        let nb = b.advance(&sb, k)?;
        let dt = na.t - sa.t;
        let du = diff(&nb.u, &na.u);
        out.sup_l2_u = out.sup_l2_u.max(ops.l2_norm_u(&du));
        out.sup_h1_phi = out.sup_h1_phi.max(ops.h1_norm_o(&diff(&nb.phi, &na.phi)));
        grad_sq += dt * ops.grad_norm_u(&du).powi(2);
        phit_sq += dt * ops.l2_norm_o(&diff(&nb.phi_dot, &na.phi_dot)).powi(2);
        sa = na;
        sb = nb;
    }
    out.grad_u_l2t = grad_sq.sqrt();
    out.phi_t_l2t = phit_sq.sqrt();
    Ok(out)
}

/// Runs every rung (in parallel when enabled) and fits the scaling slopes.
pub fn perturbation_study(problem: &Problem, spec: &PerturbationSpec) -> Result<ScalingReport> {
    spec.validate()?;
    let prof = Profiles::new(&problem.mesh, &problem.ops)?;
    let results = par::map_collect(&spec.ladder, |&s| rung(problem, &prof, spec, s));
    let mut rungs = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        rungs.push(r.map_err(|e| Error::Rung {
            rung: i,
            scale: spec.ladder[i],
            source: Box::new(e),
        })?);
    }
    let scales: Vec<f64> = rungs.iter().map(|r| r.scale).collect();
    let mut slopes = [None; 4];
    for (q, slot) in slopes.iter_mut().enumerate() {
        let ys: Vec<f64> = rungs.iter().map(|r| r.values()[q]).collect();
        *slot = loglog_slope(&scales, &ys);
    }
    Ok(ScalingReport { rungs, slopes })
}

/// Largest max-norm difference between any two of `n_reps` identical runs,
/// over all time levels.
pub fn uniqueness_probe(problem: &Problem, n_reps: usize) -> Result<f64> {
    if n_reps < 2 {
        return Ok(0.0);
    }
    let reference = problem.trajectory()?;
    let mut worst = 0.0f64;
    for _ in 1..n_reps {
        let other = problem.trajectory()?;
        worst = worst.max(max_trajectory_diff(&reference, &other)?);
    }
    Ok(worst)
}

/// The same run under each thread count; returns the largest difference to
/// the first one.
pub fn thread_count_probe(problem: &Problem, threads: &[usize]) -> Result<f64> {
    let runs: Vec<Vec<FieldState>> = threads
        .iter()
        .map(|&n| par::with_threads(n, || problem.trajectory()))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for r in runs.iter().skip(1) {
        worst = worst.max(max_trajectory_diff(&runs[0], r)?);
    }
    Ok(worst)
}

fn max_trajectory_diff(a: &[FieldState], b: &[FieldState]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Trajectory(format!("run lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max))
}
