//! Reference integrator for the semi-discrete system.
//!
//! Classical RK4 with a fixed small substep. Each stage evaluates the
//! vector field by eliminating the block mass matrix lower-triangularly:
//! first `τ M_Ω φ̇ = 2Cu − ξ²K_Ω φ − ½L(φ³ − φ)`, then
//! `M_U u̇ = −(K_U + λB_U)u + λ∫_∂U gζ − (l/2)Cᵀφ̇`. Mass systems are
//! solved with banded Cholesky factors, not with the stepper's CG.

use crate::assembly::{assemble_boundary_load, AssembledOperators, BoundaryData, ModelParams};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::sparse::CsrMatrix;
use crate::stepper::FieldState;

/// Cholesky factor of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i−bw..=i]`, left-padded with zeros.
    rows: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let bw = (0..n)
            .flat_map(|r| a.row(r).map(move |(c, _)| r.abs_diff(c)))
            .max()
            .unwrap_or(0);
        let w = bw + 1;
        let mut rows = vec![0.0; n * w];
        // rows[i*w + (j + bw − i)] = A[i][j] for j in i−bw..=i
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    rows[i * w + j + bw - i] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = rows[i * w + j + bw - i];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= rows[i * w + k + bw - i] * rows[j * w + k + bw - j];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    rows[i * w + bw] = s.sqrt();
                } else {
                    rows[i * w + j + bw - i] = s / rows[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, rows })
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let (bw, w) = (self.bw, self.bw + 1);
        // L y = b, row-oriented
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let row = &self.rows[i * w..(i + 1) * w];
            let s: f64 = row[lo + bw - i..bw].iter().zip(&x[lo..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / row[bw];
        }
        // L^T x = y, column sweeps over the same rows
        for i in (0..self.n).rev() {
            let row = &self.rows[i * w..(i + 1) * w];
            x[i] /= row[bw];
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            for (xk, a) in x[lo..i].iter_mut().zip(&row[lo + bw - i..bw]) {
                *xk -= a * xi;
            }
        }
    }
}

/// The coupled vector field `(u̇, φ̇) = F(u, φ, t)`.
pub struct OdeSystem<'a> {
    mesh: &'a Mesh,
    ops: &'a AssembledOperators,
    params: ModelParams,
    g: BoundaryData,
    cubic: bool,
    mass_u: BandedCholesky,
    mass_o: BandedCholesky,
    heat: CsrMatrix,
}

impl<'a> OdeSystem<'a> {
    pub fn new(mesh: &'a Mesh, ops: &'a AssembledOperators, params: ModelParams, g: BoundaryData) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            mesh,
            ops,
            params,
            g,
            cubic: true,
            mass_u: BandedCholesky::factor(&ops.mass_u)?,
            mass_o: BandedCholesky::factor(&ops.mass_o)?,
            heat: CsrMatrix::linear_combination(&[(1.0, &ops.stiff_u), (params.lambda_bc, &ops.bmass_u)]),
        })
    }

    /// Drops `φ³` from the phase equation, leaving a linear system.
    pub fn without_cubic(mut self) -> Self {
        self.cubic = false;
        self
    }

    pub fn rhs(&self, u: &[f64], phi: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let ops = self.ops;
        let p = &self.params;
        let cu = ops.couple.mul_vec(u);
        let kphi = ops.stiff_o.mul_vec(phi);
        let mut phi_dot: Vec<f64> = (0..phi.len())
            .map(|i| {
                let cube = if self.cubic { phi[i].powi(3) } else { 0.0 };
                (2.0 * cu[i] - p.xi * p.xi * kphi[i] - 0.5 * ops.lumped_o[i] * (cube - phi[i])) / p.tau
            })
            .collect();
        self.mass_o.solve_in_place(&mut phi_dot);

        let load = assemble_boundary_load(self.mesh, p, &self.g, t)?;
        let hu = self.heat.mul_vec(u);
        let latent = ops.couple_t.mul_vec(&phi_dot);
        let mut u_dot: Vec<f64> = (0..u.len())
            .map(|i| load[i] - hu[i] - 0.5 * p.latent_l * latent[i])
            .collect();
        self.mass_u.solve_in_place(&mut u_dot);
        Ok((u_dot, phi_dot))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// RK4 substep length (upper bound; each output interval is split evenly).
    pub substep: f64,
    /// Spacing of recorded frames.
    pub record_interval: f64,
}

impl OracleConfig {
    /// `n` substeps per unit time.
    pub fn per_unit_time(n: usize, record_interval: f64) -> Self {
        Self {
            substep: 1.0 / n as f64,
            record_interval,
        }
    }
}

fn axpy_into(out: &mut [f64], base: &[f64], h: f64, k: &[f64]) {
    for ((o, b), d) in out.iter_mut().zip(base).zip(k) {
        *o = b + h * d;
    }
}

fn rk4_step(sys: &OdeSystem<'_>, u: &mut Vec<f64>, phi: &mut Vec<f64>, t: f64, h: f64) -> Result<()> {
    let (ku1, kp1) = sys.rhs(u, phi, t)?;
    let mut us = vec![0.0; u.len()];
    let mut ps = vec![0.0; phi.len()];
    axpy_into(&mut us, u, 0.5 * h, &ku1);
    axpy_into(&mut ps, phi, 0.5 * h, &kp1);
    let (ku2, kp2) = sys.rhs(&us, &ps, t + 0.5 * h)?;
    axpy_into(&mut us, u, 0.5 * h, &ku2);
    axpy_into(&mut ps, phi, 0.5 * h, &kp2);
    let (ku3, kp3) = sys.rhs(&us, &ps, t + 0.5 * h)?;
    axpy_into(&mut us, u, h, &ku3);
    axpy_into(&mut ps, phi, h, &kp3);
    let (ku4, kp4) = sys.rhs(&us, &ps, t + h)?;
    for i in 0..u.len() {
        u[i] += h / 6.0 * (ku1[i] + 2.0 * ku2[i] + 2.0 * ku3[i] + ku4[i]);
    }
    for i in 0..phi.len() {
        phi[i] += h / 6.0 * (kp1[i] + 2.0 * kp2[i] + 2.0 * kp3[i] + kp4[i]);
    }
    Ok(())
}

fn first_non_finite(u: &[f64], phi: &[f64]) -> Option<(&'static str, usize)> {
    if let Some(k) = u.iter().position(|v| !v.is_finite()) {
        return Some(("u", k));
    }
    phi.iter().position(|v| !v.is_finite()).map(|k| ("phi", k))
}

/// Integrates `sys` from `initial` to `t_end`, recording a frame every
/// `record_interval` (the last interval may be short). Recorded `phi_dot` is
/// the instantaneous vector field.
pub fn integrate(sys: &OdeSystem<'_>, initial: &FieldState, cfg: &OracleConfig, t_end: f64) -> Result<Vec<FieldState>> {
    if !(cfg.substep > 0.0 && cfg.record_interval > 0.0) {
        return Err(Error::StepperConfig(format!(
            "oracle substep and record interval must be positive (got {}, {})",
            cfg.substep, cfg.record_interval
        )));
    }
    let (mut u, mut phi) = (initial.u.clone(), initial.phi.clone());
    let mut t = initial.t;
    let frame = |u: &[f64], phi: &[f64], t: f64| -> Result<FieldState> {
        let (_, phi_dot) = sys.rhs(u, phi, t)?;
        Ok(FieldState {
            t,
            u: u.to_vec(),
            phi: phi.to_vec(),
            phi_dot,
        })
    };
    let mut out = vec![frame(&u, &phi, t)?];
    let n_frames = (((t_end - t) / cfg.record_interval) - 1e-9).ceil().max(0.0) as usize;
    for k in 1..=n_frames {
        let t_next = if k == n_frames {
            t_end
        } else {
            initial.t + k as f64 * cfg.record_interval
        };
        let span = t_next - t;
        let n_sub = ((span / cfg.substep) - 1e-9).ceil().max(1.0) as usize;
        let h = span / n_sub as f64;
        for s in 0..n_sub {
            let ts = t + s as f64 * h;
            rk4_step(sys, &mut u, &mut phi, ts, h)?;
            if let Some((field, node)) = first_non_finite(&u, &phi) {
                return Err(Error::NonFinite {
                    field,
                    node,
                    t: ts + h,
                });
            }
        }
        t = t_next;
        out.push(frame(&u, &phi, t)?);
    }
    Ok(out)
}

/// Reference trajectory of the full nonlinear system.
pub fn reference_integrate(
    initial: &FieldState,
    cfg: &OracleConfig,
    params: &ModelParams,
    mesh: &Mesh,
    ops: &AssembledOperators,
    g: &BoundaryData,
) -> Result<Vec<FieldState>> {
    let sys = OdeSystem::new(mesh, ops, *params, g.clone())?;
    integrate(&sys, initial, cfg, params.t_end)
}

/// Sup-in-time discrete norms of trajectory differences.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    pub max_l2_u: f64,
    pub max_h1_phi: f64,
    pub frames: usize,
}

impl ErrorReport {
    /// `sup ‖e_u‖_{L²(U)} + sup ‖e_φ‖_{H¹(Ω)}`
    pub fn combined(&self) -> f64 {
        self.max_l2_u + self.max_h1_phi
    }
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

/// Fields of `traj` at time `t`, linearly interpolated between frames.
fn sample(traj: &[FieldState], t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let scale = traj.last()?.t.abs().max(1.0);
    let eps = 1e-9 * scale;
    let k = traj.partition_point(|s| s.t < t - eps);
    let s = traj.get(k)?;
    if (s.t - t).abs() <= eps {
        return Some((s.u.clone(), s.phi.clone()));
    }
    if k == 0 {
        return None;
    }
    let a = &traj[k - 1];
    let w = (t - a.t) / (s.t - a.t);
    Some((lerp(&a.u, &s.u, w), lerp(&a.phi, &s.phi, w)))
}

/// Compares `b` against every frame of `a` inside `b`'s time range.
pub fn compare_trajectories(a: &[FieldState], b: &[FieldState], ops: &AssembledOperators) -> Result<ErrorReport> {
    let (Some(a0), Some(b0)) = (a.first(), b.first()) else {
        return Err(Error::Trajectory("empty trajectory".into()));
    };
    if a0.u.len() != b0.u.len() || a0.phi.len() != b0.phi.len() {
        return Err(Error::Trajectory(format!(
            "mesh mismatch: ({}, {}) vs ({}, {}) nodes",
            a0.u.len(),
            a0.phi.len(),
            b0.u.len(),
            b0.phi.len()
        )));
    }
    if a0.u.len() != ops.n_u() || a0.phi.len() != ops.n_omega() {
        return Err(Error::Trajectory("trajectories do not match the operators".into()));
    }
    let mut report = ErrorReport::default();
    for fa in a {
        let Some((ub, pb)) = sample(b, fa.t) else {
            continue;
        };
        let eu: Vec<f64> = fa.u.iter().zip(&ub).map(|(x, y)| x - y).collect();
        let ep: Vec<f64> = fa.phi.iter().zip(&pb).map(|(x, y)| x - y).collect();
        report.max_l2_u = report.max_l2_u.max(ops.l2_norm_u(&eu));
        report.max_h1_phi = report.max_h1_phi.max(ops.h1_norm_o(&ep));
        report.frames += 1;
    }
    if report.frames == 0 {
        return Err(Error::Trajectory("no overlapping frames".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_operators;
    use crate::geometry::{build_nested_rect_mesh, MeshSpec, Region};
    use nalgebra::DMatrix;

    fn dense(m: &CsrMatrix) -> DMatrix<f64> {
        let d = m.to_dense();
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i][j])
    }

    #[test]
    fn banded_cholesky_matches_dense_solve() {
        let m = build_nested_rect_mesh(&MeshSpec {
            outer_width: 1.0,
            outer_height: 0.7,
            wall_thickness: 0.1,
            target_h: 0.1,
        })
        .unwrap();
        let p = ModelParams {
            k_omega: 1.0,
            k_wall: 0.3,
            latent_l: 1.0,
            tau: 0.005,
            xi: 0.03,
            lambda_bc: 2.0,
            t_end: 1.0,
        };
        let ops = assemble_operators(&m, &p).unwrap();
        let a = CsrMatrix::linear_combination(&[(1.0, &ops.mass_u), (0.01, &ops.stiff_u)]);
        let chol = BandedCholesky::factor(&a).unwrap();
        assert!(chol.bandwidth() < m.n_nodes() / 4);
        let b: Vec<f64> = (0..m.n_nodes()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        let expect = dense(&a).lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for (xi, ei) in x.iter().zip(expect.iter()) {
            assert!((xi - ei).abs() < 1e-9 * ei.abs().max(1.0));
        }
        let not_pd = CsrMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            BandedCholesky::factor(&not_pd),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }

    fn small_params(t_end: f64) -> ModelParams {
        ModelParams {
            k_omega: 1.0,
            k_wall: 0.5,
            latent_l: 1.5,
            tau: 0.05,
            xi: 0.1,
            lambda_bc: 2.0,
            t_end,
        }
    }

    #[test]
    fn equilibrium_is_constant() {
        let m = build_nested_rect_mesh(&MeshSpec {
            outer_width: 1.0,
            outer_height: 1.0,
            wall_thickness: 0.2,
            target_h: 0.2,
        })
        .unwrap();
        let p = small_params(0.2);
        let ops = assemble_operators(&m, &p).unwrap();
        let s0 = FieldState::uniform(m.n_nodes(), m.n_omega(), 0.0, 1.0);
        let cfg = OracleConfig { substep: 1e-3, record_interval: 0.05 };
        let traj = reference_integrate(&s0, &cfg, &p, &m, &ops, &BoundaryData::constant(0.0)).unwrap();
        assert_eq!(traj.len(), 5);
        for f in &traj {
            assert!(f.u.iter().all(|v| v.abs() < 1e-12));
            assert!(f.phi.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    /// Independent scalar RK4 of u' = −(l/2)φ', τφ' = 2u + (φ − φ³)/2.
    fn scalar_reference(u0: f64, f0: f64, l: f64, tau: f64, t_end: f64, n: usize) -> (f64, f64) {
        let rhs = |u: f64, f: f64| {
            let fd = (2.0 * u + 0.5 * (f - f * f * f)) / tau;
            (-0.5 * l * fd, fd)
        };
        let h = t_end / n as f64;
        let (mut u, mut f) = (u0, f0);
        for _ in 0..n {
            let k1 = rhs(u, f);
            let k2 = rhs(u + 0.5 * h * k1.0, f + 0.5 * h * k1.1);
            let k3 = rhs(u + 0.5 * h * k2.0, f + 0.5 * h * k2.1);
            let k4 = rhs(u + h * k3.0, f + h * k3.1);
            u += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            f += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (u, f)
    }

    #[test]
    fn uniform_reduction_matches_scalar_integration() {
        let xs: Vec<f64> = (0..=3).map(|i| i as f64 / 3.0).collect();
        let m = Mesh::structured(&xs, &xs, |_| Region::Medium);
        let p = ModelParams { lambda_bc: 0.0, tau: 0.005, latent_l: 1.0, ..small_params(0.05) };
        let ops = assemble_operators(&m, &p).unwrap();
        let s0 = FieldState::uniform(m.n_nodes(), m.n_omega(), 0.0, 0.5);
        let cfg = OracleConfig { substep: 1e-5, record_interval: 0.05 };
        let traj = reference_integrate(&s0, &cfg, &p, &m, &ops, &BoundaryData::constant(0.0)).unwrap();
        let (u, f) = scalar_reference(0.0, 0.5, p.latent_l, p.tau, p.t_end, 200_000);
        let last = traj.last().unwrap();
        for v in &last.phi {
            assert!((v - f).abs() < 1e-10, "{v} vs {f}");
        }
        for v in &last.u {
            assert!((v - u).abs() < 1e-10, "{v} vs {u}");
        }
    }

    #[test]
    fn linear_subproblem_matches_matrix_exponential() {
        let m = build_nested_rect_mesh(&MeshSpec {
            outer_width: 1.0,
            outer_height: 1.0,
            wall_thickness: 0.25,
            target_h: 0.5,
        })
        .unwrap();
        let p = small_params(0.3);
        let ops = assemble_operators(&m, &p).unwrap();
        let (n_u, n_o) = (m.n_nodes(), m.n_omega());

        // dense generator of the linear system y' = A y, y = (u, φ), g = 0
        let mo_inv = dense(&ops.mass_o).try_inverse().unwrap();
        let mu_inv = dense(&ops.mass_u).try_inverse().unwrap();
        let c = dense(&ops.couple);
        let lumped = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ops.lumped_o.clone()));
        let phi_u = &mo_inv * (&c * 2.0) / p.tau;
        let phi_phi = &mo_inv * (dense(&ops.stiff_o) * (-p.xi * p.xi) + &lumped * 0.5) / p.tau;
        let heat = dense(&ops.stiff_u) + dense(&ops.bmass_u) * p.lambda_bc;
        let ct = c.transpose() * (0.5 * p.latent_l);
        let u_u = &mu_inv * (-&heat - &ct * &phi_u);
        let u_phi = &mu_inv * (-&ct * &phi_phi);
        let mut a = DMatrix::zeros(n_u + n_o, n_u + n_o);
        a.view_mut((0, 0), (n_u, n_u)).copy_from(&u_u);
        a.view_mut((0, n_u), (n_u, n_o)).copy_from(&u_phi);
        a.view_mut((n_u, 0), (n_o, n_u)).copy_from(&phi_u);
        a.view_mut((n_u, n_u), (n_o, n_o)).copy_from(&phi_phi);

        let mut s0 = FieldState::uniform(n_u, n_o, 0.0, 0.0);
        for (i, x) in m.nodes.iter().enumerate() {
            s0.u[i] = (3.0 * x[0]).sin() - x[1];
        }
        for (k, &i) in m.u_of_omega.iter().enumerate() {
            s0.phi[k] = 0.3 + m.nodes[i][0] * m.nodes[i][1];
        }
        let y0 = nalgebra::DVector::from_iterator(n_u + n_o, s0.u.iter().chain(&s0.phi).copied());
        let exact = (a * p.t_end).exp() * y0;

        let sys = OdeSystem::new(&m, &ops, p, BoundaryData::constant(0.0)).unwrap().without_cubic();
        let traj = integrate(&sys, &s0, &OracleConfig { substep: 5e-5, record_interval: 0.1 }, p.t_end).unwrap();
        let last = traj.last().unwrap();
        assert!((last.t - 0.3).abs() < 1e-15);
        for (k, v) in last.u.iter().chain(&last.phi).enumerate() {
            assert!((v - exact[k]).abs() < 1e-10, "component {k}: {v} vs {}", exact[k]);
        }
    }

    #[test]
    fn blow_up_reported_with_time() {
        let xs = [0.0, 1.0];
        let m = Mesh::structured(&xs, &xs, |_| Region::Medium);
        let p = ModelParams { lambda_bc: 0.0, tau: 0.001, ..small_params(1.0) };
        let ops = assemble_operators(&m, &p).unwrap();
        let s0 = FieldState::uniform(m.n_nodes(), m.n_omega(), 0.0, 5.0);
        let cfg = OracleConfig { substep: 0.05, record_interval: 0.5 };
        match reference_integrate(&s0, &cfg, &p, &m, &ops, &BoundaryData::constant(0.0)) {
            Err(Error::NonFinite { t, .. }) => assert!(t > 0.0 && t <= 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comparisons() {
        let n = 4;
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let m = Mesh::structured(&xs, &xs, |_| Region::Medium);
        let ops = assemble_operators(&m, &small_params(1.0)).unwrap();
        let frames: Vec<FieldState> = (0..5)
            .map(|k| FieldState {
                t: 0.1 * k as f64,
                ..FieldState::uniform(m.n_nodes(), m.n_omega(), 0.5, -0.2)
            })
            .collect();
        let r = compare_trajectories(&frames, &frames, &ops).unwrap();
        assert_eq!((r.max_l2_u, r.max_h1_phi, r.frames), (0.0, 0.0, 5));
        // shifted by one frame on a constant trajectory
        let shifted: Vec<FieldState> = frames.iter().map(|f| FieldState { t: f.t + 0.1, ..f.clone() }).collect();
        let r = compare_trajectories(&frames, &shifted, &ops).unwrap();
        assert_eq!(r.combined(), 0.0);
        assert_eq!(r.frames, 4);
        // interpolation between frames of a linear-in-time trajectory is exact
        let lin: Vec<FieldState> = (0..3)
            .map(|k| {
                let t = 0.2 * k as f64;
                FieldState { t, ..FieldState::uniform(m.n_nodes(), m.n_omega(), t, 2.0 * t) }
            })
            .collect();
        let r = compare_trajectories(&frames, &lin, &ops).unwrap();
        let expect_u = (0..5).map(|k| (0.5 - 0.1 * k as f64).abs()).fold(0.0, f64::max);
        assert!((r.max_l2_u - expect_u).abs() < 1e-12);

        let other = Mesh::structured(&xs[..3], &xs, |_| Region::Medium);
        let bad = vec![FieldState::uniform(other.n_nodes(), other.n_omega(), 0.0, 0.0)];
        assert!(matches!(compare_trajectories(&frames, &bad, &ops), Err(Error::Trajectory(_))));
    }
}
