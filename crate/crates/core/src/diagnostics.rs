//! Free energy, monitored norms and the discrete residuals of the energy
//! equation and of the chain-rule identity for the double well.
//!
//! Potential terms (`φ⁴`, `φ²`, `φ³ − φ`) use the lumped Ω measures, the
//! same nodal evaluation the stepper uses, so both residuals measure time
//! discretization error only.

use crate::assembly::{AssembledOperators, ModelParams};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::par;
use crate::stepper::FieldState;

pub const CSV_HEADER: &str =
    "t,free_energy,l2_u,h1_phi,bnd_flux_accum,phidot_accum,frozen_fraction,energy_residual,chain_residual";

/// Per-step monitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `∫_Ω ⅛φ⁴ − ¼φ² + (ξ²/2)|∇φ|²`
    pub free_energy: f64,
    pub l2_u: f64,
    pub h1_phi: f64,
    /// `Σ Δt ∫_∂U u²`
    pub bnd_flux_accum: f64,
    /// `Σ Δt ‖φ_t‖²_{L²(Ω)}`
    pub phidot_accum: f64,
    /// Measure fraction of Ω with `φ < 0`.
    pub frozen_fraction: f64,
    /// Energy-equation residual from t = 0 to `t`.
    pub energy_residual: f64,
    /// Chain-rule residual from t = 0 to `t`.
    pub chain_residual: f64,
}

impl DiagnosticsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.t,
            self.free_energy,
            self.l2_u,
            self.h1_phi,
            self.bnd_flux_accum,
            self.phidot_accum,
            self.frozen_fraction,
            self.energy_residual,
            self.chain_residual
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.free_energy,
            self.l2_u,
            self.h1_phi,
            self.bnd_flux_accum,
            self.phidot_accum,
            self.frozen_fraction,
            self.energy_residual,
            self.chain_residual,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Writes a header plus one row per record.
pub fn to_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Lumped quartic/quadratic parts plus the exact gradient part.
pub fn free_energy(phi: &[f64], params: &ModelParams, ops: &AssembledOperators) -> f64 {
    let potential: f64 = ops
        .lumped_o
        .iter()
        .zip(phi)
        .map(|(l, p)| {
            let p2 = p * p;
            l * (p2 * p2 / 8.0 - p2 / 4.0)
        })
        .sum();
    potential + 0.5 * params.xi * params.xi * ops.stiff_o.bilinear(phi, phi)
}

pub fn frozen_fraction(phi: &[f64], ops: &AssembledOperators) -> f64 {
    let frozen: f64 = ops
        .lumped_o
        .iter()
        .zip(phi)
        .filter(|(_, p)| **p < 0.0)
        .map(|(l, _)| l)
        .sum();
    frozen / ops.omega_measure()
}

/// `¼Σ Lφ⁴ − ½Σ Lφ²`
fn lumped_quartic_minus_quadratic(phi: &[f64], ops: &AssembledOperators) -> f64 {
    ops.lumped_o
        .iter()
        .zip(phi)
        .map(|(l, p)| {
            let p2 = p * p;
            l * (0.25 * p2 * p2 - 0.5 * p2)
        })
        .sum()
}

/// `Δt ⟨φ_t, 2uⁿ − τφ_t⟩` for the step `prev → cur`.
fn energy_work(prev: &FieldState, cur: &FieldState, params: &ModelParams, ops: &AssembledOperators) -> f64 {
    let dt = cur.t - prev.t;
    let coupling = par::dot(&cur.phi_dot, &ops.couple.mul_vec(&prev.u));
    let dissipation = ops.mass_o.bilinear(&cur.phi_dot, &cur.phi_dot);
    dt * (2.0 * coupling - params.tau * dissipation)
}

/// `Δt ⟨φ_t, (φⁿ)³ − φⁿ⟩_lumped` for the step `prev → cur`.
fn chain_work(prev: &FieldState, cur: &FieldState, ops: &AssembledOperators) -> f64 {
    let dt = cur.t - prev.t;
    let force: Vec<f64> = prev.phi.iter().map(|p| p * p * p - p).collect();
    dt * ops.lumped_dot(&cur.phi_dot, &force)
}

fn check_segment(segment: &[FieldState]) -> Result<()> {
    if segment.len() < 3 {
        return Ok(());
    }
    let expected = segment[1].t - segment[0].t;
    // the final step may be shorter
    for k in 1..segment.len() - 1 {
        let dt = segment[k + 1].t - segment[k].t;
        let last = k + 1 == segment.len() - 1;
        let uniform = (dt - expected).abs() <= 1e-9 * expected.abs();
        if !(uniform || (last && dt > 0.0 && dt < expected)) {
            return Err(Error::NonUniform {
                frame: k + 1,
                dt,
                expected,
            });
        }
    }
    Ok(())
}

/// `|FE(t) − FE(s) − Σ Δt ⟨φ_t, 2uⁿ − τφ_t⟩|` over consecutive states.
pub fn energy_equality_residual(
    segment: &[FieldState],
    params: &ModelParams,
    ops: &AssembledOperators,
) -> Result<f64> {
    check_segment(segment)?;
    let (Some(first), Some(last)) = (segment.first(), segment.last()) else {
        return Ok(0.0);
    };
    let work: f64 = segment
        .windows(2)
        .map(|w| energy_work(&w[0], &w[1], params, ops))
        .sum();
    let change = free_energy(&last.phi, params, ops) - free_energy(&first.phi, params, ops);
    Ok((change - work).abs())
}

/// `|Σ Δt ⟨φ_t, φ³ − φ⟩ − (¼Δ∫φ⁴ − ½Δ∫φ²)|` over consecutive states.
pub fn chain_rule_residual(segment: &[FieldState], ops: &AssembledOperators) -> Result<f64> {
    check_segment(segment)?;
    let (Some(first), Some(last)) = (segment.first(), segment.last()) else {
        return Ok(0.0);
    };
    let work: f64 = segment.windows(2).map(|w| chain_work(&w[0], &w[1], ops)).sum();
    let change = lumped_quartic_minus_quadratic(&last.phi, ops) - lumped_quartic_minus_quadratic(&first.phi, ops);
    Ok((work - change).abs())
}

/// Record for `state`; accumulators continue from `prev`, using the step
/// length `state.t − prev.t`. Residual fields are carried over unchanged
/// (see [`Monitor`] for running residuals).
pub fn collect(
    state: &FieldState,
    params: &ModelParams,
    ops: &AssembledOperators,
    prev: Option<&DiagnosticsRecord>,
) -> DiagnosticsRecord {
    let (bnd0, pd0, er, cr, dt) = match prev {
        Some(p) => (
            p.bnd_flux_accum,
            p.phidot_accum,
            p.energy_residual,
            p.chain_residual,
            state.t - p.t,
        ),
        None => (0.0, 0.0, 0.0, 0.0, 0.0),
    };
    let bnd = ops.bmass_u.bilinear(&state.u, &state.u);
    let pd = ops.mass_o.bilinear(&state.phi_dot, &state.phi_dot);
    DiagnosticsRecord {
        t: state.t,
        free_energy: free_energy(&state.phi, params, ops),
        l2_u: ops.l2_norm_u(&state.u),
        h1_phi: ops.h1_norm_o(&state.phi),
        bnd_flux_accum: bnd0 + dt * bnd,
        phidot_accum: pd0 + dt * pd,
        frozen_fraction: frozen_fraction(&state.phi, ops),
        energy_residual: er,
        chain_residual: cr,
    }
}

/// Incremental diagnostics along a run: feed it every step from a stepper
/// hook and it keeps the running energy and chain-rule residuals.
#[derive(Debug, Clone)]
pub struct Monitor {
    params: ModelParams,
    fe0: f64,
    quartic0: f64,
    energy_work: f64,
    chain_work: f64,
    records: Vec<DiagnosticsRecord>,
}

impl Monitor {
    pub fn new(initial: &FieldState, params: &ModelParams, ops: &AssembledOperators) -> Self {
        let rec = collect(initial, params, ops, None);
        Self {
            params: *params,
            fe0: rec.free_energy,
            quartic0: lumped_quartic_minus_quadratic(&initial.phi, ops),
            energy_work: 0.0,
            chain_work: 0.0,
            records: vec![rec],
        }
    }

    pub fn observe(&mut self, prev: &FieldState, cur: &FieldState, ops: &AssembledOperators) -> DiagnosticsRecord {
        self.energy_work += energy_work(prev, cur, &self.params, ops);
        self.chain_work += chain_work(prev, cur, ops);
        let mut rec = collect(cur, &self.params, ops, self.records.last());
        rec.energy_residual = (rec.free_energy - self.fe0 - self.energy_work).abs();
        rec.chain_residual =
            (self.chain_work - (lumped_quartic_minus_quadratic(&cur.phi, ops) - self.quartic0)).abs();
        self.records.push(rec);
        rec
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<DiagnosticsRecord> {
        self.records
    }

    pub fn last(&self) -> &DiagnosticsRecord {
        self.records.last().expect("monitor always holds the initial record")
    }
}

/// Values of `phi` at the Ω nodes on the vertical line `x = x0`, sorted by
/// `y`. Nodes within `tol` of the line count as on it.
pub fn vertical_profile(mesh: &Mesh, phi: &[f64], x0: f64, tol: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = mesh
        .u_of_omega
        .iter()
        .zip(phi)
        .filter(|(n, _)| (mesh.nodes[**n][0] - x0).abs() <= tol)
        .map(|(n, p)| (mesh.nodes[*n][1], *p))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Narrowest distance over which a sampled profile goes from `hi` to `lo`
/// (either direction) without leaving `(lo, hi)` in between. Crossing points
/// are located by linear interpolation. `None` if there is no such crossing.
pub fn transition_width(profile: &[(f64, f64)], hi: f64, lo: f64) -> Option<f64> {
    let cross = |a: (f64, f64), b: (f64, f64), level: f64| a.0 + (level - a.1) / (b.1 - a.1) * (b.0 - a.0);
    let mut best: Option<f64> = None;
    let mut i = 0;
    while i + 1 < profile.len() {
        let start = profile[i].1;
        let falling = start >= hi && profile[i + 1].1 < hi;
        let rising = start <= lo && profile[i + 1].1 > lo;
        if !(falling || rising) {
            i += 1;
            continue;
        }
        let (first, last) = if falling { (hi, lo) } else { (lo, hi) };
        let s0 = cross(profile[i], profile[i + 1], first);
        let mut j = i + 1;
        while j < profile.len() && profile[j].1 > lo && profile[j].1 < hi {
            j += 1;
        }
        if j < profile.len() {
            let reached = if falling { profile[j].1 <= lo } else { profile[j].1 >= hi };
            if reached {
                let w = (cross(profile[j - 1], profile[j], last) - s0).abs();
                best = Some(best.map_or(w, |b: f64| b.min(w)));
            }
        }
        i = j.max(i + 1);
    }
    best
}
