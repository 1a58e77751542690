//! Sparse realizations of the bilinear and linear forms of the weak problem
//! over the nodal piecewise-linear basis.
//!
//! `ζ_j` denotes the hat function of U-node `j`, `ω_i` the hat function of
//! Ω-node `i` restricted to the medium. Element integrals of products of two
//! linear functions are computed in closed form.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{EdgeTag, Mesh, Point, Region};
use crate::par;
use crate::sparse::{solve_spd, CsrMatrix};
use crate::stepper::FieldState;

/// Physical and model constants of the scaled system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Heat conductivity in the medium.
    pub k_omega: f64,
    /// Heat conductivity of the walls.
    pub k_wall: f64,
    /// Scaled latent heat.
    pub latent_l: f64,
    /// Relaxation time.
    pub tau: f64,
    /// Interface length scale.
    pub xi: f64,
    /// Overall heat exchange coefficient on the outer surface.
    pub lambda_bc: f64,
    pub t_end: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |name: &str, v: f64, strict: bool| {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                let rel = if strict { "> 0" } else { ">= 0" };
                problems.push(format!("{name} must be {rel} (got {v})"));
            }
        };
        check("k_omega", self.k_omega, true);
        check("k_wall", self.k_wall, true);
        check("tau", self.tau, true);
        check("xi", self.xi, true);
        check("lambda_bc", self.lambda_bc, false);
        check("latent_l", self.latent_l, false);
        check("t_end", self.t_end, true);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Params(problems.join("; ")))
        }
    }

    pub fn conductivity(&self, region: Region) -> f64 {
        match region {
            Region::Medium => self.k_omega,
            Region::Wall => self.k_wall,
        }
    }
}

/// Sparse operators of the semi-discrete system.
#[derive(Debug, Clone)]
pub struct AssembledOperators {
    /// `∫_U ζ_i ζ_j`
    pub mass_u: CsrMatrix,
    /// `∫_U k ∇ζ_i·∇ζ_j` with piecewise conductivity.
    pub stiff_u: CsrMatrix,
    /// `∫_∂U ζ_i ζ_j` (without λ).
    pub bmass_u: CsrMatrix,
    /// `∫_Ω ω_i ω_j`
    pub mass_o: CsrMatrix,
    /// `∫_Ω ∇ω_i·∇ω_j`
    pub stiff_o: CsrMatrix,
    /// `M_ij = ∫_Ω ω_i ζ_j`, shape `n_omega × n_u`.
    pub couple: CsrMatrix,
    /// Transpose of [`Self::couple`].
    pub couple_t: CsrMatrix,
    /// `∫_U ∇ζ_i·∇ζ_j` with unit conductivity, for H¹(U) norms.
    pub grad_u: CsrMatrix,
    /// Row sums of `mass_o`: the lumped nodal measures of Ω.
    pub lumped_o: Vec<f64>,
}

impl AssembledOperators {
    pub fn n_u(&self) -> usize {
        self.mass_u.nrows()
    }

    pub fn n_omega(&self) -> usize {
        self.mass_o.nrows()
    }

    pub fn l2_norm_u(&self, v: &[f64]) -> f64 {
        self.mass_u.bilinear(v, v).max(0.0).sqrt()
    }

    pub fn l2_norm_o(&self, v: &[f64]) -> f64 {
        self.mass_o.bilinear(v, v).max(0.0).sqrt()
    }

    pub fn h1_norm_o(&self, v: &[f64]) -> f64 {
        (self.mass_o.bilinear(v, v) + self.stiff_o.bilinear(v, v)).max(0.0).sqrt()
    }

    /// `‖∇v‖_{L²(U)}`
    pub fn grad_norm_u(&self, v: &[f64]) -> f64 {
        self.grad_u.bilinear(v, v).max(0.0).sqrt()
    }

    /// `‖v‖_{L²(∂U)}`
    pub fn l2_norm_boundary(&self, v: &[f64]) -> f64 {
        self.bmass_u.bilinear(v, v).max(0.0).sqrt()
    }

    /// `Σ_i L_i a_i b_i` with the lumped Ω measures.
    pub fn lumped_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let w: Vec<f64> = a.iter().zip(&self.lumped_o).map(|(x, l)| x * l).collect();
        par::dot(&w, b)
    }

    /// `|Ω|` as the sum of lumped measures.
    pub fn omega_measure(&self) -> f64 {
        self.lumped_o.iter().sum()
    }
}

/// P1 element mass matrix on a triangle of the given area.
pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// P1 element stiffness matrix `k ∫ ∇λ_a·∇λ_b` for a counter-clockwise triangle.
pub fn element_stiffness(p: [Point; 3], k: f64) -> [[f64; 3]; 3] {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    // ∇λ_a = (y_b − y_c, x_c − x_b) / 2|T|
    let g = |a: usize| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        [p[b][1] - p[c][1], p[c][0] - p[b][0]]
    };
    let grads = [g(0), g(1), g(2)];
    let scale = k / (2.0 * area2);
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            out[a][b] = scale * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
        }
    }
    out
}

struct ElementBlocks {
    mass: [[f64; 3]; 3],
    stiff: [[f64; 3]; 3],
    laplace: [[f64; 3]; 3],
}

/// Assembles every operator of the semi-discrete system.
pub fn assemble_operators(mesh: &Mesh, params: &ModelParams) -> Result<AssembledOperators> {
    params.validate()?;
    let n_u = mesh.n_nodes();
    let n_o = mesh.n_omega();
    let coords = |tri: &[usize; 3]| [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];

    let tri_ids: Vec<usize> = (0..mesh.triangles.len()).collect();
    let blocks: Vec<ElementBlocks> = par::map_collect(&tri_ids, |&t| {
        let p = coords(&mesh.triangles[t]);
        let k = params.conductivity(mesh.tri_region[t]);
        ElementBlocks {
            mass: element_mass(mesh.signed_area(t)),
            stiff: element_stiffness(p, k),
            laplace: element_stiffness(p, 1.0),
        }
    });

    let cap = 9 * mesh.triangles.len();
    let (mut mu, mut ku, mut gu) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    let (mut mo, mut ko, mut mc) = (Vec::new(), Vec::new(), Vec::new());
    for (t, (tri, blk)) in mesh.triangles.iter().zip(&blocks).enumerate() {
        let medium = mesh.tri_region[t] == Region::Medium;
        for a in 0..3 {
            for b in 0..3 {
                let (i, j) = (tri[a], tri[b]);
                mu.push((i, j, blk.mass[a][b]));
                ku.push((i, j, blk.stiff[a][b]));
                gu.push((i, j, blk.laplace[a][b]));
                if medium {
                    let oi = mesh.omega_of_u[i].expect("medium node without Ω index");
                    let oj = mesh.omega_of_u[j].expect("medium node without Ω index");
                    mo.push((oi, oj, blk.mass[a][b]));
                    ko.push((oi, oj, blk.laplace[a][b]));
                    mc.push((oi, j, blk.mass[a][b]));
                }
            }
        }
    }

    let mut bu = Vec::new();
    for [a, b] in mesh.edges_with_tag(EdgeTag::Outer) {
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        let (d, o) = (len / 3.0, len / 6.0);
        bu.extend([(a, a, d), (b, b, d), (a, b, o), (b, a, o)]);
    }

    let mass_o = CsrMatrix::from_triplets(n_o, n_o, &mo);
    let couple = CsrMatrix::from_triplets(n_o, n_u, &mc);
    Ok(AssembledOperators {
        mass_u: CsrMatrix::from_triplets(n_u, n_u, &mu),
        stiff_u: CsrMatrix::from_triplets(n_u, n_u, &ku),
        bmass_u: CsrMatrix::from_triplets(n_u, n_u, &bu),
        lumped_o: mass_o.row_sums(),
        mass_o,
        stiff_o: CsrMatrix::from_triplets(n_o, n_o, &ko),
        couple_t: couple.transpose(),
        couple,
        grad_u: CsrMatrix::from_triplets(n_u, n_u, &gu),
    })
}

type BoundaryFn = dyn Fn(Point, f64) -> f64 + Send + Sync;

/// Exterior temperature `g(x, t)` on the outer surface.
#[derive(Clone)]
pub struct BoundaryData {
    f: Arc<BoundaryFn>,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BoundaryData(..)")
    }
}

impl BoundaryData {
    pub fn from_fn(f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_fn(move |_, _| c)
    }

    /// `start − rate·t`, held at `floor` once reached (if given).
    pub fn cooling_ramp(start: f64, rate: f64, floor: Option<f64>) -> Self {
        Self::from_fn(move |_, t| {
            let v = start - rate * t;
            match floor {
                Some(f) if rate >= 0.0 => v.max(f),
                Some(f) => v.min(f),
                None => v,
            }
        })
    }

    /// Piecewise-linear interpolation of `(t, value)` samples, constant
    /// outside the sampled range. Samples must be sorted by time.
    pub fn table(samples: Vec<(f64, f64)>) -> Self {
        Self::from_fn(move |_, t| interpolate_table(&samples, t))
    }

    /// `g + eps·profile(x)`
    pub fn with_spatial_perturbation(
        &self,
        eps: f64,
        profile: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let base = self.f.clone();
        Self::from_fn(move |p, t| base(p, t) + eps * profile(p))
    }

    pub fn eval(&self, p: Point, t: f64) -> f64 {
        (self.f)(p, t)
    }
}

pub(crate) fn interpolate_table(samples: &[(f64, f64)], t: f64) -> f64 {
    match samples {
        [] => f64::NAN,
        [(_, v)] => *v,
        _ => {
            if t <= samples[0].0 {
                return samples[0].1;
            }
            for w in samples.windows(2) {
                let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                if t <= t1 {
                    let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                    return v0 + s * (v1 - v0);
                }
            }
            samples[samples.len() - 1].1
        }
    }
}

/// `λ ∫_∂U g(·, t) ζ_i` for the linear trace of the nodal boundary values.
pub fn assemble_boundary_load(
    mesh: &Mesh,
    params: &ModelParams,
    g: &BoundaryData,
    t: f64,
) -> Result<Vec<f64>> {
    if !(t >= 0.0 && t <= params.t_end * (1.0 + 1e-9) + 1e-12) {
        return Err(Error::TimeRange {
            t,
            t_end: params.t_end,
        });
    }
    let mut load = vec![0.0; mesh.n_nodes()];
    if params.lambda_bc == 0.0 {
        return Ok(load);
    }
    let eval = |n: usize| {
        let p = mesh.nodes[n];
        let v = g.eval(p, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::BoundaryEval { x: p[0], y: p[1], t })
        }
    };
    for [a, b] in mesh.edges_with_tag(EdgeTag::Outer) {
        let (ga, gb) = (eval(a)?, eval(b)?);
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        load[a] += params.lambda_bc * len * (2.0 * ga + gb) / 6.0;
        load[b] += params.lambda_bc * len * (ga + 2.0 * gb) / 6.0;
    }
    Ok(load)
}

type ValueFn = dyn Fn(Point) -> f64 + Send + Sync;
type GradFn = dyn Fn(Point) -> [f64; 2] + Send + Sync;

/// A scalar field on the plane, optionally with its exact gradient.
#[derive(Clone)]
pub struct ScalarField {
    value: Arc<ValueFn>,
    grad: Option<Arc<GradFn>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField(..)")
    }
}

impl ScalarField {
    pub fn new(value: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            grad: None,
        }
    }

    pub fn with_gradient(
        value: impl Fn(Point) -> f64 + Send + Sync + 'static,
        grad: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            grad: Some(Arc::new(grad)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::with_gradient(move |_| c, |_| [0.0, 0.0])
    }

    pub fn eval(&self, p: Point) -> f64 {
        (self.value)(p)
    }

    /// Exact gradient when supplied, central differences otherwise.
    pub fn gradient(&self, p: Point) -> [f64; 2] {
        if let Some(g) = &self.grad {
            return g(p);
        }
        let h = 1e-6 * (1.0 + p[0].abs().max(p[1].abs()));
        let f = &self.value;
        [
            (f([p[0] + h, p[1]]) - f([p[0] - h, p[1]])) / (2.0 * h),
            (f([p[0], p[1] + h]) - f([p[0], p[1] - h])) / (2.0 * h),
        ]
    }

    /// `self + eps·other`
    pub fn plus_scaled(&self, eps: f64, other: &ScalarField) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let (ga, gb) = (self.clone(), other.clone());
        Self::with_gradient(
            move |p| a.eval(p) + eps * b.eval(p),
            move |p| {
                let (x, y) = (ga.gradient(p), gb.gradient(p));
                [x[0] + eps * y[0], x[1] + eps * y[1]]
            },
        )
    }
}

/// Edge-midpoint quadrature (exact for quadratics): points and the values of
/// the three hat functions at each point.
fn midpoint_rule(p: [Point; 3]) -> [(Point, [f64; 3]); 3] {
    let mid = |a: usize, b: usize| [0.5 * (p[a][0] + p[b][0]), 0.5 * (p[a][1] + p[b][1])];
    [
        (mid(0, 1), [0.5, 0.5, 0.0]),
        (mid(1, 2), [0.0, 0.5, 0.5]),
        (mid(2, 0), [0.5, 0.0, 0.5]),
    ]
}

/// `∫_U f ζ_i`
pub fn l2_load_u(mesh: &Mesh, f: &ScalarField) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let w = mesh.signed_area(t) / 3.0;
        for (q, hat) in midpoint_rule(p) {
            let fq = f.eval(q);
            for a in 0..3 {
                load[tri[a]] += w * fq * hat[a];
            }
        }
    }
    load
}

/// `∫_Ω (f ω_i + ∇f·∇ω_i)`
pub fn h1_load_o(mesh: &Mesh, f: &ScalarField) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_omega()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.tri_region[t] != Region::Medium {
            continue;
        }
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let area = mesh.signed_area(t);
        let w = area / 3.0;
        let area2 = 2.0 * area;
        let hat_grad = |a: usize| {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            [(p[b][1] - p[c][1]) / area2, (p[c][0] - p[b][0]) / area2]
        };
        for (q, hat) in midpoint_rule(p) {
            let fq = f.eval(q);
            let gq = f.gradient(q);
            for a in 0..3 {
                let o = mesh.omega_of_u[tri[a]].expect("medium node without Ω index");
                let ga = hat_grad(a);
                load[o] += w * (fq * hat[a] + gq[0] * ga[0] + gq[1] * ga[1]);
            }
        }
    }
    load
}

/// Initial state: L²(U) projection of `u0` and H¹(Ω) projection of `phi0`.
pub fn project_initial_data(
    mesh: &Mesh,
    ops: &AssembledOperators,
    u0: &ScalarField,
    phi0: &ScalarField,
) -> Result<FieldState> {
    const TOL: f64 = 1e-12;
    let maxit = 10 * (mesh.n_nodes() + 10);
    let u = solve_spd(&ops.mass_u, &l2_load_u(mesh, u0), TOL, maxit)?;
    let h1 = CsrMatrix::linear_combination(&[(1.0, &ops.mass_o), (1.0, &ops.stiff_o)]);
    let phi = solve_spd(&h1, &h1_load_o(mesh, phi0), TOL, maxit)?;
    let n_o = phi.len();
    Ok(FieldState {
        t: 0.0,
        u,
        phi,
        phi_dot: vec![0.0; n_o],
    })
}
