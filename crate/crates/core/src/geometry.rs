//! Nested-rectangle triangulations of the container `U = D ∪ Ω̄`.
//!
//! The outer rectangle is `[0, w] × [0, h]`; the medium `Ω` is the inner
//! rectangle inset by the wall thickness on every side, and the wall `D` is
//! the frame between them. Grid lines are placed so that `∂Ω` lies exactly on
//! mesh edges, and interface nodes are shared between the two regions.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Medium,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeTag {
    Outer,
    Interface,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub outer_width: f64,
    pub outer_height: f64,
    pub wall_thickness: f64,
    pub target_h: f64,
}

impl MeshSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("outer_width", self.outer_width),
            ("outer_height", self.outer_height),
            ("wall_thickness", self.wall_thickness),
            ("target_h", self.target_h),
        ] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be positive and finite (got {v})"));
            }
        }
        if problems.is_empty() {
            if self.outer_width <= 2.0 * self.wall_thickness {
                problems.push(format!(
                    "outer_width {} leaves no interior for wall_thickness {}",
                    self.outer_width, self.wall_thickness
                ));
            }
            if self.outer_height <= 2.0 * self.wall_thickness {
                problems.push(format!(
                    "outer_height {} leaves no interior for wall_thickness {}",
                    self.outer_height, self.wall_thickness
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::MeshSpec(problems.join("; ")))
        }
    }

    pub fn medium_width(&self) -> f64 {
        self.outer_width - 2.0 * self.wall_thickness
    }

    pub fn medium_height(&self) -> f64 {
        self.outer_height - 2.0 * self.wall_thickness
    }

    /// `|Ω|`
    pub fn medium_area(&self) -> f64 {
        self.medium_width() * self.medium_height()
    }
}

/// Triangulation with region and boundary tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub tri_region: Vec<Region>,
    pub boundary_edges: Vec<([usize; 2], EdgeTag)>,
    /// U-node index → Ω-node index, for nodes touched by a medium triangle.
    pub omega_of_u: Vec<Option<usize>>,
    /// Ω-node index → U-node index.
    pub u_of_omega: Vec<usize>,
}

impl Mesh {
    /// Assembles a mesh from raw parts, deriving the boundary edge tags and the
    /// U↔Ω node maps from the triangle regions.
    pub fn from_parts(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, tri_region: Vec<Region>) -> Self {
        assert_eq!(triangles.len(), tri_region.len());
        let mut boundary_edges = Vec::new();
        for (edge, tris) in edge_map(&triangles) {
            match tris.as_slice() {
                [_] => boundary_edges.push((edge, EdgeTag::Outer)),
                [a, b] if tri_region[*a] != tri_region[*b] => {
                    boundary_edges.push((edge, EdgeTag::Interface))
                }
                _ => {}
            }
        }
        let (omega_of_u, u_of_omega) = omega_maps(nodes.len(), &triangles, &tri_region);
        Self {
            nodes,
            triangles,
            tri_region,
            boundary_edges,
            omega_of_u,
            u_of_omega,
        }
    }

    /// Tensor-product grid on the given coordinate lines; each cell is split
    /// along its lower-left/upper-right diagonal. `region` classifies a cell
    /// by its centre.
    pub fn structured(xs: &[f64], ys: &[f64], region: impl Fn(Point) -> Region) -> Self {
        let nx = xs.len();
        let id = |i: usize, j: usize| j * nx + i;
        let nodes: Vec<Point> = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
            .collect();
        let mut triangles = Vec::new();
        let mut tri_region = Vec::new();
        for j in 0..ys.len() - 1 {
            for i in 0..nx - 1 {
                let centre = [0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])];
                let r = region(centre);
                let (n00, n10, n01, n11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                triangles.push([n00, n10, n11]);
                triangles.push([n00, n11, n01]);
                tri_region.push(r);
                tri_region.push(r);
            }
        }
        Self::from_parts(nodes, triangles, tri_region)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_omega(&self) -> usize {
        self.u_of_omega.len()
    }

    pub fn signed_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.tri_region[t] == region)
            .map(|t| self.signed_area(t))
            .sum()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn edges_with_tag(&self, tag: EdgeTag) -> impl Iterator<Item = [usize; 2]> + '_ {
        self.boundary_edges
            .iter()
            .filter(move |(_, t)| *t == tag)
            .map(|(e, _)| *e)
    }

    pub fn outer_perimeter(&self) -> f64 {
        self.edges_with_tag(EdgeTag::Outer)
            .map(|[a, b]| dist(self.nodes[a], self.nodes[b]))
            .sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(p, q)| dist(self.nodes[p], self.nodes[q]))
            .fold(0.0, f64::max)
    }

    /// True for U-nodes that carry no phase value (pure wall nodes).
    pub fn is_wall_only(&self, node: usize) -> bool {
        self.omega_of_u[node].is_none()
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn sorted_edge(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Undirected edge → adjacent triangles, in a deterministic order.
fn edge_map(triangles: &[[usize; 3]]) -> BTreeMap<[usize; 2], Vec<usize>> {
    let mut map: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (t, &[a, b, c]) in triangles.iter().enumerate() {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            map.entry(sorted_edge(p, q)).or_default().push(t);
        }
    }
    map
}

fn omega_maps(
    n_nodes: usize,
    triangles: &[[usize; 3]],
    tri_region: &[Region],
) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut touched = vec![false; n_nodes];
    for (tri, r) in triangles.iter().zip(tri_region) {
        if *r == Region::Medium {
            for &n in tri {
                touched[n] = true;
            }
        }
    }
    let mut omega_of_u = vec![None; n_nodes];
    let mut u_of_omega = Vec::new();
    for (n, &is_omega) in touched.iter().enumerate() {
        if is_omega {
            omega_of_u[n] = Some(u_of_omega.len());
            u_of_omega.push(n);
        }
    }
    (omega_of_u, u_of_omega)
}

/// Coordinates of one axis: wall segment, interior segment, wall segment,
/// each uniformly subdivided with spacing at most `h`.
fn axis_lines(total: f64, wall: f64, h: f64) -> Vec<f64> {
    let n_wall = (wall / h).ceil().max(1.0) as usize;
    let inner = total - 2.0 * wall;
    let n_inner = (inner / h).ceil().max(1.0) as usize;
    let far = total - wall;
    let mut xs = Vec::with_capacity(2 * n_wall + n_inner + 1);
    for i in 0..n_wall {
        xs.push(wall * i as f64 / n_wall as f64);
    }
    for i in 0..n_inner {
        xs.push(wall + inner * i as f64 / n_inner as f64);
    }
    for i in 0..n_wall {
        xs.push(far + wall * i as f64 / n_wall as f64);
    }
    xs.push(total);
    xs
}

/// Structured triangulation of the nested-rectangle container.
pub fn build_nested_rect_mesh(spec: &MeshSpec) -> Result<Mesh> {
    spec.validate()?;
    let t = spec.wall_thickness;
    let xs = axis_lines(spec.outer_width, t, spec.target_h);
    let ys = axis_lines(spec.outer_height, t, spec.target_h);
    let (x_hi, y_hi) = (spec.outer_width - t, spec.outer_height - t);
    Ok(Mesh::structured(&xs, &ys, |[x, y]| {
        if x > t && x < x_hi && y > t && y < y_hi {
            Region::Medium
        } else {
            Region::Wall
        }
    }))
}

/// One broken mesh invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NodeOutOfRange { triangle: usize, node: usize },
    NonPositiveArea { triangle: usize, area: f64 },
    /// Edge shared by more than two triangles.
    NonManifoldEdge { edge: [usize; 2], triangles: usize },
    /// Edge bounding one triangle without an OUTER tag (hanging node or hole).
    UntaggedBoundaryEdge { edge: [usize; 2] },
    /// OUTER edge that does not bound exactly one triangle.
    OuterEdgeNotOnBoundary { edge: [usize; 2], triangles: usize },
    /// INTERFACE edge not separating a medium and a wall triangle.
    InterfaceTagMismatch { edge: [usize; 2] },
    /// Medium/wall edge missing its INTERFACE tag.
    MissingInterfaceTag { edge: [usize; 2] },
    OmegaMap { node: usize, reason: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeOutOfRange { triangle, node } => {
                write!(f, "triangle {triangle}: node index {node} out of range")
            }
            Violation::NonPositiveArea { triangle, area } => {
                write!(f, "triangle {triangle}: negative area {area:e}")
            }
            Violation::NonManifoldEdge { edge, triangles } => {
                write!(f, "edge {edge:?}: shared by {triangles} triangles")
            }
            Violation::UntaggedBoundaryEdge { edge } => {
                write!(f, "edge {edge:?}: bounds one triangle but is not tagged OUTER")
            }
            Violation::OuterEdgeNotOnBoundary { edge, triangles } => {
                write!(f, "edge {edge:?}: tagged OUTER but bounds {triangles} triangles")
            }
            Violation::InterfaceTagMismatch { edge } => {
                write!(f, "edge {edge:?}: tagged INTERFACE but does not separate MEDIUM and WALL")
            }
            Violation::MissingInterfaceTag { edge } => {
                write!(f, "edge {edge:?}: separates MEDIUM and WALL but is not tagged INTERFACE")
            }
            Violation::OmegaMap { node, reason } => write!(f, "node {node}: {reason}"),
        }
    }
}

/// Lists every broken mesh invariant; empty means the mesh is well formed.
pub fn validate_mesh(mesh: &Mesh) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = mesh.nodes.len();
    let mut indices_ok = true;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &node in tri {
            if node >= n {
                out.push(Violation::NodeOutOfRange { triangle: t, node });
                indices_ok = false;
            }
        }
    }
    if !indices_ok || mesh.tri_region.len() != mesh.triangles.len() {
        return out;
    }
    for t in 0..mesh.triangles.len() {
        let area = mesh.signed_area(t);
        if !(area > 0.0) {
            out.push(Violation::NonPositiveArea { triangle: t, area });
        }
    }

    let edges = edge_map(&mesh.triangles);
    let mut tags: BTreeMap<[usize; 2], EdgeTag> = BTreeMap::new();
    for &([a, b], tag) in &mesh.boundary_edges {
        tags.insert(sorted_edge(a, b), tag);
    }
    for (edge, tris) in &edges {
        match (tris.len(), tags.get(edge)) {
            (k, _) if k > 2 => out.push(Violation::NonManifoldEdge {
                edge: *edge,
                triangles: k,
            }),
            (1, Some(EdgeTag::Outer)) => {}
            (1, Some(EdgeTag::Interface)) => out.push(Violation::InterfaceTagMismatch { edge: *edge }),
            (1, None) => out.push(Violation::UntaggedBoundaryEdge { edge: *edge }),
            (2, tag) => {
                let differ = mesh.tri_region[tris[0]] != mesh.tri_region[tris[1]];
                match (tag, differ) {
                    (Some(EdgeTag::Interface), true) | (None, false) => {}
                    (Some(EdgeTag::Interface), false) => {
                        out.push(Violation::InterfaceTagMismatch { edge: *edge })
                    }
                    (Some(EdgeTag::Outer), _) => out.push(Violation::OuterEdgeNotOnBoundary {
                        edge: *edge,
                        triangles: 2,
                    }),
                    (None, true) => out.push(Violation::MissingInterfaceTag { edge: *edge }),
                }
            }
            _ => {}
        }
    }
    for (edge, tag) in &tags {
        if !edges.contains_key(edge) {
            let v = match tag {
                EdgeTag::Outer => Violation::OuterEdgeNotOnBoundary {
                    edge: *edge,
                    triangles: 0,
                },
                EdgeTag::Interface => Violation::InterfaceTagMismatch { edge: *edge },
            };
            out.push(v);
        }
    }

    let (expect_map, expect_inv) = omega_maps(n, &mesh.triangles, &mesh.tri_region);
    if mesh.omega_of_u.len() != n {
        out.push(Violation::OmegaMap {
            node: n,
            reason: "omega_of_u length differs from node count",
        });
        return out;
    }
    let mut seen = vec![false; mesh.u_of_omega.len()];
    for node in 0..n {
        match (mesh.omega_of_u[node], expect_map[node].is_some()) {
            (Some(k), true) => {
                if k >= seen.len() || mesh.u_of_omega[k] != node {
                    out.push(Violation::OmegaMap {
                        node,
                        reason: "Ω index not inverse to u_of_omega",
                    });
                } else if std::mem::replace(&mut seen[k], true) {
                    out.push(Violation::OmegaMap {
                        node,
                        reason: "Ω index assigned twice",
                    });
                }
            }
            (Some(_), false) => out.push(Violation::OmegaMap {
                node,
                reason: "mapped to Ω but touches no MEDIUM triangle",
            }),
            (None, true) => out.push(Violation::OmegaMap {
                node,
                reason: "touches a MEDIUM triangle but has no Ω index",
            }),
            (None, false) => {}
        }
    }
    if mesh.u_of_omega.len() != expect_inv.len() {
        out.push(Violation::OmegaMap {
            node: n,
            reason: "Ω index set size differs from number of Ω nodes",
        });
    }
    out
}
