//! Legacy-VTK (ASCII, version 3.0) unstructured-grid snapshots.

use std::io::{self, Write};

use crate::geometry::{Mesh, Region};
use crate::stepper::FieldState;

/// Value written for `phi` on nodes that belong to the wall only.
pub const PHI_SENTINEL: f64 = -9999.0;

fn region_id(r: Region) -> u8 {
    match r {
        Region::Medium => 0,
        Region::Wall => 1,
    }
}

/// Geometry plus the `region` cell field, no point data.
pub fn write_mesh<W: Write>(w: &mut W, mesh: &Mesh, title: &str) -> io::Result<()> {
    write_grid(w, mesh, title)?;
    write_cell_data(w, mesh)
}

/// `u` on every node, `phi` on Ω nodes ([`PHI_SENTINEL`] elsewhere),
/// `region` per triangle.
pub fn write_snapshot<W: Write>(w: &mut W, mesh: &Mesh, state: &FieldState) -> io::Result<()> {
    write_grid(w, mesh, &format!("caginalp t={}", state.t))?;
    let n = mesh.n_nodes();
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "SCALARS u double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in &state.u {
        writeln!(w, "{v}")?;
    }
    writeln!(w, "SCALARS phi double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for slot in &mesh.omega_of_u {
        match slot {
            Some(k) => writeln!(w, "{}", state.phi[*k])?,
            None => writeln!(w, "{PHI_SENTINEL}")?,
        }
    }
    write_cell_data(w, mesh)
}

fn write_grid<W: Write>(w: &mut W, mesh: &Mesh, title: &str) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    // the title line is limited to 256 characters and must be a single line
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for p in &mesh.nodes {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    let nt = mesh.triangles.len();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        // VTK_TRIANGLE
        writeln!(w, "5")?;
    }
    Ok(())
}

fn write_cell_data<W: Write>(w: &mut W, mesh: &Mesh) -> io::Result<()> {
    writeln!(w, "CELL_DATA {}", mesh.triangles.len())?;
    writeln!(w, "SCALARS region int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for r in &mesh.tri_region {
        writeln!(w, "{}", region_id(*r))?;
    }
    Ok(())
}
