//! Legacy ASCII VTK output on the triangle mesh.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use chns_core::fe::ElementKind;
use chns_core::{Field, Mesh};

use crate::write_atomic;

/// Renders the mesh and vertex values of each field. P2 vector fields are
/// sampled at the mesh vertices.
pub fn render_vtk(mesh: &Mesh, fields: &[(&str, &Field)], title: &str) -> String {
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in &mesh.vertices {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "5");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
    }
    for (name, field) in fields {
        match field.kind() {
            ElementKind::P2Vector2 => {
                let n = field.dofmap.n_nodes;
                let _ = writeln!(s, "VECTORS {name} double");
                for v in 0..nv {
                    let _ = writeln!(s, "{:e} {:e} 0", field.values[v], field.values[n + v]);
                }
            }
            _ => {
                // P1 and P2 scalar nodes both start with the vertices
                let _ = writeln!(s, "SCALARS {name} double 1");
                let _ = writeln!(s, "LOOKUP_TABLE default");
                for v in 0..nv {
                    let _ = writeln!(s, "{:e}", field.values[v]);
                }
            }
        }
    }
    s
}

pub fn write_vtk(mesh: &Mesh, fields: &[(&str, &Field)], title: &str, path: &Path) -> io::Result<()> {
    write_atomic(path, render_vtk(mesh, fields, title).as_bytes())
}
