//! Legacy ASCII VTK export of a tetrahedral mesh with one nodal vector field.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mesh::{Point, TetMesh};

/// VTK cell type id of a linear tetrahedron.
pub const VTK_TETRA: u8 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VtkError {
    #[error("field has {found} vectors but the mesh has {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },
}

/// Renders an unstructured grid with `field` attached as `POINT_DATA VECTORS`.
pub fn export_vtk(mesh: &TetMesh, field: &[Point], name: &str) -> Result<String, VtkError> {
    if field.len() != mesh.node_count() {
        return Err(VtkError::LengthMismatch {
            expected: mesh.node_count(),
            found: field.len(),
        });
    }
    let name: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("meshgnn displacement field\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.node_count());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:e} {:e} {:e}", p[0], p[1], p[2]);
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.tet_count(), 5 * mesh.tet_count());
    for t in mesh.tets() {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.tet_count());
    for _ in mesh.tets() {
        let _ = writeln!(s, "{VTK_TETRA}");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.node_count());
    let _ = writeln!(s, "VECTORS {name} double");
    for v in field {
        let _ = writeln!(s, "{:e} {:e} {:e}", v[0], v[1], v[2]);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_synthetic_mesh, Region};

    #[test]
    fn single_tet_has_one_cell() {
        let nodes = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mesh = TetMesh::new(nodes, vec![[0, 1, 2, 3]], vec![Region::Healthy]).unwrap();
        let text = export_vtk(&mesh, &[[0.0; 3]; 4], "u").unwrap();
        assert!(text.contains("CELLS 1 5\n4 0 1 2 3\n"));
        assert!(text.contains("CELL_TYPES 1\n10\n"));
    }

    #[test]
    fn zero_field_block_is_all_zero() {
        let mesh = generate_synthetic_mesh(2, 2, 3, 1.0, None).unwrap();
        let text = export_vtk(&mesh, &vec![[0.0; 3]; 12], "displacement").unwrap();
        let vectors: Vec<&str> = text.split("VECTORS displacement double\n").nth(1).unwrap().lines().collect();
        assert_eq!(vectors.len(), 12);
        assert!(vectors.iter().all(|l| *l == "0e0 0e0 0e0"));
        assert!(text.contains("POINTS 12 double"));
    }

    #[test]
    fn length_mismatch() {
        let mesh = generate_synthetic_mesh(2, 2, 2, 1.0, None).unwrap();
        assert_eq!(
            export_vtk(&mesh, &[[0.0; 3]; 3], "u").unwrap_err(),
            VtkError::LengthMismatch { expected: 8, found: 3 }
        );
    }
}
