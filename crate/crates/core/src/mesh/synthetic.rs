use serde::{Deserialize, Serialize};

use super::{MeshError, Point, Region, TetMesh};

/// Closed axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn contains(&self, p: Point) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Structured `nx × ny × nz` node grid with `spacing` mm between nodes.
///
/// Each hexahedral cell is split into six tetrahedra sharing the cell's main
/// diagonal (Kuhn subdivision), which is conforming across cells. Tetrahedra
/// whose centroid lies in `tumour_box` are tagged [`Region::Tumour`]. Node
/// `(i, j, k)` has index `i + nx * (j + ny * k)`.
pub fn generate_synthetic_mesh(
    nx: usize,
    ny: usize,
    nz: usize,
    spacing: f64,
    tumour_box: Option<Aabb>,
) -> Result<TetMesh, MeshError> {
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(MeshError::EmptyGrid(nx, ny, nz));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(MeshError::InvalidSpacing(spacing));
    }

    let index = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut nodes = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                nodes.push([i as f64 * spacing, j as f64 * spacing, k as f64 * spacing]);
            }
        }
    }

    const AXIS_ORDERS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];

    let mut tets = Vec::with_capacity(6 * (nx - 1) * (ny - 1) * (nz - 1));
    let mut regions = Vec::with_capacity(tets.capacity());
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                for order in AXIS_ORDERS {
                    let mut corner = [i, j, k];
                    let mut tet = [index(i, j, k), 0, 0, 0];
                    for (step, &axis) in order.iter().enumerate() {
                        corner[axis] += 1;
                        tet[step + 1] = index(corner[0], corner[1], corner[2]);
                    }
                    let centroid = centroid(&nodes, tet);
                    let region = match tumour_box {
                        Some(b) if b.contains(centroid) => Region::Tumour,
                        _ => Region::Healthy,
                    };
                    tets.push(tet);
                    regions.push(region);
                }
            }
        }
    }

    TetMesh::new(nodes, tets, regions)
}

fn centroid(nodes: &[Point], tet: [usize; 4]) -> Point {
    let mut c = [0.0; 3];
    for &i in &tet {
        for a in 0..3 {
            c[a] += nodes[i][a] / 4.0;
        }
    }
    c
}
