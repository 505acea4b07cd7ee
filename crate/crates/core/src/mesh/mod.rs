//! Tetrahedral meshes and the node graph derived from them.
//!
//! Coordinates are in millimetres. A [`TetMesh`] is immutable once built and is
//! shared read-only by the FEM oracle, the data generator and the GNN.

mod boundary;
mod graph;
mod synthetic;
mod tetgen;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boundary::{
    boundary_faces, nodes_on_box_face, surface_normals, BoundarySets, BoxFace, MeshSummary,
};
pub use graph::{Arcs, MeshGraph};
pub use synthetic::{generate_synthetic_mesh, Aabb};
pub use tetgen::{parse_tetgen, write_tetgen_ele, write_tetgen_node, TUMOUR_ATTRIBUTE};

pub type Point = [f64; 3];

/// Tissue label carried by each tetrahedron.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    #[default]
    Healthy,
    Tumour,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    MissingHeader,
    BadNumber(String),
    TooFewFields { expected: usize, found: usize },
    CountMismatch { declared: usize, found: usize },
    UnsupportedDimension(usize),
    UnsupportedNodesPerTet(usize),
    NonSequentialId { expected: usize, found: usize },
    IndexOutOfRange { index: usize, nodes: usize },
    RepeatedVertex,
    Degenerate { volume: f64 },
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::MissingHeader => write!(f, "missing header line"),
            Self::BadNumber(tok) => write!(f, "cannot parse number {tok:?}"),
            Self::TooFewFields { expected, found } => {
                write!(f, "expected at least {expected} fields, found {found}")
            }
            Self::CountMismatch { declared, found } => {
                write!(f, "header declares {declared} entries, found {found}")
            }
            Self::UnsupportedDimension(d) => write!(f, "dimension {d} is not 3"),
            Self::UnsupportedNodesPerTet(n) => write!(f, "{n} nodes per tetrahedron (expected 4 or 10)"),
            Self::NonSequentialId { expected, found } => {
                write!(f, "expected entry id {expected}, found {found}")
            }
            Self::IndexOutOfRange { index, nodes } => {
                write!(f, "node index {index} out of range for {nodes} nodes")
            }
            Self::RepeatedVertex => write!(f, "tetrahedron repeats a vertex"),
            Self::Degenerate { volume } => write!(f, "degenerate tetrahedron (volume {volume:e})"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("{file} line {line}: {kind}")]
    Parse {
        file: &'static str,
        line: usize,
        kind: ParseErrorKind,
    },
    #[error("tetrahedron {tet} references node {index}, but the mesh has {nodes} nodes")]
    IndexOutOfRange { tet: usize, index: usize, nodes: usize },
    #[error("tetrahedron {tet} repeats a vertex")]
    RepeatedVertex { tet: usize },
    #[error("tetrahedron {tet} is degenerate (volume {volume:e})")]
    Degenerate { tet: usize, volume: f64 },
    #[error("nodes {first} and {second} share identical coordinates")]
    DuplicateNode { first: usize, second: usize },
    #[error("{regions} region tags for {tets} tetrahedra")]
    RegionCount { regions: usize, tets: usize },
    #[error("adjacent nodes {u} and {v} are coincident")]
    CoincidentNodes { u: usize, v: usize },
    #[error("grid needs at least 2 nodes per axis, got {0}x{1}x{2}")]
    EmptyGrid(usize, usize, usize),
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("node {0} is both fixed and a load candidate")]
    BoundaryOverlap(usize),
    #[error("node index {index} out of range for {nodes} nodes")]
    NodeOutOfRange { index: usize, nodes: usize },
    #[error("mesh has no boundary faces")]
    NoBoundary,
}

/// Signed volume of the tetrahedron `(a, b, c, d)`: positive when `d` lies on
/// the side of triangle `abc` that its counter-clockwise normal points to.
pub fn signed_volume(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let u = sub(b, a);
    let v = sub(c, a);
    let w = sub(d, a);
    dot(u, cross(v, w)) / 6.0
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Volume below which a tetrahedron counts as degenerate, relative to the cube
/// of its mean edge length.
pub const DEGENERATE_RELATIVE_VOLUME: f64 = 1e-12;

fn mean_edge_length(p: [Point; 4]) -> f64 {
    let mut total = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            total += norm(sub(p[i], p[j]));
        }
    }
    total / 6.0
}

/// Classifies one tetrahedron: `Ok(volume)` (possibly negative) or the reason
/// it is unusable.
pub(crate) fn check_tet(nodes: &[Point], tet: [usize; 4]) -> Result<f64, ParseErrorKind> {
    for &i in &tet {
        if i >= nodes.len() {
            return Err(ParseErrorKind::IndexOutOfRange {
                index: i,
                nodes: nodes.len(),
            });
        }
    }
    for i in 0..4 {
        for j in i + 1..4 {
            if tet[i] == tet[j] {
                return Err(ParseErrorKind::RepeatedVertex);
            }
        }
    }
    let p = tet.map(|i| nodes[i]);
    let volume = signed_volume(p[0], p[1], p[2], p[3]);
    let scale = mean_edge_length(p);
    if !(volume.abs() >= DEGENERATE_RELATIVE_VOLUME * scale.powi(3)) || scale == 0.0 {
        return Err(ParseErrorKind::Degenerate { volume });
    }
    Ok(volume)
}

/// Tetrahedral volume mesh.
///
/// Invariants: every index is in range, each tetrahedron has four distinct
/// vertices ordered so its [`signed_volume`] is positive, and no two nodes
/// share coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TetMesh {
    nodes: Vec<Point>,
    tets: Vec<[usize; 4]>,
    regions: Vec<Region>,
}

impl TetMesh {
    /// Validates and builds a mesh. Negatively oriented tetrahedra are
    /// reordered (last two vertices swapped); degenerate ones are rejected.
    pub fn new(
        nodes: Vec<Point>,
        mut tets: Vec<[usize; 4]>,
        regions: Vec<Region>,
    ) -> Result<Self, MeshError> {
        if regions.len() != tets.len() {
            return Err(MeshError::RegionCount {
                regions: regions.len(),
                tets: tets.len(),
            });
        }
        for (t, tet) in tets.iter_mut().enumerate() {
            match check_tet(&nodes, *tet) {
                Ok(v) if v < 0.0 => tet.swap(2, 3),
                Ok(_) => {}
                Err(ParseErrorKind::IndexOutOfRange { index, nodes }) => {
                    return Err(MeshError::IndexOutOfRange { tet: t, index, nodes })
                }
                Err(ParseErrorKind::RepeatedVertex) => {
                    return Err(MeshError::RepeatedVertex { tet: t })
                }
                Err(ParseErrorKind::Degenerate { volume }) => {
                    return Err(MeshError::Degenerate { tet: t, volume })
                }
                Err(other) => unreachable!("check_tet returned {other:?}"),
            }
        }
        let mut seen: HashMap<[u64; 3], usize> = HashMap::with_capacity(nodes.len());
        for (i, p) in nodes.iter().enumerate() {
            // +0.0 and -0.0 must collide.
            let key = p.map(|c| (c + 0.0).to_bits());
            if let Some(&first) = seen.get(&key) {
                return Err(MeshError::DuplicateNode { first, second: i });
            }
            seen.insert(key, i);
        }
        Ok(Self {
            nodes,
            tets,
            regions,
        })
    }

    /// Builds a mesh without any validation. Only for callers that construct
    /// deliberately invalid meshes, such as error-path tests.
    #[doc(hidden)]
    pub fn from_raw_unchecked(nodes: Vec<Point>, tets: Vec<[usize; 4]>, regions: Vec<Region>) -> Self {
        Self {
            nodes,
            tets,
            regions,
        }
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|i| self.nodes[i])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let p = self.tet_points(t);
        signed_volume(p[0], p[1], p[2], p[3])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// Nodes touching at least one tumour tetrahedron.
    pub fn tumour_nodes(&self) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for (tet, region) in self.tets.iter().zip(&self.regions) {
            if *region == Region::Tumour {
                tet.iter().for_each(|&i| flags[i] = true);
            }
        }
        flags
    }

    /// Axis-aligned bounding box of all nodes.
    pub fn bounds(&self) -> Aabb {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &self.nodes {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Aabb { min, max }
    }

    /// Relabels nodes: old node `i` becomes node `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self, MeshError> {
        assert_eq!(perm.len(), self.nodes.len(), "permutation length");
        let mut nodes = vec![[0.0; 3]; self.nodes.len()];
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = self.nodes[old];
        }
        let tets = self.tets.iter().map(|t| t.map(|i| perm[i])).collect();
        Self::new(nodes, tets, self.regions.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tet() -> Vec<Point> {
        vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    }

    #[test]
    fn negative_orientation_is_fixed() {
        let mesh = TetMesh::new(unit_tet(), vec![[0, 2, 1, 3]], vec![Region::Healthy]).unwrap();
        assert!((mesh.tet_volume(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_tet_is_rejected() {
        let mut nodes = unit_tet();
        nodes[3] = [0.5, 0.5, 0.0];
        let err = TetMesh::new(nodes, vec![[0, 1, 2, 3]], vec![Region::Healthy]).unwrap_err();
        assert!(matches!(err, MeshError::Degenerate { tet: 0, .. }));
    }

    #[test]
    fn duplicate_coordinates_are_rejected() {
        let mut nodes = unit_tet();
        nodes.push([1.0, 0.0, 0.0]);
        let err = TetMesh::new(nodes, vec![[0, 1, 2, 3]], vec![Region::Healthy]).unwrap_err();
        assert_eq!(err, MeshError::DuplicateNode { first: 1, second: 4 });
    }

    #[test]
    fn out_of_range_and_repeated_indices() {
        let err = TetMesh::new(unit_tet(), vec![[0, 1, 2, 9]], vec![Region::Healthy]).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 9, .. }));
        let err = TetMesh::new(unit_tet(), vec![[0, 1, 1, 3]], vec![Region::Healthy]).unwrap_err();
        assert_eq!(err, MeshError::RepeatedVertex { tet: 0 });
    }
}
