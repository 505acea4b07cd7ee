use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{cross, dot, norm, sub, MeshError, MeshGraph, Point, TetMesh};

/// Faces belonging to exactly one tetrahedron, oriented so the
/// counter-clockwise normal points out of the mesh.
pub fn boundary_faces(mesh: &TetMesh) -> Vec<[usize; 3]> {
    face_incidence(mesh)
        .into_iter()
        .filter(|(_, (count, _))| *count == 1)
        .map(|(_, (_, face))| face)
        .collect()
}

/// Sorted face key → (incident tet count, outward-oriented face of the first tet).
fn face_incidence(mesh: &TetMesh) -> BTreeMap<[usize; 3], (usize, [usize; 3])> {
    let nodes = mesh.nodes();
    let mut faces: BTreeMap<[usize; 3], (usize, [usize; 3])> = BTreeMap::new();
    for tet in mesh.tets() {
        for skip in 0..4 {
            let mut face = [0usize; 3];
            let mut k = 0;
            for (i, &n) in tet.iter().enumerate() {
                if i != skip {
                    face[k] = n;
                    k += 1;
                }
            }
            let opposite = nodes[tet[skip]];
            let [a, b, c] = face.map(|i| nodes[i]);
            if dot(cross(sub(b, a), sub(c, a)), sub(opposite, a)) > 0.0 {
                face.swap(1, 2);
            }
            let mut key = face;
            key.sort_unstable();
            faces
                .entry(key)
                .and_modify(|e| e.0 += 1)
                .or_insert((1, face));
        }
    }
    faces
}

fn interior_angle(at: Point, p: Point, q: Point) -> f64 {
    let u = sub(p, at);
    let v = sub(q, at);
    norm(cross(u, v)).atan2(dot(u, v))
}

/// Unit outward normal for every boundary node.
///
/// Each incident boundary face contributes its unit normal weighted by the
/// face's interior angle at the node. Interior nodes are absent from the map.
pub fn surface_normals(mesh: &TetMesh) -> Result<BTreeMap<usize, Point>, MeshError> {
    let faces = boundary_faces(mesh);
    if faces.is_empty() {
        return Err(MeshError::NoBoundary);
    }
    let nodes = mesh.nodes();
    let mut acc: BTreeMap<usize, Point> = BTreeMap::new();
    for face in faces {
        let p = face.map(|i| nodes[i]);
        let n = cross(sub(p[1], p[0]), sub(p[2], p[0]));
        let len = norm(n);
        let unit = n.map(|x| x / len);
        for k in 0..3 {
            let angle = interior_angle(p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let slot = acc.entry(face[k]).or_insert([0.0; 3]);
            for a in 0..3 {
                slot[a] += angle * unit[a];
            }
        }
    }
    for v in acc.values_mut() {
        let len = norm(*v);
        *v = v.map(|x| x / len);
    }
    Ok(acc)
}

/// One of the six faces of a mesh's bounding box, e.g. `ZMin` is the bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxFace {
    #[serde(rename = "x-")]
    XMin,
    #[serde(rename = "x+")]
    XMax,
    #[serde(rename = "y-")]
    YMin,
    #[serde(rename = "y+")]
    YMax,
    #[serde(rename = "z-")]
    ZMin,
    #[serde(rename = "z+")]
    ZMax,
}

impl BoxFace {
    fn axis_and_side(self) -> (usize, bool) {
        match self {
            Self::XMin => (0, false),
            Self::XMax => (0, true),
            Self::YMin => (1, false),
            Self::YMax => (1, true),
            Self::ZMin => (2, false),
            Self::ZMax => (2, true),
        }
    }
}

impl std::str::FromStr for BoxFace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "x-" => Self::XMin,
            "x+" => Self::XMax,
            "y-" => Self::YMin,
            "y+" => Self::YMax,
            "z-" => Self::ZMin,
            "z+" => Self::ZMax,
            other => return Err(format!("unknown box face {other:?} (use x-, x+, y-, y+, z-, z+)")),
        })
    }
}

/// Nodes within `tol` mm of the given bounding-box face.
pub fn nodes_on_box_face(mesh: &TetMesh, face: BoxFace, tol: f64) -> Vec<usize> {
    let bounds = mesh.bounds();
    let (axis, high) = face.axis_and_side();
    let plane = if high { bounds.max[axis] } else { bounds.min[axis] };
    mesh.nodes()
        .iter()
        .enumerate()
        .filter(|(_, p)| (p[axis] - plane).abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Fixed (zero-displacement) nodes and the free surface nodes that may carry loads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySets {
    fixed: BTreeSet<usize>,
    candidates: BTreeSet<usize>,
}

impl BoundarySets {
    /// Load candidates are all boundary nodes that are not fixed.
    pub fn from_fixed(
        mesh: &TetMesh,
        fixed: impl IntoIterator<Item = usize>,
    ) -> Result<Self, MeshError> {
        let fixed: BTreeSet<usize> = fixed.into_iter().collect();
        check_range(mesh, &fixed)?;
        let candidates = boundary_faces(mesh)
            .into_iter()
            .flatten()
            .filter(|i| !fixed.contains(i))
            .collect();
        Ok(Self { fixed, candidates })
    }

    /// Explicit sets; they must be disjoint.
    pub fn new(
        mesh: &TetMesh,
        fixed: impl IntoIterator<Item = usize>,
        candidates: impl IntoIterator<Item = usize>,
    ) -> Result<Self, MeshError> {
        let fixed: BTreeSet<usize> = fixed.into_iter().collect();
        let candidates: BTreeSet<usize> = candidates.into_iter().collect();
        check_range(mesh, &fixed)?;
        check_range(mesh, &candidates)?;
        if let Some(&n) = fixed.intersection(&candidates).next() {
            return Err(MeshError::BoundaryOverlap(n));
        }
        Ok(Self { fixed, candidates })
    }

    pub fn fixed(&self) -> &BTreeSet<usize> {
        &self.fixed
    }

    pub fn candidates(&self) -> &BTreeSet<usize> {
        &self.candidates
    }

    pub fn is_fixed(&self, node: usize) -> bool {
        self.fixed.contains(&node)
    }
}

fn check_range(mesh: &TetMesh, set: &BTreeSet<usize>) -> Result<(), MeshError> {
    match set.iter().next_back() {
        Some(&max) if max >= mesh.node_count() => Err(MeshError::NodeOutOfRange {
            index: max,
            nodes: mesh.node_count(),
        }),
        _ => Ok(()),
    }
}

/// Counts reported after mesh import or generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub points: usize,
    pub tetrahedra: usize,
    pub faces: usize,
    pub exterior_faces: usize,
    pub edges: usize,
    pub tumour_tetrahedra: usize,
    pub volume_mm3: f64,
}

impl MeshSummary {
    pub fn new(mesh: &TetMesh, graph: &MeshGraph) -> Self {
        let faces = face_incidence(mesh);
        let exterior = faces.values().filter(|(c, _)| *c == 1).count();
        let mut tumour = HashMap::new();
        for r in mesh.regions() {
            *tumour.entry(*r).or_insert(0usize) += 1;
        }
        Self {
            points: mesh.node_count(),
            tetrahedra: mesh.tet_count(),
            faces: faces.len(),
            exterior_faces: exterior,
            edges: graph.edge_count(),
            tumour_tetrahedra: tumour.get(&super::Region::Tumour).copied().unwrap_or(0),
            volume_mm3: mesh.total_volume(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_synthetic_mesh;

    fn close(a: Point, b: Point) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() < 1e-12)
    }

    #[test]
    fn cube_corners_point_diagonally() {
        let mesh = generate_synthetic_mesh(3, 4, 3, 1.5, None).unwrap();
        let normals = surface_normals(&mesh).unwrap();
        let s = 1.0 / 3f64.sqrt();
        let b = mesh.bounds();
        for (i, p) in mesh.nodes().iter().enumerate() {
            let at_corner = (0..3).all(|a| p[a] == b.min[a] || p[a] == b.max[a]);
            if at_corner {
                let expected = [0, 1, 2].map(|a| if p[a] == b.min[a] { -s } else { s });
                assert!(close(normals[&i], expected), "node {i}: {:?}", normals[&i]);
            }
        }
    }

    #[test]
    fn flat_face_interior_uses_face_normal() {
        let mesh = generate_synthetic_mesh(3, 3, 3, 1.0, None).unwrap();
        let normals = surface_normals(&mesh).unwrap();
        // Centre of the top face: (1, 1, 2) -> index 1 + 3 * (1 + 3 * 2).
        assert!(close(normals[&22], [0.0, 0.0, 1.0]));
        // Centre of the x- face: (0, 1, 1).
        assert!(close(normals[&12], [-1.0, 0.0, 0.0]));
    }

    #[test]
    fn interior_node_is_absent() {
        let mesh = generate_synthetic_mesh(3, 3, 3, 1.0, None).unwrap();
        let normals = surface_normals(&mesh).unwrap();
        assert!(!normals.contains_key(&13));
        assert_eq!(normals.len(), 26);
    }

    #[test]
    fn boundary_sets_are_disjoint() {
        let mesh = generate_synthetic_mesh(3, 3, 3, 1.0, None).unwrap();
        let fixed = nodes_on_box_face(&mesh, BoxFace::ZMin, 1e-9);
        assert_eq!(fixed.len(), 9);
        let sets = BoundarySets::from_fixed(&mesh, fixed).unwrap();
        assert_eq!(sets.candidates().len(), 26 - 9);
        assert!(sets.fixed().is_disjoint(sets.candidates()));
        assert_eq!(
            BoundarySets::new(&mesh, [0, 1], [1, 2]).unwrap_err(),
            MeshError::BoundaryOverlap(1)
        );
    }

    #[test]
    fn summary_counts_faces() {
        let mesh = generate_synthetic_mesh(2, 2, 2, 1.0, None).unwrap();
        let g = MeshGraph::build(&mesh).unwrap();
        let s = MeshSummary::new(&mesh, &g);
        assert_eq!(s.points, 8);
        assert_eq!(s.tetrahedra, 6);
        assert_eq!(s.exterior_faces, 12);
        // 12 exterior + 6 interior faces around the main diagonal.
        assert_eq!(s.faces, 18);
        assert_eq!(s.edges, 19);
    }
}
