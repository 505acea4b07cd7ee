use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::fem::{DisplacementField, LoadCase};
use crate::mesh::{Point, Region, TetMesh};

use super::DatagenError;

/// Per-node input features: `F_x, F_y, F_z, F_ρ, F_θ, F_φ, physical property`.
pub const FEATURE_COUNT: usize = 7;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["F_x", "F_y", "F_z", "F_rho", "F_theta", "F_phi", "physical_property"];

/// The surface normal followed by `n_random` directions drawn uniformly from
/// the closed hemisphere around it.
pub fn sample_directions(normal: Point, n_random: usize, seed: u64) -> Result<Vec<Point>, DatagenError> {
    let len = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
    if !(len > 0.0) || !len.is_finite() {
        return Err(DatagenError::ZeroNormal);
    }
    let normal = normal.map(|x| x / len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_random + 1);
    out.push(normal);
    for _ in 0..n_random {
        let d: [f64; 3] = UnitSphere.sample(&mut rng);
        let side = d[0] * normal[0] + d[1] * normal[1] + d[2] * normal[2];
        out.push(if side < 0.0 { d.map(|x| -x) } else { d });
    }
    Ok(out)
}

/// Spherical coordinates `(ρ, θ, φ)`: θ measured from +z, φ the azimuth from +x.
/// The zero vector maps to all zeros.
pub fn to_polar(f: Point) -> (f64, f64, f64) {
    let rho = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
    if rho == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let theta = (f[2] / rho).clamp(-1.0, 1.0).acos();
    let phi = f[1].atan2(f[0]);
    (rho, theta, phi)
}

/// 0 for fixed nodes, 0.4 for free tumour nodes and 1 for free healthy nodes.
pub fn physical_property(region: Region, fixed: bool) -> f64 {
    if fixed {
        0.0
    } else if region == Region::Tumour {
        0.4
    } else {
        1.0
    }
}

/// A node is tumour if any incident tetrahedron is.
pub fn node_regions(mesh: &TetMesh) -> Vec<Region> {
    mesh.tumour_nodes()
        .into_iter()
        .map(|t| if t { Region::Tumour } else { Region::Healthy })
        .collect()
}

/// Identifies the load case a sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Index into the manifest's list of load-node selections.
    pub selection: usize,
    pub direction: usize,
    pub time_step: usize,
}

/// One training example on a fixed mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    /// Row-major `nodes × FEATURE_COUNT`.
    pub features: Vec<f64>,
    /// Row-major `nodes × 3` displacements in mm.
    pub labels: Vec<f64>,
    pub load_nodes: Vec<usize>,
    pub provenance: Provenance,
}

impl GraphSample {
    pub fn node_count(&self) -> usize {
        self.labels.len() / 3
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.features[node * FEATURE_COUNT..(node + 1) * FEATURE_COUNT]
    }

    pub fn label(&self, node: usize) -> Point {
        [self.labels[3 * node], self.labels[3 * node + 1], self.labels[3 * node + 2]]
    }
}

/// Builds samples for one mesh and fixed-node set.
#[derive(Clone, Debug)]
pub struct FeatureBuilder {
    property: Vec<f64>,
}

impl FeatureBuilder {
    pub fn new(mesh: &TetMesh, fixed: &BTreeSet<usize>) -> Self {
        let property = node_regions(mesh)
            .into_iter()
            .enumerate()
            .map(|(i, r)| physical_property(r, fixed.contains(&i)))
            .collect();
        Self { property }
    }

    pub fn node_count(&self) -> usize {
        self.property.len()
    }

    /// Feature matrix of a case with no oracle labels attached.
    pub fn features(&self, case: &LoadCase) -> Result<Vec<f64>, DatagenError> {
        let n = self.property.len();
        let mut features = vec![0.0; n * FEATURE_COUNT];
        for (i, &p) in self.property.iter().enumerate() {
            features[i * FEATURE_COUNT + 6] = p;
        }
        let f = case.force_per_node;
        let (rho, theta, phi) = to_polar(f);
        for &v in &case.load_nodes {
            if v >= n {
                return Err(DatagenError::NodeOutOfRange { index: v, nodes: n });
            }
            let row = &mut features[v * FEATURE_COUNT..v * FEATURE_COUNT + 6];
            row.copy_from_slice(&[f[0], f[1], f[2], rho, theta, phi]);
        }
        Ok(features)
    }

    pub fn build(
        &self,
        case: &LoadCase,
        displacement: &DisplacementField,
        provenance: Provenance,
    ) -> Result<GraphSample, DatagenError> {
        let n = self.property.len();
        if displacement.len() != n {
            return Err(DatagenError::RowMismatch {
                expected: n,
                found: displacement.len(),
            });
        }
        Ok(GraphSample {
            features: self.features(case)?,
            labels: displacement.values().iter().flatten().copied().collect(),
            load_nodes: case.load_nodes.clone(),
            provenance,
        })
    }
}

/// Convenience wrapper around [`FeatureBuilder`] for a single case.
pub fn build_sample(
    mesh: &TetMesh,
    case: &LoadCase,
    displacement: &DisplacementField,
    provenance: Provenance,
) -> Result<GraphSample, DatagenError> {
    FeatureBuilder::new(mesh, &case.fixed_nodes).build(case, displacement, provenance)
}
