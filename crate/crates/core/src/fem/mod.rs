//! Finite-element oracle on linear tetrahedra.
//!
//! Coordinates are in mm, forces in N and moduli in Pa; stiffnesses come out
//! in N/mm and energies in N·mm after the single conversion
//! [`PA_TO_N_PER_MM2`]. The small-strain solver is the default source of
//! training labels. The hyperelastic Newton solver is meant for small meshes
//! and consistency checks.

mod hyper;
mod linear;
mod load;
mod material;
mod nonlinear;
mod sparse;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Point, Region, TetMesh};

pub use hyper::{neo_hookean_energy, neo_hookean_stress, ogden_sum};
pub use linear::{
    assemble_linear_stiffness, element_stiffness, element_strain, element_stress, hooke_stress, shape_gradients,
    solve_linear, solve_prescribed, Mat3,
};
pub use load::{scheduled_force, ForceSchedule, LoadCase};
pub use material::{derive_shear_modulus, Material};
pub use nonlinear::{nonlinear_solve, nonlinear_solve_with, NewtonOptions, NonlinearSolution};
pub use sparse::{conjugate_gradient, CgOptions, CgReport, CsrMatrix};

/// Pa → N/mm².
pub const PA_TO_N_PER_MM2: f64 = 1e-6;

pub type Materials = BTreeMap<Region, Material>;

/// Healthy brain and tumour properties.
pub fn default_materials() -> Materials {
    BTreeMap::from([
        (Region::Healthy, Material::healthy_brain()),
        (Region::Tumour, Material::tumour()),
    ])
}

pub(crate) fn material_for(materials: &Materials, region: Region) -> Result<&Material, FemError> {
    materials.get(&region).ok_or(FemError::MissingMaterial(region))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("Poisson ratio {0} reaches the incompressible limit 0.5")]
    Incompressible(f64),
    #[error("no material given for region {0:?}")]
    MissingMaterial(Region),
    #[error("expected {expected} nodal values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("node index {index} out of range for {nodes} nodes")]
    NodeOutOfRange { index: usize, nodes: usize },
    #[error("conjugate gradient stopped after {iterations} iterations with residual {residual:e} (target {target:e})")]
    CgNotConverged {
        iterations: usize,
        residual: f64,
        target: f64,
    },
    #[error("system matrix is not positive definite (detected at CG iteration {iteration})")]
    NotPositiveDefinite { iteration: usize },
    #[error("inverted element: det F = {det:e}")]
    InvertedElement { det: f64 },
    #[error("element inversion during load increment {increment}")]
    InvertedIncrement { increment: usize },
    #[error("Newton iteration stalled in load increment {increment}; gradient norms {history:?}")]
    NewtonStall { increment: usize, history: Vec<f64> },
    #[error("mesh has {nodes} nodes; the nonlinear solver accepts at most {limit}")]
    MeshTooLarge { nodes: usize, limit: usize },
    #[error("time step {step} outside 1..={steps}")]
    InvalidTimeStep { step: usize, steps: usize },
    #[error("load set is empty")]
    EmptyLoadSet,
    #[error("node {0} is both loaded and fixed")]
    LoadOnFixedNode(usize),
}

/// Nodal displacement vectors in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementField {
    values: Vec<Point>,
}

impl DisplacementField {
    pub fn from_values(values: Vec<Point>) -> Self {
        Self { values }
    }

    pub fn zeros(nodes: usize) -> Self {
        Self {
            values: vec![[0.0; 3]; nodes],
        }
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Point> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .collect()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes().into_iter().fold(0.0, f64::max)
    }
}

/// Small-strain solver with the stiffness matrix assembled once per mesh.
#[derive(Clone, Debug)]
pub struct LinearOracle {
    stiffness: CsrMatrix,
    nodes: usize,
}

impl LinearOracle {
    pub fn new(mesh: &TetMesh, materials: &Materials) -> Result<Self, FemError> {
        Ok(Self {
            stiffness: assemble_linear_stiffness(mesh, materials)?,
            nodes: mesh.node_count(),
        })
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn solve(&self, case: &LoadCase) -> Result<DisplacementField, FemError> {
        let loads = case.loads(self.nodes)?;
        solve_linear(&self.stiffness, &loads, case.fixed_nodes.iter().copied())
    }

    pub fn solve_loads(&self, loads: &[Point], fixed: &BTreeSet<usize>) -> Result<DisplacementField, FemError> {
        solve_linear(&self.stiffness, loads, fixed.iter().copied())
    }
}
