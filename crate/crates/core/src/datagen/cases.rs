use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fem::{scheduled_force, ForceSchedule, LoadCase};
use crate::mesh::{BoundarySets, MeshGraph, Point};

use super::{sample_directions, DatagenError, Provenance};

/// Which surface nodes carry load in each simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadSelection {
    /// Each listed node is loaded on its own.
    Nodes { nodes: Vec<usize> },
    /// `count` candidate nodes drawn at random, each loaded on its own.
    RandomNodes { count: usize },
    /// The `size` candidates nearest to `center` by hop distance, loaded together.
    Patch { center: usize, size: usize },
}

/// Recipe for a dataset: selections × directions × time steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default = "default_id")]
    pub id: String,
    pub selection: LoadSelection,
    /// Directions per selection, the surface normal included.
    pub directions: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Magnitude of the total force at the final time step, in N.
    pub total_force: f64,
}

fn default_id() -> String {
    "dataset".to_string()
}

fn default_steps() -> usize {
    30
}

impl DatasetSpec {
    /// Eleven single nodes, 15 directions and 30 steps with 1.35 N total.
    pub fn single_node_reference(nodes: Vec<usize>) -> Self {
        Self {
            id: "single-node".into(),
            selection: LoadSelection::Nodes { nodes },
            directions: 15,
            steps: 30,
            total_force: 1.35,
        }
    }

    /// One 100-node patch, 165 directions and 30 steps with 20 N total.
    pub fn patch_reference(center: usize) -> Self {
        Self {
            id: "patch".into(),
            selection: LoadSelection::Patch { center, size: 100 },
            directions: 165,
            steps: 30,
            total_force: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseRecord {
    pub case: LoadCase,
    pub provenance: Provenance,
}

/// All load cases of a dataset together with the choices that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedCases {
    pub selections: Vec<Vec<usize>>,
    pub directions: Vec<Vec<Point>>,
    pub cases: Vec<CaseRecord>,
}

/// The `size` candidates closest to `center` in hops, ties broken by index.
pub fn patch_nodes(
    graph: &MeshGraph,
    candidates: &BTreeSet<usize>,
    center: usize,
    size: usize,
) -> Result<Vec<usize>, DatagenError> {
    if center >= graph.node_count() {
        return Err(DatagenError::NodeOutOfRange {
            index: center,
            nodes: graph.node_count(),
        });
    }
    let dist = graph.hop_distances(center);
    let mut ranked: Vec<(usize, usize)> = candidates
        .iter()
        .filter(|&&v| dist[v] != usize::MAX)
        .map(|&v| (dist[v], v))
        .collect();
    if ranked.len() < size {
        return Err(DatagenError::TooManyLoadNodes {
            requested: size,
            available: ranked.len(),
        });
    }
    ranked.sort_unstable();
    let mut nodes: Vec<usize> = ranked[..size].iter().map(|&(_, v)| v).collect();
    nodes.sort_unstable();
    Ok(nodes)
}

fn selections(
    graph: &MeshGraph,
    boundary: &BoundarySets,
    selection: &LoadSelection,
    seed: u64,
) -> Result<(Vec<Vec<usize>>, Vec<usize>), DatagenError> {
    let candidates = boundary.candidates();
    match selection {
        LoadSelection::Nodes { nodes } => {
            if nodes.len() > candidates.len() {
                return Err(DatagenError::TooManyLoadNodes {
                    requested: nodes.len(),
                    available: candidates.len(),
                });
            }
            for &v in nodes {
                if !candidates.contains(&v) {
                    return Err(DatagenError::NotACandidate(v));
                }
            }
            Ok((nodes.iter().map(|&v| vec![v]).collect(), nodes.clone()))
        }
        LoadSelection::RandomNodes { count } => {
            if *count > candidates.len() {
                return Err(DatagenError::TooManyLoadNodes {
                    requested: *count,
                    available: candidates.len(),
                });
            }
            let pool: Vec<usize> = candidates.iter().copied().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, *count).copied().collect();
            chosen.sort_unstable();
            Ok((chosen.iter().map(|&v| vec![v]).collect(), chosen))
        }
        LoadSelection::Patch { center, size } => {
            if !candidates.contains(center) {
                return Err(DatagenError::NotACandidate(*center));
            }
            Ok((vec![patch_nodes(graph, candidates, *center, *size)?], vec![*center]))
        }
    }
}

/// Seed for the direction stream of one selection.
fn direction_seed(seed: u64, selection: usize) -> u64 {
    seed ^ (selection as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Enumerates selection × direction × time step, in that nesting order.
pub fn enumerate_load_cases(
    graph: &MeshGraph,
    boundary: &BoundarySets,
    normals: &BTreeMap<usize, Point>,
    spec: &DatasetSpec,
    seed: u64,
) -> Result<EnumeratedCases, DatagenError> {
    if spec.directions == 0 {
        return Err(DatagenError::NoDirections);
    }
    if spec.steps == 0 {
        return Err(DatagenError::NoSteps);
    }
    if !(spec.total_force.is_finite() && spec.total_force >= 0.0) {
        return Err(DatagenError::InvalidForce(spec.total_force));
    }
    let (sel, anchors) = selections(graph, boundary, &spec.selection, seed)?;
    let fixed = Arc::new(boundary.fixed().clone());
    let mut directions = Vec::with_capacity(sel.len());
    let mut cases = Vec::with_capacity(sel.len() * spec.directions * spec.steps);
    for (s, (nodes, anchor)) in sel.iter().zip(&anchors).enumerate() {
        let normal = *normals.get(anchor).ok_or(DatagenError::NotACandidate(*anchor))?;
        let dirs = sample_directions(normal, spec.directions - 1, direction_seed(seed, s))?;
        let schedule = ForceSchedule {
            steps: spec.steps,
            nodes_per_case: nodes.len(),
        };
        for (d, dir) in dirs.iter().enumerate() {
            let total = dir.map(|x| x * spec.total_force);
            for step in 1..=spec.steps {
                let force = scheduled_force(schedule, total, step)?;
                let case = LoadCase::new(nodes.clone(), force, step, spec.steps, Arc::clone(&fixed))?;
                cases.push(CaseRecord {
                    case,
                    provenance: Provenance {
                        selection: s,
                        direction: d,
                        time_step: step,
                    },
                });
            }
        }
        directions.push(dirs);
    }
    Ok(EnumeratedCases {
        selections: sel,
        directions,
        cases,
    })
}
