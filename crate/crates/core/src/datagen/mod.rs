//! Turning oracle simulations into graph learning samples.

mod cases;
mod features;
mod io;
mod split;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{nonlinear_solve, FemError, LinearOracle, Materials};
use crate::mesh::{BoundarySets, MeshError, MeshGraph, Point, TetMesh};

pub use cases::{enumerate_load_cases, patch_nodes, CaseRecord, DatasetSpec, EnumeratedCases, LoadSelection};
pub use features::{
    build_sample, node_regions, physical_property, sample_directions, to_polar, FeatureBuilder, GraphSample,
    Provenance, FEATURE_COUNT, FEATURE_NAMES,
};
pub use io::{read_container, write_container, RawSample, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use split::{split_counts, split_dataset, Split, SplitMode};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("surface normal has zero length")]
    ZeroNormal,
    #[error("node index {index} out of range for {nodes} nodes")]
    NodeOutOfRange { index: usize, nodes: usize },
    #[error("expected {expected} rows, found {found}")]
    RowMismatch { expected: usize, found: usize },
    #[error("requested {requested} load nodes but only {available} candidates are available")]
    TooManyLoadNodes { requested: usize, available: usize },
    #[error("node {0} is not a load candidate")]
    NotACandidate(usize),
    #[error("dataset needs at least one direction")]
    NoDirections,
    #[error("dataset needs at least one time step")]
    NoSteps,
    #[error("total force must be finite and non-negative, got {0}")]
    InvalidForce(f64),
    #[error("splitting needs at least 10 samples, got {0}")]
    TooFewSamples(usize),
    #[error("node holdout needs at least 3 load selections, got {0}")]
    TooFewGroups(usize),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("oracle failed on case {case} (selection {}, direction {}, step {}): {source}",
        .provenance.selection, .provenance.direction, .provenance.time_step)]
    Oracle {
        case: usize,
        provenance: Provenance,
        source: FemError,
    },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid dataset file: {0}")]
    Format(String),
}

/// Which solver produces labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleKind {
    #[default]
    Linear,
    Nonlinear { increments: usize },
}

/// Per-column feature mean and standard deviation over the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Columns with zero spread keep a unit divisor.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a GraphSample>) -> Self {
        let mut sum = [0.0; FEATURE_COUNT];
        let mut sq = [0.0; FEATURE_COUNT];
        let mut rows = 0usize;
        for s in samples {
            for row in s.features.chunks_exact(FEATURE_COUNT) {
                for c in 0..FEATURE_COUNT {
                    sum[c] += row[c];
                    sq[c] += row[c] * row[c];
                }
                rows += 1;
            }
        }
        let rows = rows.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / rows).collect();
        let std = (0..FEATURE_COUNT)
            .map(|c| {
                let var = (sq[c] / rows - mean[c] * mean[c]).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, features: &mut [f64]) {
        for row in features.chunks_exact_mut(FEATURE_COUNT) {
            for c in 0..FEATURE_COUNT {
                row[c] = (row[c] - self.mean[c]) / self.std[c];
            }
        }
    }
}

/// Everything needed to regenerate or audit a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub dataset_id: String,
    pub sample_count: usize,
    pub node_count: usize,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub split_mode: SplitMode,
    pub splits: Vec<Split>,
    pub selections: Vec<Vec<usize>>,
    pub provenance: Vec<Provenance>,
    pub fixed_nodes: Vec<usize>,
    pub spec: DatasetSpec,
    pub oracle: OracleKind,
    pub materials: Materials,
    pub standardization: Option<Standardization>,
}

impl DatasetManifest {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.sample_count).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn split_sizes(&self) -> BTreeMap<Split, usize> {
        let mut m = BTreeMap::new();
        for s in Split::ALL {
            m.insert(s, 0);
        }
        for s in &self.splits {
            *m.get_mut(s).unwrap() += 1;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<GraphSample>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GenerateOptions {
    pub oracle: OracleKind,
    pub split_mode: SplitMode,
    pub standardize: bool,
    pub seed: u64,
}

/// Datasets smaller than this are stored whole in the training split.
pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Runs the oracle for every enumerated case (in parallel) and splits the result.
pub fn generate_dataset(
    mesh: &TetMesh,
    graph: &MeshGraph,
    boundary: &BoundarySets,
    normals: &BTreeMap<usize, Point>,
    materials: &Materials,
    spec: &DatasetSpec,
    opts: GenerateOptions,
) -> Result<Dataset, DatagenError> {
    let cases = enumerate_load_cases(graph, boundary, normals, spec, opts.seed)?;
    let builder = FeatureBuilder::new(mesh, boundary.fixed());
    let linear = match opts.oracle {
        OracleKind::Linear => Some(LinearOracle::new(mesh, materials)?),
        OracleKind::Nonlinear { .. } => None,
    };
    let samples = cases
        .cases
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let solved = match (&linear, opts.oracle) {
                (Some(oracle), _) => oracle.solve(&rec.case),
                (None, OracleKind::Nonlinear { increments }) => {
                    nonlinear_solve(mesh, materials, &rec.case, increments).map(|s| s.displacement)
                }
                (None, OracleKind::Linear) => unreachable!(),
            };
            let disp = solved.map_err(|source| DatagenError::Oracle {
                case: i,
                provenance: rec.provenance,
                source,
            })?;
            builder.build(&rec.case, &disp, rec.provenance)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let provenance: Vec<Provenance> = cases.cases.iter().map(|c| c.provenance).collect();
    let splits = if provenance.len() < MIN_SPLIT_SAMPLES {
        vec![Split::Train; provenance.len()]
    } else {
        split_dataset(&provenance, opts.seed, opts.split_mode)?
    };
    let standardization = opts.standardize.then(|| {
        Standardization::fit(samples.iter().zip(&splits).filter(|(_, s)| **s == Split::Train).map(|(x, _)| x))
    });
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        dataset_id: spec.id.clone(),
        sample_count: samples.len(),
        node_count: mesh.node_count(),
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        seed: opts.seed,
        split_mode: opts.split_mode,
        splits,
        selections: cases.selections,
        provenance,
        fixed_nodes: boundary.fixed().iter().copied().collect(),
        spec: spec.clone(),
        oracle: opts.oracle,
        materials: materials.clone(),
        standardization,
    };
    Ok(Dataset { manifest, samples })
}

fn io_err(e: std::io::Error) -> DatagenError {
    DatagenError::Io(e.to_string())
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&GraphSample> {
        self.samples
            .iter()
            .zip(&self.manifest.splits)
            .filter(|(_, s)| **s == split)
            .map(|(x, _)| x)
            .collect()
    }

    /// Writes `manifest.json` and one `<split>.bin` container per split.
    pub fn save(&self, dir: &Path) -> Result<(), DatagenError> {
        fs::create_dir_all(dir).map_err(io_err)?;
        let manifest = serde_json::to_string_pretty(&self.manifest).map_err(|e| DatagenError::Format(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), manifest).map_err(io_err)?;
        for split in Split::ALL {
            let members: Vec<(usize, &GraphSample)> = self
                .samples
                .iter()
                .enumerate()
                .filter(|(i, _)| self.manifest.splits[*i] == split)
                .collect();
            let mut w = std::io::BufWriter::new(fs::File::create(dir.join(format!("{}.bin", split.name()))).map_err(io_err)?);
            write_container(&mut w, self.manifest.node_count, &members)?;
            w.flush().map_err(io_err)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DatagenError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(io_err)?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| DatagenError::Format(e.to_string()))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(DatagenError::Format(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        if manifest.splits.len() != manifest.sample_count || manifest.provenance.len() != manifest.sample_count {
            return Err(DatagenError::Format("manifest lists are inconsistent with sample_count".into()));
        }
        let mut slots: Vec<Option<GraphSample>> = vec![None; manifest.sample_count];
        for split in Split::ALL {
            let mut f = fs::File::open(dir.join(format!("{}.bin", split.name()))).map_err(io_err)?;
            let (nodes, raw) = read_container(&mut f)?;
            if nodes != manifest.node_count {
                return Err(DatagenError::Format(format!(
                    "{} container has {nodes} nodes, manifest says {}",
                    split.name(),
                    manifest.node_count
                )));
            }
            for (index, features, labels) in raw {
                if index >= manifest.sample_count || manifest.splits[index] != split || slots[index].is_some() {
                    return Err(DatagenError::Format(format!("unexpected sample index {index} in {}", split.name())));
                }
                let provenance = manifest.provenance[index];
                let load_nodes = manifest
                    .selections
                    .get(provenance.selection)
                    .cloned()
                    .ok_or_else(|| DatagenError::Format(format!("unknown selection {}", provenance.selection)))?;
                slots[index] = Some(GraphSample {
                    features,
                    labels,
                    load_nodes,
                    provenance,
                });
            }
        }
        let samples = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| DatagenError::Format(format!("sample {i} missing from containers"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { manifest, samples })
    }
}
