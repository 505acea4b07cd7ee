use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use meshgnn::datagen::{DatasetSpec, GenerateOptions, LoadSelection, OracleKind, SplitMode, FEATURE_COUNT};
use meshgnn::fem::{Material, Materials};
use meshgnn::gnn::{JkMode, LayerSpec, ModelConfig};
use meshgnn::mesh::{Aabb, Region};
use meshgnn::train::TrainConfig;

/// A whole experiment: mesh, materials, dataset recipe, model, training and evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; dataset generation, weight initialization and shuffling all derive from it.
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub mesh: MeshConfig,
    pub materials: MaterialsConfig,
    pub dataset: Option<DatasetConfig>,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing: f64,
    pub tumour_box: Option<Aabb>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    /// TetGen `.node` / `.ele` pair, or a directory written by `mesh gen|import`.
    pub node: Option<PathBuf>,
    pub ele: Option<PathBuf>,
    pub dir: Option<PathBuf>,
    /// Bounding-box face whose nodes are fixed: `x-`, `x+`, `y-`, `y+`, `z-` or `z+`.
    pub fixed_face: Option<String>,
    pub fixed_nodes: Option<Vec<usize>>,
    pub load_candidates: Option<Vec<usize>>,
    pub grid: Option<GridConfig>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            node: None,
            ele: None,
            dir: None,
            fixed_face: Some("z-".into()),
            fixed_nodes: None,
            load_candidates: None,
            grid: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    pub healthy: Material,
    pub tumour: Material,
}

impl Default for MaterialsConfig {
    fn default() -> Self {
        Self {
            healthy: Material::healthy_brain(),
            tumour: Material::tumour(),
        }
    }
}

impl MaterialsConfig {
    pub fn table(&self) -> Materials {
        Materials::from([(Region::Healthy, self.healthy), (Region::Tumour, self.tumour)])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_dataset_id")]
    pub id: String,
    pub selection: LoadSelection,
    pub directions: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub total_force: f64,
    #[serde(default)]
    pub oracle: OracleKind,
    #[serde(default)]
    pub split_mode: SplitMode,
    #[serde(default)]
    pub standardize: bool,
}

fn default_dataset_id() -> String {
    "dataset".into()
}

fn default_steps() -> usize {
    30
}

impl DatasetConfig {
    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            id: self.id.clone(),
            selection: self.selection.clone(),
            directions: self.directions,
            steps: self.steps,
            total_force: self.total_force,
        }
    }

    pub fn options(&self, seed: u64) -> GenerateOptions {
        GenerateOptions {
            oracle: self.oracle,
            split_mode: self.split_mode,
            standardize: self.standardize,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub jk: JkMode,
    pub jk_hidden: usize,
    pub head_width: usize,
    pub dropout: f64,
    pub layers: Vec<LayerSpec>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let base = ModelConfig::default();
        Self {
            jk: base.jk,
            jk_hidden: base.jk_hidden,
            head_width: base.head_width,
            dropout: base.dropout_p,
            layers: base.specs(),
        }
    }
}

impl ModelSection {
    pub fn config(&self) -> ModelConfig {
        ModelConfig::from_specs(FEATURE_COUNT, &self.layers, self.jk, self.jk_hidden, self.head_width, self.dropout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub threshold_mm: f64,
    /// Leave fixed-boundary nodes out of every statistic.
    pub free_only: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold_mm: 1.0,
            free_only: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: Self = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    /// Relative mesh paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.mesh.node, &mut self.mesh.ele, &mut self.mesh.dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Makes the root seed the only source of randomness.
    pub fn apply_overrides(&mut self, seed: Option<u64>, threads: Option<usize>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if threads.is_some() {
            self.threads = threads;
        }
        if out.is_some() {
            self.out = out;
        }
        self.train.seed = self.seed;
    }

    pub fn out_dir(&self) -> anyhow::Result<PathBuf> {
        match &self.out {
            Some(p) => Ok(p.clone()),
            None => bail!("no output directory: pass --out or set `out` in the config"),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
