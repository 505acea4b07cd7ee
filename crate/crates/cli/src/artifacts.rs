use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use meshgnn::datagen::Dataset;
use meshgnn::gnn::{read_checkpoint, Checkpoint, MessageGraph};
use meshgnn::mesh::{
    generate_synthetic_mesh, nodes_on_box_face, parse_tetgen, write_tetgen_ele, write_tetgen_node, BoundarySets,
    BoxFace, MeshGraph, MeshSummary, TetMesh,
};
use meshgnn::train::manifest_sha256;

use crate::config::{MeshConfig, RunConfig};

pub const MESH_NODE: &str = "mesh.node";
pub const MESH_ELE: &str = "mesh.ele";
pub const SUMMARY: &str = "summary.json";
pub const RESOLVED_CONFIG: &str = "resolved-config.toml";
pub const CHECKPOINT: &str = "model.ckpt";
pub const HISTORY: &str = "history.jsonl";

/// Output directory that only appears under its final name once the command succeeds.
pub struct Staging {
    partial: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(dest: &Path) -> anyhow::Result<Self> {
        let name = dest
            .file_name()
            .with_context(|| format!("output path {} has no directory name", dest.display()))?
            .to_string_lossy()
            .into_owned();
        let partial = dest.with_file_name(format!(".{name}.partial"));
        if partial.exists() {
            fs::remove_dir_all(&partial).with_context(|| format!("cannot clear {}", partial.display()))?;
        }
        fs::create_dir_all(&partial).with_context(|| format!("cannot create {}", partial.display()))?;
        Ok(Self {
            partial,
            dest: dest.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.partial
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.partial.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let path = self.file(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Replaces any previous output at the destination.
    pub fn commit(mut self) -> anyhow::Result<PathBuf> {
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest).with_context(|| format!("cannot replace {}", self.dest.display()))?;
        }
        fs::rename(&self.partial, &self.dest).with_context(|| format!("cannot move outputs to {}", self.dest.display()))?;
        self.committed = true;
        Ok(self.dest.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.partial);
        }
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn import_mesh(node: &Path, ele: &Path) -> anyhow::Result<TetMesh> {
    let mesh = parse_tetgen(&read_text(node)?, &read_text(ele)?)
        .with_context(|| format!("cannot import {} / {}", node.display(), ele.display()))?;
    Ok(mesh)
}

pub fn read_mesh_dir(dir: &Path) -> anyhow::Result<TetMesh> {
    import_mesh(&dir.join(MESH_NODE), &dir.join(MESH_ELE))
}

pub fn load_mesh(config: &MeshConfig) -> anyhow::Result<TetMesh> {
    if let Some(dir) = &config.dir {
        return read_mesh_dir(dir);
    }
    match (&config.node, &config.ele, &config.grid) {
        (Some(node), Some(ele), None) => import_mesh(node, ele),
        (None, None, Some(g)) => Ok(generate_synthetic_mesh(g.nx, g.ny, g.nz, g.spacing, g.tumour_box)?),
        (None, None, None) => bail!("the [mesh] section needs `dir`, `node` + `ele`, or `grid`"),
        _ => bail!("the [mesh] section must use exactly one of `dir`, `node` + `ele`, or `grid`"),
    }
}

pub fn write_mesh(stage: &Staging, mesh: &TetMesh) -> anyhow::Result<MeshSummary> {
    stage.write(MESH_NODE, write_tetgen_node(mesh))?;
    stage.write(MESH_ELE, write_tetgen_ele(mesh))?;
    let summary = MeshSummary::new(mesh, &MeshGraph::build(mesh)?);
    stage.write(SUMMARY, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

pub fn boundary_sets(mesh: &TetMesh, config: &MeshConfig) -> anyhow::Result<BoundarySets> {
    let fixed: Vec<usize> = match (&config.fixed_nodes, &config.fixed_face) {
        (Some(nodes), _) => nodes.clone(),
        (None, Some(face)) => {
            let face: BoxFace = face.parse().map_err(anyhow::Error::msg)?;
            nodes_on_box_face(mesh, face, 1e-6)
        }
        (None, None) => bail!("no fixed boundary: set `fixed_face` or `fixed_nodes` in [mesh]"),
    };
    let sets = match &config.load_candidates {
        Some(c) => BoundarySets::new(mesh, fixed, c.iter().copied())?,
        None => BoundarySets::from_fixed(mesh, fixed)?,
    };
    Ok(sets)
}

/// A dataset directory written by `simulate`: samples, manifest and the mesh they live on.
pub struct DataDir {
    pub dataset: Dataset,
    pub mesh: TetMesh,
    pub graph: MessageGraph,
}

pub fn load_data_dir(dir: &Path) -> anyhow::Result<DataDir> {
    let dataset = Dataset::load(dir).with_context(|| format!("cannot load dataset from {}", dir.display()))?;
    let mesh = read_mesh_dir(dir)?;
    if mesh.node_count() != dataset.manifest.node_count {
        bail!(
            "mesh in {} has {} nodes but the manifest says {}",
            dir.display(),
            mesh.node_count(),
            dataset.manifest.node_count
        );
    }
    let graph = MessageGraph::from_mesh_graph(&MeshGraph::build(&mesh)?);
    Ok(DataDir { dataset, mesh, graph })
}

/// Loads a checkpoint and checks that it was trained on this dataset.
pub fn load_checkpoint(path: &Path, data: &DataDir) -> anyhow::Result<Checkpoint> {
    let ck = read_checkpoint(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    if ck.manifest_sha256 != manifest_sha256(&data.dataset.manifest) {
        bail!("checkpoint {} was trained on a different dataset", path.display());
    }
    Ok(ck)
}

pub fn write_resolved_config(stage: &Staging, config: &RunConfig) -> anyhow::Result<()> {
    stage.write(RESOLVED_CONFIG, config.to_toml())
}
