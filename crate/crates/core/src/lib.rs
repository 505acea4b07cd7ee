//! Graph-neural-network surrogate for finite-element soft-tissue deformation.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`mesh`]: tetrahedral meshes (TetGen ingestion or synthetic grids), the
//!    node graph with inverse-distance edge weights, and surface normals.
//! 2. [`fem`]: the ground-truth oracle, a linear-elastic CG solver plus an
//!    Ogden-form hyperelastic energy with an incremental Newton solver.
//! 3. [`datagen`]: load-case enumeration, per-node features and dataset files.
//! 4. [`gnn`]: GraphSAGE / edge-weighted GraphConv layers with an LSTM
//!    attention jumping-knowledge readout, built on [`autodiff`].
//! 5. [`train`]: mean-Euclidean loss, AdamW, plateau schedule, early stopping,
//!    metrics, latency benchmarks and ablation sweeps.

pub mod autodiff;
pub mod datagen;
pub mod fem;
pub mod gnn;
pub mod mesh;
pub mod train;
pub mod vtk;
