//! Virtual-node heterogeneous graph convolutional network.
//!
//! A from-scratch library for node classification on typed heterogeneous
//! graphs. The model shortens long-range message paths by rewriting the
//! graph with per-type virtual nodes and one central node, then stacks a
//! small number of transform / aggregate / attention layers over the
//! rewritten schema; any two real nodes end up within four hops, so four
//! layers see the whole graph.
//!
//! Module map:
//! - [`graph`]: schema, typed CSR adjacency, row normalization, hop queries
//! - [`augment`]: the virtual-node rewrite and drop-edge sampling
//! - [`numerics`]: dense matrices and the reverse-mode gradient tape
//! - [`model`]: the layered forward pass and parameter handling
//! - [`train`]: splits, Adam, the full-graph training loop
//! - [`eval`]: F1 metrics, the perturbation lab, hyperparameter sweeps
//! - [`data`]: dataset directory format and synthetic generators
//! - [`checkpoint`]: binary tensor container with a text manifest

pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod seed;
pub mod train;

pub use augment::{augment, sample_drop_edge, AssignmentMode, AugmentationConfig, AugmentedGraph};
pub use checkpoint::{load_checkpoint, save_checkpoint, TrainedModel};
pub use data::{generate_synthetic, load_dataset, save_dataset, DatasetManifest, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::{
    evaluate_model, f1_scores, perturbation_study, sweep, sweep_to_csv, F1Report,
    PerturbationGrid, SweepAxis, SweepRow,
};
pub use graph::{
    build_graph, row_normalize, HeteroGraph, Labels, NetworkSchema, NodeRef, NodeTypeId,
    RelationId, RowNormalizedAdjacency, TypedAdjacency,
};
pub use model::{
    argmax_rows, forward, forward_graph, init_params, predict, predict_graph, AttentionGroup,
    DimensionPlan, ForwardArtifacts, ForwardOptions, ModelParams,
};
pub use numerics::{softmax_rows, DenseMatrix, Tape, VarId};
pub use train::{
    adam_step, fit, fit_plain, loss_and_grads, loss_and_grads_graph, make_split, metrics_to_csv,
    AdamState, EpochMetrics, FitResult, Split, TrainConfig,
};
