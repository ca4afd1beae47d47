//! Hierarchical virtual-node augmentation.
//!
//! For every real node type a new virtual type with `n_virtual` nodes is
//! added, and each real node is attached to exactly one virtual node of its
//! type. A single central node connects to all type-level virtual nodes.
//! The rewritten schema therefore has `2 * |types| + 1` node types, and any
//! two real nodes are joined by a path of length at most four:
//! `v - V(type of v) - central - V(type of u) - u`.
//!
//! Virtual node features start as the mean of the features of the real
//! nodes assigned to them; the central node starts as an all-ones vector.
//! Only the real-to-virtual connections participate in drop-edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, HeteroGraph, NetworkSchema, NodeTypeId, RelationId};
use crate::numerics::DenseMatrix;
use crate::seed::{derive_seed, domain, rng_from};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMode {
    /// Each real node picks one of its type's virtual nodes uniformly.
    UniformRandom,
    /// Node `i` attaches to virtual node `i % n_virtual` (balanced).
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Type-level virtual nodes per real type.
    pub n_virtual: usize,
    /// Feature dimension of the central node.
    pub central_dim: usize,
    pub assignment: AssignmentMode,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            n_virtual: 16,
            central_dim: 64,
            assignment: AssignmentMode::UniformRandom,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_virtual == 0 {
            return Err(Error::config("n_virtual must be at least 1".to_string()));
        }
        if self.central_dim == 0 {
            return Err(Error::config("central_dim must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// A heterogeneous graph rewritten with type-level virtual nodes and a
/// central node, plus the bookkeeping to relate it back to the original.
#[derive(Debug, Clone)]
pub struct AugmentedGraph {
    graph: HeteroGraph,
    config: AugmentationConfig,
    num_real_types: usize,
    virtual_type_map: Vec<NodeTypeId>,
    central_type: NodeTypeId,
    virtual_edge_relations: Vec<RelationId>,
    assignment: Vec<Vec<usize>>,
}

fn unique_name(base: String, taken: &mut std::collections::HashSet<String>) -> String {
    let mut name = base;
    while !taken.insert(name.clone()) {
        name.push('+');
    }
    name
}

/// Rewrites `graph` per the augmentation config. Deterministic: the same
/// graph and config produce a bit-identical result.
pub fn augment(graph: &HeteroGraph, cfg: &AugmentationConfig) -> Result<AugmentedGraph> {
    cfg.validate()?;
    let old = graph.schema();
    let n_real = old.num_types();

    let mut taken: std::collections::HashSet<String> = old
        .node_types()
        .map(|t| old.type_name(t).to_string())
        .collect();
    let mut rel_taken: std::collections::HashSet<String> = old
        .relation_ids()
        .map(|r| old.relation(r).name.clone())
        .collect();

    let mut schema = NetworkSchema::new();
    for t in old.node_types() {
        schema.add_node_type(old.type_name(t));
    }
    // Relations are re-added in order so original RelationIds stay valid.
    let mut seen = std::collections::HashSet::new();
    for r in old.relation_ids() {
        if seen.contains(&r) {
            continue;
        }
        let def = old.relation(r);
        if def.inverse == r {
            schema.add_symmetric_relation(&def.name, def.src);
            seen.insert(r);
        } else {
            let inv = old.relation(def.inverse);
            debug_assert_eq!(def.inverse.0, r.0 + 1, "relation pairs must be adjacent");
            schema.add_relation_pair(&def.name, &inv.name, def.src, def.dst);
            seen.insert(r);
            seen.insert(def.inverse);
        }
    }

    let virtual_type_map: Vec<NodeTypeId> = (0..n_real)
        .map(|t| {
            let name = unique_name(format!("virtual:{}", old.type_name(NodeTypeId(t))), &mut taken);
            schema.add_node_type(name)
        })
        .collect();
    let central_type = schema.add_node_type(unique_name("central".to_string(), &mut taken));

    let mut virtual_edge_relations = Vec::new();
    let mut attach_relations = Vec::new();
    for t in 0..n_real {
        let real = NodeTypeId(t);
        let vt = virtual_type_map[t];
        let fwd_name = unique_name(
            format!("{}->{}", old.type_name(real), schema.type_name(vt)),
            &mut rel_taken,
        );
        let bwd_name = unique_name(
            format!("{}->{}", schema.type_name(vt), old.type_name(real)),
            &mut rel_taken,
        );
        let (fwd, bwd) = schema.add_relation_pair(fwd_name, bwd_name, real, vt);
        virtual_edge_relations.push(fwd);
        virtual_edge_relations.push(bwd);
        attach_relations.push(fwd);
    }
    let mut central_relations = Vec::new();
    for t in 0..n_real {
        let vt = virtual_type_map[t];
        let fwd_name = unique_name(
            format!("{}->{}", schema.type_name(vt), schema.type_name(central_type)),
            &mut rel_taken,
        );
        let bwd_name = unique_name(
            format!("{}->{}", schema.type_name(central_type), schema.type_name(vt)),
            &mut rel_taken,
        );
        let (fwd, _) = schema.add_relation_pair(fwd_name, bwd_name, vt, central_type);
        central_relations.push(fwd);
    }

    // Assign every real node to one virtual node of its type.
    let counts = graph.node_counts();
    let mut assignment = Vec::with_capacity(n_real);
    for t in 0..n_real {
        let mut rng = rng_from(derive_seed(cfg.seed, &[domain::ASSIGNMENT, t as u64]));
        let assign: Vec<usize> = (0..counts[t])
            .map(|i| match cfg.assignment {
                AssignmentMode::UniformRandom => rng.gen_range(0..cfg.n_virtual),
                AssignmentMode::RoundRobin => i % cfg.n_virtual,
            })
            .collect();
        assignment.push(assign);
    }

    let features = augmented_features(graph, cfg, &assignment)?;

    let mut edge_lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); schema.num_relations()];
    for r in old.relation_ids() {
        // Original adjacency rows are destinations; re-emit as (src, dst).
        edge_lists[r.0] = graph
            .adjacency(r)
            .entries()
            .map(|(dst, src)| (src, dst))
            .collect();
    }
    for t in 0..n_real {
        edge_lists[attach_relations[t].0] = assignment[t]
            .iter()
            .enumerate()
            .map(|(node, &v)| (node, v))
            .collect();
        edge_lists[central_relations[t].0] = (0..cfg.n_virtual).map(|v| (v, 0)).collect();
    }

    let labels = graph.labels().cloned();
    let augmented = build_graph(schema, features, edge_lists, labels)?;

    Ok(AugmentedGraph {
        graph: augmented,
        config: *cfg,
        num_real_types: n_real,
        virtual_type_map,
        central_type,
        virtual_edge_relations,
        assignment,
    })
}

fn augmented_features(
    graph: &HeteroGraph,
    cfg: &AugmentationConfig,
    assignment: &[Vec<usize>],
) -> Result<Vec<DenseMatrix>> {
    let n_real = graph.num_types();
    let mut features: Vec<DenseMatrix> = (0..n_real)
        .map(|t| graph.features(NodeTypeId(t)).clone())
        .collect();
    for t in 0..n_real {
        let real = graph.features(NodeTypeId(t));
        let dim = real.cols();
        let mut sums = DenseMatrix::zeros(cfg.n_virtual, dim);
        let mut counts = vec![0usize; cfg.n_virtual];
        for (node, &v) in assignment[t].iter().enumerate() {
            counts[v] += 1;
            for (acc, &x) in sums.row_mut(v).iter_mut().zip(real.row(node)) {
                *acc += x;
            }
        }
        for (v, &c) in counts.iter().enumerate() {
            if c > 0 {
                for acc in sums.row_mut(v) {
                    *acc /= c as f64;
                }
            }
            // Virtual nodes with no assigned real nodes keep zero features.
        }
        features.push(sums);
    }
    features.push(DenseMatrix::ones(1, cfg.central_dim));
    Ok(features)
}

impl AugmentedGraph {
    pub fn graph(&self) -> &HeteroGraph {
        &self.graph
    }

    pub fn config(&self) -> &AugmentationConfig {
        &self.config
    }

    pub fn num_real_types(&self) -> usize {
        self.num_real_types
    }

    /// Real type ids are preserved by the rewrite.
    pub fn real_type_map(&self, old: NodeTypeId) -> NodeTypeId {
        old
    }

    pub fn virtual_type_map(&self, old: NodeTypeId) -> NodeTypeId {
        self.virtual_type_map[old.0]
    }

    pub fn central_type(&self) -> NodeTypeId {
        self.central_type
    }

    /// Relations eligible for drop-edge: the real-to-virtual attachments in
    /// both directions. Central connections are never dropped.
    pub fn virtual_edge_relations(&self) -> &[RelationId] {
        &self.virtual_edge_relations
    }

    /// Per real type: the virtual node each real node attaches to.
    pub fn assignment(&self) -> &[Vec<usize>] {
        &self.assignment
    }

    /// Rebuilds augmented features from a (possibly perturbed) original
    /// graph with the same structure, keeping the assignment fixed. Virtual
    /// features are re-derived as assignment means.
    pub fn refresh_features(&self, original: &HeteroGraph) -> Result<AugmentedGraph> {
        if original.num_types() != self.num_real_types {
            return Err(Error::shape(
                "feature refresh: original graph type count mismatch".to_string(),
            ));
        }
        let features = augmented_features(original, &self.config, &self.assignment)?;
        Ok(AugmentedGraph {
            graph: self.graph.with_features(features)?,
            ..self.clone()
        })
    }
}

/// Removes each real-to-virtual connection independently with probability
/// `rate`, mirroring the removal in both directions. All other relations
/// (including central connections and every real-to-real edge) are shared
/// untouched with the input graph.
pub fn sample_drop_edge(aug: &AugmentedGraph, rate: f64, seed: u64) -> Result<AugmentedGraph> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::config(format!(
            "drop-edge rate must be in [0, 1], got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(aug.clone());
    }
    let mut replacements = Vec::new();
    for t in 0..aug.num_real_types {
        let mut rng = rng_from(derive_seed(seed, &[domain::DROP_EDGE, t as u64]));
        let kept: Vec<(usize, usize)> = aug.assignment[t]
            .iter()
            .enumerate()
            .filter(|_| rng.gen::<f64>() >= rate)
            .map(|(node, &v)| (node, v))
            .collect();

        let fwd = aug.virtual_edge_relations[2 * t];
        let bwd = aug.virtual_edge_relations[2 * t + 1];
        let fwd_adj = aug.graph.adjacency(fwd);
        let bwd_adj = aug.graph.adjacency(bwd);
        let fwd_entries = kept.iter().map(|&(node, v)| (v, node)).collect();
        let bwd_entries = kept.iter().map(|&(node, v)| (node, v)).collect();
        replacements.push((
            fwd,
            crate::graph::TypedAdjacency::from_entries(
                fwd,
                fwd_adj.rows(),
                fwd_adj.cols(),
                fwd_entries,
            )?,
        ));
        replacements.push((
            bwd,
            crate::graph::TypedAdjacency::from_entries(
                bwd,
                bwd_adj.rows(),
                bwd_adj.cols(),
                bwd_entries,
            )?,
        ));
    }
    Ok(AugmentedGraph {
        graph: aug.graph.with_adjacency(replacements),
        ..aug.clone()
    })
}
