//! Typed heterogeneous graphs: network schema, per-relation sparse adjacency,
//! row normalization, and hop-distance queries.
//!
//! Conventions:
//! - Every relation is directed and paired with an inverse relation whose
//!   adjacency is the exact transpose. Undirected connections are stored as
//!   two relations. A relation may be its own inverse only when both
//!   endpoints have the same node type (symmetric adjacency).
//! - Adjacency rows are indexed by destination-type nodes and columns by
//!   source-type nodes, so `adj(r) * x` aggregates source features into
//!   destination rows.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Index of a node type within a schema. Dense in `0..num_types`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeTypeId(pub usize);

/// Index of a directed relation within a schema. Dense in `0..num_relations`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub usize);

/// A node anywhere in a heterogeneous graph: (type, index within type).
pub type NodeRef = (NodeTypeId, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTypeDef {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDef {
    pub name: String,
    pub src: NodeTypeId,
    pub dst: NodeTypeId,
    pub inverse: RelationId,
}

/// The meta template of a heterogeneous graph: a graph over node types whose
/// edges are the permitted directed relations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSchema {
    types: Vec<NodeTypeDef>,
    relations: Vec<RelationDef>,
}

impl NetworkSchema {
    pub fn new() -> Self {
        NetworkSchema::default()
    }

    pub fn add_node_type(&mut self, name: impl Into<String>) -> NodeTypeId {
        self.types.push(NodeTypeDef { name: name.into() });
        NodeTypeId(self.types.len() - 1)
    }

    /// Adds a directed relation together with its inverse. Returns
    /// `(forward, backward)`.
    pub fn add_relation_pair(
        &mut self,
        forward_name: impl Into<String>,
        backward_name: impl Into<String>,
        src: NodeTypeId,
        dst: NodeTypeId,
    ) -> (RelationId, RelationId) {
        let fwd = RelationId(self.relations.len());
        let bwd = RelationId(self.relations.len() + 1);
        self.relations.push(RelationDef {
            name: forward_name.into(),
            src,
            dst,
            inverse: bwd,
        });
        self.relations.push(RelationDef {
            name: backward_name.into(),
            src: dst,
            dst: src,
            inverse: fwd,
        });
        (fwd, bwd)
    }

    /// Adds a symmetric same-type relation that is its own inverse.
    pub fn add_symmetric_relation(
        &mut self,
        name: impl Into<String>,
        ty: NodeTypeId,
    ) -> RelationId {
        let id = RelationId(self.relations.len());
        self.relations.push(RelationDef {
            name: name.into(),
            src: ty,
            dst: ty,
            inverse: id,
        });
        id
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn node_types(&self) -> impl Iterator<Item = NodeTypeId> {
        (0..self.types.len()).map(NodeTypeId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len()).map(RelationId)
    }

    pub fn type_name(&self, t: NodeTypeId) -> &str {
        &self.types[t.0].name
    }

    pub fn relation(&self, r: RelationId) -> &RelationDef {
        &self.relations[r.0]
    }

    pub fn type_by_name(&self, name: &str) -> Option<NodeTypeId> {
        self.types
            .iter()
            .position(|t| t.name == name)
            .map(NodeTypeId)
    }

    pub fn relation_by_name(&self, name: &str) -> Option<RelationId> {
        self.relations
            .iter()
            .position(|r| r.name == name)
            .map(RelationId)
    }

    /// Relations whose destination is `t`, i.e. the incoming message routes
    /// of type `t` in the schema graph.
    pub fn incoming(&self, t: NodeTypeId) -> Vec<RelationId> {
        self.relation_ids()
            .filter(|&r| self.relation(r).dst == t)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for t in &self.types {
            if !names.insert(t.name.as_str()) {
                return Err(Error::structural(format!(
                    "duplicate node type name '{}'",
                    t.name
                )));
            }
        }
        let mut rel_names = HashSet::new();
        for (i, r) in self.relations.iter().enumerate() {
            if !rel_names.insert(r.name.as_str()) {
                return Err(Error::structural(format!(
                    "duplicate relation name '{}'",
                    r.name
                )));
            }
            if r.src.0 >= self.types.len() || r.dst.0 >= self.types.len() {
                return Err(Error::structural(format!(
                    "relation '{}' references an unknown node type",
                    r.name
                )));
            }
            if r.inverse.0 >= self.relations.len() {
                return Err(Error::structural(format!(
                    "relation '{}' has an out-of-range inverse",
                    r.name
                )));
            }
            let inv = &self.relations[r.inverse.0];
            if inv.inverse != RelationId(i) || inv.src != r.dst || inv.dst != r.src {
                return Err(Error::structural(format!(
                    "relation '{}' and its inverse '{}' are not a transposed pair",
                    r.name, inv.name
                )));
            }
        }
        Ok(())
    }
}

/// Binary CSR adjacency for one relation. Rows are destination-type nodes,
/// columns are source-type nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedAdjacency {
    relation: RelationId,
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl TypedAdjacency {
    /// Builds from (row, col) pairs; duplicates collapse to one entry.
    pub fn from_entries(
        relation: RelationId,
        rows: usize,
        cols: usize,
        mut entries: Vec<(usize, usize)>,
    ) -> Result<Self> {
        for &(r, c) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::structural(format!(
                    "adjacency entry ({r}, {c}) out of bounds for {rows}x{cols}"
                )));
            }
        }
        entries.sort_unstable();
        entries.dedup();
        let mut row_ptr = vec![0usize; rows + 1];
        for &(r, _) in &entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = entries.into_iter().map(|(_, c)| c).collect();
        Ok(TypedAdjacency {
            relation,
            rows,
            cols,
            row_ptr,
            col_idx,
        })
    }

    pub fn relation(&self) -> RelationId {
        self.relation
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// All (row, col) entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c)))
    }

    pub fn entry_set(&self) -> HashSet<(usize, usize)> {
        self.entries().collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c) in self.entries() {
            m.set(r, c, 1.0);
        }
        m
    }

    fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.rows + 1 || *self.row_ptr.last().unwrap() != self.col_idx.len()
        {
            return Err(Error::structural("malformed CSR row pointers".to_string()));
        }
        for i in 0..self.rows {
            if self.row_ptr[i] > self.row_ptr[i + 1] {
                return Err(Error::structural("non-monotone CSR row pointers".to_string()));
            }
            let row = self.row(i);
            if !row.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::structural(format!(
                    "row {i} has unsorted or duplicate columns"
                )));
            }
            if row.iter().any(|&c| c >= self.cols) {
                return Err(Error::structural(format!("row {i} has out-of-range column")));
            }
        }
        Ok(())
    }
}

/// Row-normalized adjacency: each nonempty row sums to one, zero-degree rows
/// stay all-zero. Same CSR layout as [`TypedAdjacency`] plus values.
#[derive(Debug, Clone, PartialEq)]
pub struct RowNormalizedAdjacency {
    relation: RelationId,
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl RowNormalizedAdjacency {
    pub fn relation(&self) -> RelationId {
        self.relation
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m.set(i, c, v);
            }
        }
        m
    }

    /// `self * x`, the node-level mean aggregation.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != x.rows() {
            return Err(Error::shape(format!(
                "spmm: adjacency {}x{} vs input {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, x.cols());
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let out_row = out.row_mut(i);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &xv) in out_row.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// `self.T * g`, used when pushing gradients back through [`spmm`].
    pub fn spmm_transpose(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != g.rows() {
            return Err(Error::shape(format!(
                "spmm_transpose: adjacency {}x{} vs input {}x{}",
                self.rows,
                self.cols,
                g.rows(),
                g.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, g.cols());
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let g_row = g.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &gv) in out.row_mut(c).iter_mut().zip(g_row) {
                    *o += v * gv;
                }
            }
        }
        Ok(out)
    }
}

/// Divides each nonempty row by its degree. Zero-degree rows are left
/// all-zero; the corresponding nodes simply receive no message.
pub fn row_normalize(adj: &TypedAdjacency) -> RowNormalizedAdjacency {
    let mut values = Vec::with_capacity(adj.nnz());
    for i in 0..adj.rows {
        let deg = adj.row(i).len();
        if deg > 0 {
            values.extend(std::iter::repeat(1.0 / deg as f64).take(deg));
        }
    }
    RowNormalizedAdjacency {
        relation: adj.relation,
        rows: adj.rows,
        cols: adj.cols,
        row_ptr: adj.row_ptr.clone(),
        col_idx: adj.col_idx.clone(),
        values,
    }
}

/// Class labels attached to one designated node type.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub node_type: NodeTypeId,
    pub num_classes: usize,
    /// One slot per node of `node_type`; `None` marks unlabeled nodes.
    pub values: Vec<Option<usize>>,
}

impl Labels {
    pub fn labeled_nodes(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|_| i))
            .collect()
    }
}

/// An immutable typed heterogeneous graph. Cloning is cheap; feature and
/// adjacency storage is shared behind `Arc`.
#[derive(Debug, Clone)]
pub struct HeteroGraph {
    schema: NetworkSchema,
    features: Vec<Arc<DenseMatrix>>,
    adjacency: Vec<Arc<TypedAdjacency>>,
    labels: Option<Labels>,
}

/// Assembles and validates a graph from per-relation edge lists.
///
/// Edges are `(src_node, dst_node)` pairs in relation orientation. Each edge
/// is mirrored into the inverse relation, so supplying one direction or both
/// yields the same transposed pair; duplicates collapse to binary entries.
pub fn build_graph(
    schema: NetworkSchema,
    features: Vec<DenseMatrix>,
    edge_lists: Vec<Vec<(usize, usize)>>,
    labels: Option<Labels>,
) -> Result<HeteroGraph> {
    schema.validate()?;
    if features.len() != schema.num_types() {
        return Err(Error::shape(format!(
            "expected {} feature matrices, got {}",
            schema.num_types(),
            features.len()
        )));
    }
    if edge_lists.len() != schema.num_relations() {
        return Err(Error::shape(format!(
            "expected {} edge lists, got {}",
            schema.num_relations(),
            edge_lists.len()
        )));
    }
    let counts: Vec<usize> = features.iter().map(|f| f.rows()).collect();

    // Mirror every edge into the inverse relation before building CSR.
    let mut entries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); schema.num_relations()];
    for (ri, list) in edge_lists.iter().enumerate() {
        let rel = schema.relation(RelationId(ri));
        for &(u, v) in list {
            if u >= counts[rel.src.0] || v >= counts[rel.dst.0] {
                return Err(Error::structural(format!(
                    "edge ({u}, {v}) out of range for relation '{}' ({} x {})",
                    rel.name, counts[rel.src.0], counts[rel.dst.0]
                )));
            }
            entries[ri].push((v, u));
            entries[rel.inverse.0].push((u, v));
        }
    }

    let mut adjacency = Vec::with_capacity(schema.num_relations());
    for (ri, ent) in entries.into_iter().enumerate() {
        let rel = schema.relation(RelationId(ri));
        adjacency.push(Arc::new(TypedAdjacency::from_entries(
            RelationId(ri),
            counts[rel.dst.0],
            counts[rel.src.0],
            ent,
        )?));
    }

    let graph = HeteroGraph {
        schema,
        features: features.into_iter().map(Arc::new).collect(),
        adjacency,
        labels,
    };
    graph.validate()?;
    Ok(graph)
}

impl HeteroGraph {
    pub fn schema(&self) -> &NetworkSchema {
        &self.schema
    }

    pub fn num_types(&self) -> usize {
        self.schema.num_types()
    }

    pub fn node_count(&self, t: NodeTypeId) -> usize {
        self.features[t.0].rows()
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.rows()).collect()
    }

    pub fn total_nodes(&self) -> usize {
        self.features.iter().map(|f| f.rows()).sum()
    }

    pub fn feature_dim(&self, t: NodeTypeId) -> usize {
        self.features[t.0].cols()
    }

    pub fn features(&self, t: NodeTypeId) -> &DenseMatrix {
        &self.features[t.0]
    }

    pub fn adjacency(&self, r: RelationId) -> &TypedAdjacency {
        &self.adjacency[r.0]
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// Replaces per-type feature matrices, keeping structure shared.
    pub fn with_features(&self, features: Vec<DenseMatrix>) -> Result<HeteroGraph> {
        if features.len() != self.num_types() {
            return Err(Error::shape("feature matrix count mismatch".to_string()));
        }
        for (t, f) in features.iter().enumerate() {
            if f.shape() != self.features[t].shape() {
                return Err(Error::shape(format!(
                    "feature shape mismatch for type '{}'",
                    self.schema.type_name(NodeTypeId(t))
                )));
            }
        }
        Ok(HeteroGraph {
            schema: self.schema.clone(),
            features: features.into_iter().map(Arc::new).collect(),
            adjacency: self.adjacency.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Swaps in replacement adjacencies for the given relations; all other
    /// relations stay shared with `self`.
    pub fn with_adjacency(&self, replacements: Vec<(RelationId, TypedAdjacency)>) -> HeteroGraph {
        let mut adjacency = self.adjacency.clone();
        for (r, adj) in replacements {
            adjacency[r.0] = Arc::new(adj);
        }
        HeteroGraph {
            schema: self.schema.clone(),
            features: self.features.clone(),
            adjacency,
            labels: self.labels.clone(),
        }
    }

    pub fn with_labels(&self, labels: Option<Labels>) -> HeteroGraph {
        HeteroGraph {
            schema: self.schema.clone(),
            features: self.features.clone(),
            adjacency: self.adjacency.clone(),
            labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let counts = self.node_counts();
        for r in self.schema.relation_ids() {
            let rel = self.schema.relation(r);
            let adj = self.adjacency(r);
            if adj.rows() != counts[rel.dst.0] || adj.cols() != counts[rel.src.0] {
                return Err(Error::structural(format!(
                    "adjacency of relation '{}' has shape {}x{}, expected {}x{}",
                    rel.name,
                    adj.rows(),
                    adj.cols(),
                    counts[rel.dst.0],
                    counts[rel.src.0]
                )));
            }
            adj.validate()?;
            let inv = self.adjacency(rel.inverse);
            let transposed: HashSet<(usize, usize)> =
                adj.entries().map(|(r0, c0)| (c0, r0)).collect();
            if transposed != inv.entry_set() {
                return Err(Error::structural(format!(
                    "relation '{}' is not the transpose of its inverse",
                    rel.name
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.node_type.0 >= self.num_types() {
                return Err(Error::structural("label node type out of range".to_string()));
            }
            if labels.values.len() != counts[labels.node_type.0] {
                return Err(Error::structural(format!(
                    "label vector length {} does not match node count {}",
                    labels.values.len(),
                    counts[labels.node_type.0]
                )));
            }
            if labels
                .values
                .iter()
                .flatten()
                .any(|&c| c >= labels.num_classes)
            {
                return Err(Error::structural(format!(
                    "label class out of range 0..{}",
                    labels.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Breadth-first hop distances from `start` over the union of all
    /// relations; inverse relations make traversal effectively undirected.
    /// Returns per-type distance vectors, `None` for unreachable nodes.
    pub fn bfs_distances(&self, start: NodeRef) -> Result<Vec<Vec<Option<usize>>>> {
        let (t0, i0) = start;
        if t0.0 >= self.num_types() || i0 >= self.node_count(t0) {
            return Err(Error::structural(format!(
                "invalid BFS start node ({}, {i0})",
                t0.0
            )));
        }
        let mut dist: Vec<Vec<Option<usize>>> = self
            .node_counts()
            .iter()
            .map(|&n| vec![None; n])
            .collect();
        dist[t0.0][i0] = Some(0);
        let mut frontier = vec![start];
        let mut depth = 0usize;
        while !frontier.is_empty() {
            depth += 1;
            let mut next = Vec::new();
            for (t, i) in frontier {
                for r in self.schema.incoming(t) {
                    let src_t = self.schema.relation(r).src;
                    for &nb in self.adjacency(r).row(i) {
                        if dist[src_t.0][nb].is_none() {
                            dist[src_t.0][nb] = Some(depth);
                            next.push((src_t, nb));
                        }
                    }
                }
            }
            frontier = next;
        }
        Ok(dist)
    }

    /// Nodes at exactly `k` hops from `start`.
    pub fn khop_nodes(&self, start: NodeRef, k: usize) -> Result<HashSet<NodeRef>> {
        let dist = self.bfs_distances(start)?;
        let mut out = HashSet::new();
        for (t, col) in dist.iter().enumerate() {
            for (i, d) in col.iter().enumerate() {
                if *d == Some(k) {
                    out.insert((NodeTypeId(t), i));
                }
            }
        }
        Ok(out)
    }
}
