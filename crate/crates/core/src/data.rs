//! Portable dataset directories and synthetic graph generators.
//!
//! A dataset is a TOML manifest plus CSV files:
//! - one features CSV per node type (`id` column, then the feature columns),
//! - one edges CSV per relation (`src,dst`, 0-based per-type ids),
//! - one labels CSV for the target type (`id,label`).
//!
//! Relations are declared in inverse-paired form. A relation may omit its
//! edges file, in which case its edges are mirrored from the inverse; a
//! relation naming itself as inverse is a symmetric same-type relation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, HeteroGraph, Labels, NetworkSchema, NodeTypeId};
use crate::numerics::DenseMatrix;
use crate::seed::{derive_seed, domain, rng_from};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestNodeType {
    pub name: String,
    pub feature_dim: usize,
    /// Features CSV path, relative to the manifest.
    pub features: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRelation {
    pub name: String,
    pub src: String,
    pub dst: String,
    /// Name of the inverse relation; the relation's own name marks a
    /// symmetric same-type relation.
    pub inverse: String,
    /// Edges CSV path; omitted edges are mirrored from the inverse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub target_type: String,
    pub num_classes: usize,
    /// Labels CSV path for the target type.
    pub labels: String,
    pub node_types: Vec<ManifestNodeType>,
    #[serde(default)]
    pub relations: Vec<ManifestRelation>,
}

impl DatasetManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read manifest {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Error::data(format!("bad manifest {}: {e}", path.display())))
    }
}

/// Loads and validates a dataset directory; `manifest_path` points at the
/// TOML manifest, data files are resolved relative to it.
pub fn load_dataset(manifest_path: &Path) -> Result<HeteroGraph> {
    let manifest = DatasetManifest::from_path(manifest_path)?;
    let dir = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let mut schema = NetworkSchema::new();
    let mut type_index = std::collections::HashMap::new();
    for nt in &manifest.node_types {
        if nt.feature_dim == 0 {
            return Err(Error::data(format!(
                "node type '{}' declares feature_dim 0; features are required",
                nt.name
            )));
        }
        type_index.insert(nt.name.clone(), schema.add_node_type(&nt.name));
    }
    let type_id = |name: &str| -> Result<NodeTypeId> {
        type_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::data(format!("unknown node type '{name}' in manifest")))
    };

    // Pair up relations in manifest order.
    let mut rel_ids = std::collections::HashMap::new();
    for rel in &manifest.relations {
        if rel_ids.contains_key(rel.name.as_str()) {
            continue;
        }
        let src = type_id(&rel.src)?;
        let dst = type_id(&rel.dst)?;
        if rel.inverse == rel.name {
            if src != dst {
                return Err(Error::data(format!(
                    "relation '{}' is self-inverse but connects different types",
                    rel.name
                )));
            }
            rel_ids.insert(rel.name.as_str(), schema.add_symmetric_relation(&rel.name, src));
            continue;
        }
        let partner = manifest
            .relations
            .iter()
            .find(|r| r.name == rel.inverse)
            .ok_or_else(|| {
                Error::data(format!(
                    "relation '{}' names inverse '{}' which is not in the manifest",
                    rel.name, rel.inverse
                ))
            })?;
        if partner.inverse != rel.name || partner.src != rel.dst || partner.dst != rel.src {
            return Err(Error::data(format!(
                "relations '{}' and '{}' are not a consistent inverse pair",
                rel.name, partner.name
            )));
        }
        let (fwd, bwd) = schema.add_relation_pair(&rel.name, &partner.name, src, dst);
        rel_ids.insert(rel.name.as_str(), fwd);
        rel_ids.insert(partner.name.as_str(), bwd);
    }

    let mut features = Vec::with_capacity(manifest.node_types.len());
    for nt in &manifest.node_types {
        features.push(read_features(&dir.join(&nt.features), nt)?);
    }
    let counts: Vec<usize> = features.iter().map(|f| f.rows()).collect();

    let mut edge_lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); schema.num_relations()];
    for rel in &manifest.relations {
        if let Some(edges_file) = &rel.edges {
            let rid = rel_ids[rel.name.as_str()];
            let src_count = counts[schema.relation(rid).src.0];
            let dst_count = counts[schema.relation(rid).dst.0];
            edge_lists[rid.0] =
                read_edges(&dir.join(edges_file), &rel.name, src_count, dst_count)?;
        }
    }

    let target = type_id(&manifest.target_type)?;
    let labels = read_labels(
        &dir.join(&manifest.labels),
        target,
        counts[target.0],
        manifest.num_classes,
    )?;

    let graph = build_graph(schema, features, edge_lists, Some(labels))?;
    graph.validate()?;
    Ok(graph)
}

fn read_features(path: &Path, nt: &ManifestNodeType) -> Result<DenseMatrix> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open features {}: {e}", path.display())))?;
    let header_len = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .len();
    if header_len != nt.feature_dim + 1 {
        return Err(Error::data(format!(
            "{}: {} feature columns, manifest declares {} for type '{}'",
            path.display(),
            header_len.saturating_sub(1),
            nt.feature_dim,
            nt.name
        )));
    }
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut it = record.iter();
        let id: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::data(format!("{} line {line}: bad id", path.display())))?;
        let mut values = Vec::with_capacity(nt.feature_dim);
        for s in it {
            values.push(s.parse::<f64>().map_err(|e| {
                Error::data(format!("{} line {line}: bad feature value: {e}", path.display()))
            })?);
        }
        if values.len() != nt.feature_dim {
            return Err(Error::data(format!(
                "{} line {line}: {} values, expected {}",
                path.display(),
                values.len(),
                nt.feature_dim
            )));
        }
        rows.push((id, values));
    }
    let n = rows.len();
    let mut data = vec![None; n];
    for (id, values) in rows {
        if id >= n {
            return Err(Error::data(format!(
                "{}: id {id} out of range for {n} rows (ids must be dense 0-based)",
                path.display()
            )));
        }
        if data[id].replace(values).is_some() {
            return Err(Error::data(format!("{}: duplicate id {id}", path.display())));
        }
    }
    let rows: Vec<Vec<f64>> = data
        .into_iter()
        .map(|v| v.expect("dense ids checked above"))
        .collect();
    DenseMatrix::from_rows(&rows)
}

fn read_edges(
    path: &Path,
    relation: &str,
    src_count: usize,
    dst_count: usize,
) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open edges {}: {e}", path.display())))?;
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = |i: usize| -> Result<usize> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Error::data(format!("{} line {line}: bad endpoint", path.display()))
                })
        };
        let (src, dst) = (parse(0)?, parse(1)?);
        if src >= src_count || dst >= dst_count {
            return Err(Error::data(format!(
                "{} line {line}: edge ({src}, {dst}) dangles outside relation '{relation}' ({src_count} x {dst_count} nodes)",
                path.display()
            )));
        }
        edges.push((src, dst));
    }
    Ok(edges)
}

fn read_labels(
    path: &Path,
    target: NodeTypeId,
    count: usize,
    num_classes: usize,
) -> Result<Labels> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open labels {}: {e}", path.display())))?;
    let mut values = vec![None; count];
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = |i: usize| -> Result<usize> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::data(format!("{} line {line}: bad entry", path.display())))
        };
        let (id, class) = (parse(0)?, parse(1)?);
        if id >= count {
            return Err(Error::data(format!(
                "{} line {line}: label id {id} out of range ({count} nodes)",
                path.display()
            )));
        }
        if class >= num_classes {
            return Err(Error::data(format!(
                "{} line {line}: class {class} out of range ({num_classes} classes)",
                path.display()
            )));
        }
        if values[id].replace(class).is_some() {
            return Err(Error::data(format!(
                "{} line {line}: duplicate label for id {id}",
                path.display()
            )));
        }
    }
    Ok(Labels {
        node_type: target,
        num_classes,
        values,
    })
}

/// Writes `graph` as a dataset directory and returns the manifest path.
/// Feature values survive the text round trip bit-exactly.
pub fn save_dataset(graph: &HeteroGraph, dir: &Path, name: &str) -> Result<PathBuf> {
    let labels = graph
        .labels()
        .ok_or_else(|| Error::data("cannot save a dataset without labels".to_string()))?;
    fs::create_dir_all(dir)?;
    let schema = graph.schema();

    let mut node_types = Vec::new();
    for t in schema.node_types() {
        let file = format!("{}_features.csv", sanitize(schema.type_name(t)));
        let feats = graph.features(t);
        let mut w = csv::Writer::from_path(dir.join(&file))
            .map_err(|e| Error::data(format!("cannot write {file}: {e}")))?;
        let mut header = vec!["id".to_string()];
        header.extend((0..feats.cols()).map(|j| format!("f{j}")));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..feats.rows() {
            let mut record = vec![i.to_string()];
            record.extend(feats.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush()?;
        node_types.push(ManifestNodeType {
            name: schema.type_name(t).to_string(),
            feature_dim: feats.cols(),
            features: file,
        });
    }

    // Write each relation pair once; the inverse is mirrored on load.
    let mut relations = Vec::new();
    for r in schema.relation_ids() {
        let def = schema.relation(r);
        let canonical = def.inverse.0 >= r.0;
        let edges = if canonical {
            let file = format!("{}_edges.csv", sanitize(&def.name));
            let mut w = csv::Writer::from_path(dir.join(&file))
                .map_err(|e| Error::data(format!("cannot write {file}: {e}")))?;
            w.write_record(["src", "dst"]).map_err(csv_err)?;
            for (dst, src) in graph.adjacency(r).entries() {
                w.write_record([src.to_string(), dst.to_string()])
                    .map_err(csv_err)?;
            }
            w.flush()?;
            Some(file)
        } else {
            None
        };
        relations.push(ManifestRelation {
            name: def.name.clone(),
            src: schema.type_name(def.src).to_string(),
            dst: schema.type_name(def.dst).to_string(),
            inverse: schema.relation(def.inverse).name.clone(),
            edges,
        });
    }

    let labels_file = "labels.csv".to_string();
    {
        let mut w = csv::Writer::from_path(dir.join(&labels_file))
            .map_err(|e| Error::data(format!("cannot write labels: {e}")))?;
        w.write_record(["id", "label"]).map_err(csv_err)?;
        for (i, v) in labels.values.iter().enumerate() {
            if let Some(class) = v {
                w.write_record([i.to_string(), class.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
    }

    let manifest = DatasetManifest {
        name: name.to_string(),
        target_type: schema.type_name(labels.node_type).to_string(),
        num_classes: labels.num_classes,
        labels: labels_file,
        node_types,
        relations,
    };
    let manifest_path = dir.join("dataset.toml");
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::data(format!("manifest serialization: {e}")))?;
    fs::write(&manifest_path, text)?;
    Ok(manifest_path)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::data(format!("csv write: {e}"))
}

/// Synthetic graph generators for desk-scale experiments and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticSpec {
    /// Three types: labeled `entity` targets whose features are class means
    /// separated along orthogonal axes plus unit Gaussian noise, and
    /// `bridge` / `context` nodes wired with intra-class preference.
    PlantedPartition {
        target_nodes: usize,
        bridge_nodes: usize,
        context_nodes: usize,
        classes: usize,
        feature_dim: usize,
        aux_feature_dim: usize,
        /// Distance between class means along orthogonal axes.
        separation: f64,
        /// Probability that an edge endpoint is drawn from the same class.
        intra_class_preference: f64,
        edges_per_node: usize,
        seed: u64,
    },
    /// A path graph of `length` edges whose node types cycle through
    /// `chain_types` types, with distinct features per node. Type-0 nodes
    /// carry alternating labels.
    TypedChain {
        length: usize,
        chain_types: usize,
        feature_dim: usize,
        classes: usize,
        seed: u64,
    },
}

impl SyntheticSpec {
    pub fn planted_default(seed: u64) -> Self {
        SyntheticSpec::PlantedPartition {
            target_nodes: 300,
            bridge_nodes: 120,
            context_nodes: 30,
            classes: 3,
            feature_dim: 16,
            aux_feature_dim: 8,
            separation: 10.0,
            intra_class_preference: 0.9,
            edges_per_node: 4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SyntheticSpec::PlantedPartition {
                target_nodes,
                bridge_nodes,
                context_nodes,
                classes,
                feature_dim,
                aux_feature_dim,
                separation,
                intra_class_preference,
                edges_per_node,
                ..
            } => {
                if *classes == 0 || *target_nodes < *classes {
                    return Err(Error::config(
                        "planted partition needs at least one target node per class".to_string(),
                    ));
                }
                if *bridge_nodes < *classes || *context_nodes < *classes {
                    return Err(Error::config(
                        "planted partition needs at least one bridge/context node per class"
                            .to_string(),
                    ));
                }
                if *feature_dim < *classes {
                    return Err(Error::config(
                        "feature_dim must be at least the class count (orthogonal means)"
                            .to_string(),
                    ));
                }
                if *aux_feature_dim == 0 {
                    return Err(Error::config("aux_feature_dim must be positive".to_string()));
                }
                if *separation <= 0.0 {
                    return Err(Error::config("separation must be positive".to_string()));
                }
                if !(0.0..=1.0).contains(intra_class_preference) {
                    return Err(Error::config(
                        "intra_class_preference must lie in [0, 1]".to_string(),
                    ));
                }
                if *edges_per_node == 0 {
                    return Err(Error::config("edges_per_node must be positive".to_string()));
                }
            }
            SyntheticSpec::TypedChain {
                length,
                chain_types,
                feature_dim,
                classes,
                ..
            } => {
                if *length == 0 || *chain_types == 0 || *feature_dim == 0 || *classes == 0 {
                    return Err(Error::config(
                        "typed chain needs positive length, types, feature_dim, classes"
                            .to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<HeteroGraph> {
    spec.validate()?;
    match spec {
        SyntheticSpec::PlantedPartition {
            target_nodes,
            bridge_nodes,
            context_nodes,
            classes,
            feature_dim,
            aux_feature_dim,
            separation,
            intra_class_preference,
            edges_per_node,
            seed,
        } => planted_partition(
            *target_nodes,
            *bridge_nodes,
            *context_nodes,
            *classes,
            *feature_dim,
            *aux_feature_dim,
            *separation,
            *intra_class_preference,
            *edges_per_node,
            *seed,
        ),
        SyntheticSpec::TypedChain {
            length,
            chain_types,
            feature_dim,
            classes,
            seed,
        } => typed_chain(*length, *chain_types, *feature_dim, *classes, *seed),
    }
}

#[allow(clippy::too_many_arguments)]
fn planted_partition(
    n_target: usize,
    n_bridge: usize,
    n_context: usize,
    classes: usize,
    dim: usize,
    aux_dim: usize,
    separation: f64,
    p_in: f64,
    edges_per_node: usize,
    seed: u64,
) -> Result<HeteroGraph> {
    let mut schema = NetworkSchema::new();
    let entity = schema.add_node_type("entity");
    let bridge = schema.add_node_type("bridge");
    let context = schema.add_node_type("context");
    let (eb, _) = schema.add_relation_pair("entity-bridge", "bridge-entity", entity, bridge);
    let (ec, _) = schema.add_relation_pair("entity-context", "context-entity", entity, context);

    let mut rng = rng_from(derive_seed(seed, &[domain::SYNTHETIC]));
    let class_of = |i: usize| i % classes;

    let mut target_feats = DenseMatrix::zeros(n_target, dim);
    for i in 0..n_target {
        let c = class_of(i);
        for (j, v) in target_feats.row_mut(i).iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z + if j == c { separation } else { 0.0 };
        }
    }
    let mut gauss = |rows: usize, cols: usize| {
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    };
    let bridge_feats = gauss(n_bridge, aux_dim);
    let context_feats = gauss(n_context, aux_dim);

    // Partner pools per class for preference sampling.
    let pools = |n: usize| -> Vec<Vec<usize>> {
        let mut pools = vec![Vec::new(); classes];
        for i in 0..n {
            pools[class_of(i)].push(i);
        }
        pools
    };
    let bridge_pools = pools(n_bridge);
    let context_pools = pools(n_context);

    let mut sample_edges = |pools: &[Vec<usize>], n_other: usize| -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(n_target * edges_per_node);
        for i in 0..n_target {
            let c = class_of(i);
            for _ in 0..edges_per_node {
                let partner = if rng.gen::<f64>() < p_in || classes == 1 {
                    pools[c][rng.gen_range(0..pools[c].len())]
                } else {
                    // Uniform over the other classes' nodes.
                    loop {
                        let cand = rng.gen_range(0..n_other);
                        if class_of(cand) != c {
                            break cand;
                        }
                    }
                };
                edges.push((i, partner));
            }
        }
        edges
    };
    let entity_bridge = sample_edges(&bridge_pools, n_bridge);
    let entity_context = sample_edges(&context_pools, n_context);

    let labels = Labels {
        node_type: entity,
        num_classes: classes,
        values: (0..n_target).map(|i| Some(class_of(i))).collect(),
    };
    let mut edge_lists = vec![Vec::new(); schema.num_relations()];
    edge_lists[eb.0] = entity_bridge;
    edge_lists[ec.0] = entity_context;
    build_graph(
        schema,
        vec![target_feats, bridge_feats, context_feats],
        edge_lists,
        Some(labels),
    )
}

fn typed_chain(
    length: usize,
    chain_types: usize,
    dim: usize,
    classes: usize,
    seed: u64,
) -> Result<HeteroGraph> {
    let n = length + 1;
    let mut schema = NetworkSchema::new();
    for t in 0..chain_types {
        schema.add_node_type(format!("t{t}"));
    }
    // One relation per ordered consecutive type pair along the cycle.
    let mut step_relation = Vec::with_capacity(chain_types);
    for c in 0..chain_types {
        let src = NodeTypeId(c);
        let dst = NodeTypeId((c + 1) % chain_types);
        if let Some(existing) = schema.relation_by_name(&step_name(src, dst)) {
            step_relation.push(existing);
        } else if src == dst {
            step_relation.push(schema.add_symmetric_relation(step_name(src, dst), src));
        } else {
            let (fwd, _) = schema.add_relation_pair(
                step_name(src, dst),
                step_name(dst, src),
                src,
                dst,
            );
            step_relation.push(fwd);
        }
    }

    let counts: Vec<usize> = (0..chain_types)
        .map(|t| (0..n).filter(|i| i % chain_types == t).count())
        .collect();
    let mut rng = rng_from(derive_seed(seed, &[domain::SYNTHETIC]));
    let features: Vec<DenseMatrix> = counts
        .iter()
        .map(|&c| DenseMatrix::from_fn(c, dim, |_, _| StandardNormal.sample(&mut rng)))
        .collect();

    let mut edge_lists = vec![Vec::new(); schema.num_relations()];
    for i in 0..length {
        let src_ty = i % chain_types;
        let r = step_relation[src_ty];
        edge_lists[r.0].push((i / chain_types, (i + 1) / chain_types));
    }

    let labels = Labels {
        node_type: NodeTypeId(0),
        num_classes: classes,
        values: (0..counts[0]).map(|i| Some(i % classes)).collect(),
    };
    build_graph(schema, features, edge_lists, Some(labels))
}

fn step_name(src: NodeTypeId, dst: NodeTypeId) -> String {
    format!("step-t{}-t{}", src.0, dst.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_chain_hop_structure() {
        let spec = SyntheticSpec::TypedChain {
            length: 9,
            chain_types: 2,
            feature_dim: 3,
            classes: 2,
            seed: 0,
        };
        let g = generate_synthetic(&spec).unwrap();
        assert_eq!(g.total_nodes(), 10);
        // Exactly one node at hop 8 from node 0.
        let shell = g.khop_nodes((NodeTypeId(0), 0), 8).unwrap();
        assert_eq!(shell.len(), 1);
        assert_eq!(shell.into_iter().next().unwrap(), (NodeTypeId(0), 4));
    }

    #[test]
    fn single_type_chain_has_every_hop_in_type_zero() {
        let spec = SyntheticSpec::TypedChain {
            length: 12,
            chain_types: 1,
            feature_dim: 4,
            classes: 2,
            seed: 1,
        };
        let g = generate_synthetic(&spec).unwrap();
        for k in 1..=12 {
            let shell = g.khop_nodes((NodeTypeId(0), 0), k).unwrap();
            assert_eq!(shell.len(), 1, "hop {k}");
        }
    }

    #[test]
    fn three_type_chain_cycles_types() {
        let spec = SyntheticSpec::TypedChain {
            length: 7,
            chain_types: 3,
            feature_dim: 2,
            classes: 2,
            seed: 2,
        };
        let g = generate_synthetic(&spec).unwrap();
        assert_eq!(g.node_counts(), vec![3, 3, 2]);
        // Path is connected end to end.
        let far = g.khop_nodes((NodeTypeId(0), 0), 7).unwrap();
        assert_eq!(far.len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::planted_default(5);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        for t in a.schema().node_types() {
            assert_eq!(a.features(t).data(), b.features(t).data());
        }
        for r in a.schema().relation_ids() {
            assert_eq!(a.adjacency(r).entry_set(), b.adjacency(r).entry_set());
        }
    }

    /// Least-squares probe: one-hot regression on raw target features must
    /// separate planted classes nearly perfectly at separation 10.
    #[test]
    fn planted_partition_is_linearly_separable() {
        let spec = SyntheticSpec::planted_default(7);
        let g = generate_synthetic(&spec).unwrap();
        let x = g.features(NodeTypeId(0));
        let labels = g.labels().unwrap();
        let (n, d) = x.shape();
        let c = labels.num_classes;

        // Normal equations (X^T X + eps I) W = X^T Y, solved by Gaussian
        // elimination written out directly.
        let mut xtx = vec![vec![0.0f64; d]; d];
        let mut xty = vec![vec![0.0f64; c]; d];
        for i in 0..n {
            let row = x.row(i);
            let y = labels.values[i].unwrap();
            for a in 0..d {
                for b in 0..d {
                    xtx[a][b] += row[a] * row[b];
                }
                xty[a][y] += row[a];
            }
        }
        for (a, row) in xtx.iter_mut().enumerate() {
            row[a] += 1e-6;
        }
        // Solve for each class column.
        let mut w = vec![vec![0.0f64; c]; d];
        for class in 0..c {
            let mut m: Vec<Vec<f64>> = xtx.clone();
            let mut rhs: Vec<f64> = (0..d).map(|a| xty[a][class]).collect();
            for col in 0..d {
                let pivot = (col..d)
                    .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                    .unwrap();
                m.swap(col, pivot);
                rhs.swap(col, pivot);
                let p = m[col][col];
                for r in (col + 1)..d {
                    let factor = m[r][col] / p;
                    for k in col..d {
                        m[r][k] -= factor * m[col][k];
                    }
                    rhs[r] -= factor * rhs[col];
                }
            }
            for col in (0..d).rev() {
                let mut acc = rhs[col];
                for k in (col + 1)..d {
                    acc -= m[col][k] * w[k][class];
                }
                w[col][class] = acc / m[col][col];
            }
        }

        let mut correct = 0;
        for i in 0..n {
            let row = x.row(i);
            let mut best = (0, f64::NEG_INFINITY);
            for class in 0..c {
                let score: f64 = (0..d).map(|a| row[a] * w[a][class]).sum();
                if score > best.1 {
                    best = (class, score);
                }
            }
            if best.0 == labels.values[i].unwrap() {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / n as f64;
        assert!(accuracy >= 0.99, "probe accuracy {accuracy}");
    }

    #[test]
    fn dataset_round_trip_is_identity() {
        let spec = SyntheticSpec::PlantedPartition {
            target_nodes: 20,
            bridge_nodes: 9,
            context_nodes: 6,
            classes: 3,
            feature_dim: 5,
            aux_feature_dim: 3,
            separation: 4.0,
            intra_class_preference: 0.8,
            edges_per_node: 2,
            seed: 3,
        };
        let g = generate_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(&g, dir.path(), "roundtrip").unwrap();
        let loaded = load_dataset(&manifest).unwrap();

        for t in g.schema().node_types() {
            assert_eq!(g.features(t).data(), loaded.features(t).data());
            assert_eq!(
                g.schema().type_name(t),
                loaded.schema().type_name(t)
            );
        }
        for r in g.schema().relation_ids() {
            assert_eq!(
                g.adjacency(r).entry_set(),
                loaded.adjacency(r).entry_set()
            );
        }
        assert_eq!(g.labels(), loaded.labels());
    }

    #[test]
    fn missing_inverse_is_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("f.csv"),
            "id,f0\n0,1.0\n",
        )
        .unwrap();
        fs::write(dir.path().join("labels.csv"), "id,label\n0,0\n").unwrap();
        fs::write(dir.path().join("e.csv"), "src,dst\n").unwrap();
        let manifest = r#"
name = "broken"
target_type = "a"
num_classes = 1
labels = "labels.csv"

[[node_types]]
name = "a"
feature_dim = 1
features = "f.csv"

[[relations]]
name = "solo"
src = "a"
dst = "a"
inverse = "missing"
edges = "e.csv"
"#;
        let path = dir.path().join("dataset.toml");
        fs::write(&path, manifest).unwrap();
        let err = load_dataset(&path).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("solo") && msg.contains("missing"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn zero_feature_dim_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("f.csv"), "id\n0\n").unwrap();
        fs::write(dir.path().join("labels.csv"), "id,label\n0,0\n").unwrap();
        let manifest = r#"
name = "empty-features"
target_type = "a"
num_classes = 1
labels = "labels.csv"

[[node_types]]
name = "a"
feature_dim = 0
features = "f.csv"
"#;
        let path = dir.path().join("dataset.toml");
        fs::write(&path, manifest).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Data(_))));
    }

    #[test]
    fn dangling_edge_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("f.csv"), "id,f0\n0,1.0\n1,2.0\n").unwrap();
        fs::write(dir.path().join("labels.csv"), "id,label\n0,0\n").unwrap();
        fs::write(dir.path().join("e.csv"), "src,dst\n0,1\n0,7\n").unwrap();
        let manifest = r#"
name = "dangling"
target_type = "a"
num_classes = 1
labels = "labels.csv"

[[node_types]]
name = "a"
feature_dim = 1
features = "f.csv"

[[relations]]
name = "link"
src = "a"
dst = "a"
inverse = "link"
edges = "e.csv"
"#;
        let path = dir.path().join("dataset.toml");
        fs::write(&path, manifest).unwrap();
        let err = load_dataset(&path).unwrap_err();
        match err {
            Error::Data(msg) => {
                assert!(msg.contains("line 3") && msg.contains("(0, 7)"), "{msg}")
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_class_index_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("f.csv"), "id,f0\n0,1.0\n").unwrap();
        fs::write(dir.path().join("labels.csv"), "id,label\n0,5\n").unwrap();
        let manifest = r#"
name = "bad-class"
target_type = "a"
num_classes = 2
labels = "labels.csv"

[[node_types]]
name = "a"
feature_dim = 1
features = "f.csv"
"#;
        let path = dir.path().join("dataset.toml");
        fs::write(&path, manifest).unwrap();
        let err = load_dataset(&path).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("class 5"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
