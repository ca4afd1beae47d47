//! Checks the model forward against an independent dense transcription of
//! the layer equations, on small random heterogeneous graphs.
//!
//! The oracle works on nested `Vec<f64>` matrices, densifies adjacency
//! itself, normalizes rows by explicit degree division, and computes the
//! attention softmax in its plain unstabilized form. It shares no kernels
//! with the library.

use rand::Rng;
use vn_hgcn_core::{
    augment, build_graph, init_params, AugmentationConfig, AssignmentMode, DenseMatrix,
    DimensionPlan, ForwardOptions, HeteroGraph, ModelParams, NetworkSchema, NodeTypeId,
    RelationId,
};

type M = Vec<Vec<f64>>;

fn to_nested(m: &DenseMatrix) -> M {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn mm(a: &M, b: &M) -> M {
    let rows = a.len();
    let inner = if rows > 0 { a[0].len() } else { 0 };
    let cols = if inner > 0 { b[0].len() } else { b.first().map(|r| r.len()).unwrap_or(0) };
    let mut out = vec![vec![0.0; cols]; rows];
    for i in 0..rows {
        for k in 0..inner {
            for j in 0..cols {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn dense_adjacency(graph: &HeteroGraph, r: RelationId) -> M {
    let adj = graph.adjacency(r);
    let mut out = vec![vec![0.0; adj.cols()]; adj.rows()];
    for (row, col) in adj.entries() {
        out[row][col] = 1.0;
    }
    out
}

fn degree_normalize(a: &M) -> M {
    a.iter()
        .map(|row| {
            let deg: f64 = row.iter().sum();
            if deg == 0.0 {
                row.clone()
            } else {
                row.iter().map(|v| v / deg).collect()
            }
        })
        .collect()
}

/// Literal dense evaluation of the stacked layer equations.
fn oracle_forward(graph: &HeteroGraph, params: &ModelParams) -> Vec<M> {
    let schema = graph.schema();
    let n_types = schema.num_types();
    let k_layers = params.num_layers();
    let head = params.head_type();

    let mut h: Vec<M> = (0..n_types)
        .map(|t| to_nested(graph.features(NodeTypeId(t))))
        .collect();

    for (l, layer) in params.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(n_types);
        for t in 0..n_types {
            let e_mat = to_nested(&layer.attn_transform[t]);
            let q = to_nested(&layer.attn_vector[t]);

            // Self transform, then one aggregated term per incoming relation.
            let mut z_terms = vec![mm(&h[t], &to_nested(&layer.w_self[t]))];
            for r in schema.relation_ids() {
                if schema.relation(r).dst != NodeTypeId(t) {
                    continue;
                }
                let src = schema.relation(r).src;
                let y = mm(&h[src.0], &to_nested(&layer.w_cross[r.0]));
                let a_hat = degree_normalize(&dense_adjacency(graph, r));
                z_terms.push(mm(&a_hat, &y));
            }

            // Per-node logits e = tanh((Z E) q), then the plain softmax.
            let logits: Vec<Vec<f64>> = z_terms
                .iter()
                .map(|z| {
                    mm(&mm(z, &e_mat), &q)
                        .into_iter()
                        .map(|row| row[0].tanh())
                        .collect()
                })
                .collect();
            let n_nodes = h[t].len();
            let width = z_terms[0].first().map(|r| r.len()).unwrap_or(0);
            let mut out = vec![vec![0.0; width]; n_nodes];
            for node in 0..n_nodes {
                let denom: f64 = logits.iter().map(|e| e[node].exp()).sum();
                for (g, z) in z_terms.iter().enumerate() {
                    let alpha = logits[g][node].exp() / denom;
                    for (o, &zv) in out[node].iter_mut().zip(&z[node]) {
                        *o += alpha * zv;
                    }
                }
            }
            let logit_head = l == k_layers - 1 && t == head.0;
            if !logit_head {
                for row in &mut out {
                    for v in row {
                        *v = v.max(0.0);
                    }
                }
            }
            next.push(out);
        }
        h = next;
    }
    h
}

fn max_abs_diff(a: &M, b: &DenseMatrix) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(i, j)).abs());
        }
    }
    worst
}

/// Random heterogeneous graph with 2-3 types and up to 20 nodes total.
fn random_graph(rng: &mut impl Rng) -> HeteroGraph {
    let n_types = rng.gen_range(2..=3);
    let mut schema = NetworkSchema::new();
    let types: Vec<NodeTypeId> = (0..n_types)
        .map(|t| schema.add_node_type(format!("t{t}")))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..n_types {
        for j in (i + 1)..n_types {
            if pairs.is_empty() || rng.gen_bool(0.7) {
                let (fwd, _) =
                    schema.add_relation_pair(format!("r{i}{j}"), format!("r{j}{i}"), types[i], types[j]);
                pairs.push((fwd, i, j));
            }
        }
    }
    let mut counts = vec![0usize; n_types];
    let budget = rng.gen_range(n_types..=20);
    for t in 0..n_types {
        counts[t] = 1;
    }
    for _ in n_types..budget {
        counts[rng.gen_range(0..n_types)] += 1;
    }
    let features: Vec<DenseMatrix> = counts
        .iter()
        .map(|&n| {
            let dim = rng.gen_range(2..=5);
            DenseMatrix::from_fn(n, dim, |_, _| rng.gen_range(-1.0..1.0))
        })
        .collect();
    let mut edge_lists = vec![Vec::new(); schema.num_relations()];
    for &(fwd, i, j) in &pairs {
        let n_edges = rng.gen_range(0..=(counts[i] * counts[j]).min(12));
        for _ in 0..n_edges {
            edge_lists[fwd.0].push((rng.gen_range(0..counts[i]), rng.gen_range(0..counts[j])));
        }
    }
    build_graph(schema, features, edge_lists, None).unwrap()
}

fn check_graph(graph: &HeteroGraph, seed: u64, rng: &mut impl Rng) {
    let dims: Vec<usize> = graph
        .schema()
        .node_types()
        .map(|t| graph.feature_dim(t))
        .collect();
    let layers = rng.gen_range(1..=3);
    let hidden = rng.gen_range(2..=5);
    let d_a = rng.gen_range(1..=4);
    let classes = rng.gen_range(2..=4);
    let plan = DimensionPlan::uniform(&dims, layers, hidden, d_a, NodeTypeId(0), classes);
    let params = init_params(graph.schema(), plan, seed).unwrap();

    let got = vn_hgcn_core::forward_graph(graph, &params, &ForwardOptions::inference()).unwrap();
    let want = oracle_forward(graph, &params);
    for t in graph.schema().node_types() {
        let diff = max_abs_diff(&want[t.0], got.output(t));
        assert!(
            diff < 1e-10,
            "seed {seed}: type {} differs from oracle by {diff}",
            t.0
        );
    }
}

#[test]
fn forward_matches_dense_oracle_on_random_graphs() {
    for seed in 0..24u64 {
        let mut rng = vn_hgcn_core::seed::rng_from(1000 + seed);
        let graph = random_graph(&mut rng);
        check_graph(&graph, seed, &mut rng);
    }
}

#[test]
fn forward_matches_dense_oracle_on_augmented_graphs() {
    for seed in 0..6u64 {
        let mut rng = vn_hgcn_core::seed::rng_from(2000 + seed);
        let graph = random_graph(&mut rng);
        let aug = augment(
            &graph,
            &AugmentationConfig {
                n_virtual: rng.gen_range(1..=3),
                central_dim: rng.gen_range(2..=4),
                assignment: AssignmentMode::UniformRandom,
                seed,
            },
        )
        .unwrap();
        check_graph(aug.graph(), seed, &mut rng);
    }
}

#[test]
fn hand_worked_two_type_example() {
    // 2+2 nodes, 2 edges: small enough to eyeball, still exercises both
    // aggregation paths.
    let mut schema = NetworkSchema::new();
    let a = schema.add_node_type("a");
    let b = schema.add_node_type("b");
    schema.add_relation_pair("ab", "ba", a, b);
    let features = vec![
        DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![-0.5, 0.25]]).unwrap(),
        DenseMatrix::from_rows(&[vec![0.75, -1.0], vec![0.0, 2.0]]).unwrap(),
    ];
    let g = build_graph(
        schema,
        features,
        vec![vec![(0, 0), (1, 1)], vec![]],
        None,
    )
    .unwrap();
    let plan = DimensionPlan::uniform(&[2, 2], 2, 3, 2, a, 2);
    let params = init_params(g.schema(), plan, 42).unwrap();
    let got = vn_hgcn_core::forward_graph(&g, &params, &ForwardOptions::inference()).unwrap();
    let want = oracle_forward(&g, &params);
    for t in [a, b] {
        assert!(max_abs_diff(&want[t.0], got.output(t)) < 1e-10);
    }
}
