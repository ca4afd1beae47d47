//! Classification metrics, the long-range perturbation study, and
//! hyperparameter sweeps.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::augment;
use crate::checkpoint::TrainedModel;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, Labels};
use crate::model::{argmax_rows, forward, forward_graph, predict, predict_graph, ForwardOptions};
use crate::seed::{derive_seed, domain, rng_from};
use crate::train::{fit, make_split, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][pred]`; row sums equal per-class support.
    pub confusion: Vec<Vec<usize>>,
}

/// Micro/Macro-F1 over the masked nodes. Micro pools counts globally
/// (equal to accuracy for single-label multiclass); macro is the unweighted
/// mean of per-class F1, where classes absent from both predictions and
/// gold contribute zero.
pub fn f1_scores(predictions: &[usize], labels: &Labels, mask: &[usize]) -> Result<F1Report> {
    if mask.is_empty() {
        return Err(Error::eval("empty evaluation mask".to_string()));
    }
    let classes = labels.num_classes;
    let mut confusion = vec![vec![0usize; classes]; classes];
    for &i in mask {
        let gold = labels
            .values
            .get(i)
            .copied()
            .flatten()
            .ok_or_else(|| Error::eval(format!("node {i} in mask has no label")))?;
        let pred = *predictions
            .get(i)
            .ok_or_else(|| Error::eval(format!("node {i} has no prediction")))?;
        if pred >= classes {
            return Err(Error::eval(format!(
                "prediction {pred} out of range for {classes} classes"
            )));
        }
        confusion[gold][pred] += 1;
    }

    let total: usize = mask.len();
    let tp_total: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let fp_total = total - tp_total;
    let fn_total = total - tp_total;
    let micro_f1 = tp_total as f64 / (tp_total as f64 + 0.5 * (fp_total + fn_total) as f64);

    let mut per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..classes).map(|g| confusion[g][c]).sum();
        let precision = if predicted > 0 {
            tp as f64 / predicted as f64
        } else {
            0.0
        };
        let recall = if support > 0 {
            tp as f64 / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support,
        });
    }
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / classes as f64;

    Ok(F1Report {
        micro_f1,
        macro_f1,
        per_class,
        confusion,
    })
}

impl F1Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for (c, m) in self.per_class.iter().enumerate() {
            out.push_str(&format!(
                "{c},{},{},{},{}\n",
                m.precision, m.recall, m.f1, m.support
            ));
        }
        out.push_str(&format!("micro,,,{},{}\n", self.micro_f1, self.confusion.len()));
        out.push_str(&format!("macro,,,{},\n", self.macro_f1));
        out
    }
}

/// Scores a trained model on the masked nodes of `graph`, re-deriving the
/// augmented graph when the model was trained with one.
pub fn evaluate_model(
    graph: &HeteroGraph,
    model: &TrainedModel,
    mask: &[usize],
) -> Result<F1Report> {
    let labels = graph
        .labels()
        .cloned()
        .ok_or_else(|| Error::data("graph has no labels".to_string()))?;
    let probs = match &model.augmentation {
        Some(cfg) => {
            let aug = augment(graph, cfg)?;
            predict(&aug, &model.params)?
        }
        None => predict_graph(graph, &model.params)?,
    };
    f1_scores(&argmax_rows(&probs), &labels, mask)
}

/// Result grid of the long-range influence experiment: the L2 norm of the
/// change of the target node's final embedding per (hop, variance) cell.
/// `None` marks hops with no same-type node (no experiment ran there).
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationGrid {
    pub descriptor: String,
    pub target: usize,
    pub hops: Vec<usize>,
    pub variances: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl PerturbationGrid {
    pub fn cell(&self, hop: usize, variance: f64) -> Option<f64> {
        let hi = self.hops.iter().position(|&h| h == hop)?;
        let vi = self.variances.iter().position(|&v| v == variance)?;
        self.values[hi][vi]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# perturbation grid: model={} target={}\n",
            self.descriptor, self.target
        ));
        out.push_str("# value: L2 norm of the change of the target's final embedding\n");
        out.push_str("# empty value: no same-type nodes at that hop\n");
        out.push_str("hop,variance,delta_norm\n");
        for (hi, &hop) in self.hops.iter().enumerate() {
            for (vi, &variance) in self.variances.iter().enumerate() {
                match self.values[hi][vi] {
                    Some(v) => out.push_str(&format!("{hop},{variance},{v}\n")),
                    None => out.push_str(&format!("{hop},{variance},\n")),
                }
            }
        }
        out
    }
}

/// Perturbs all nodes of the target's type at exactly `k` original-graph
/// hops with Gaussian noise of each variance, and measures the resulting
/// change of the target's final embedding under both models. Both grids
/// see identical noise draws; hop distance is always measured in the
/// original (non-augmented) graph.
pub fn perturbation_study(
    graph: &HeteroGraph,
    vn_model: &TrainedModel,
    plain_model: &TrainedModel,
    target: usize,
    hops: &[usize],
    variances: &[f64],
    seed: u64,
) -> Result<(PerturbationGrid, PerturbationGrid)> {
    let vn_cfg = vn_model
        .augmentation
        .ok_or_else(|| Error::config("vn model carries no augmentation config".to_string()))?;
    if plain_model.augmentation.is_some() {
        return Err(Error::config(
            "plain model unexpectedly carries an augmentation config".to_string(),
        ));
    }
    let target_type = plain_model.params.head_type();
    if vn_model.params.head_type() != target_type {
        return Err(Error::config("models disagree on the target type".to_string()));
    }
    if target >= graph.node_count(target_type) {
        return Err(Error::structural(format!(
            "target node {target} out of range for type '{}'",
            graph.schema().type_name(target_type)
        )));
    }
    if hops.is_empty() || variances.is_empty() {
        return Err(Error::config("hops and variances must be non-empty".to_string()));
    }

    let aug_clean = augment(graph, &vn_cfg)?;
    let opts = ForwardOptions::inference();
    let clean_plain = forward_graph(graph, &plain_model.params, &opts)?
        .output(target_type)
        .row(target)
        .to_vec();
    let clean_vn = forward(&aug_clean, &vn_model.params, &opts)?
        .output(target_type)
        .row(target)
        .to_vec();

    let dist = graph.bfs_distances((target_type, target))?;
    let mut vn_values = Vec::with_capacity(hops.len());
    let mut plain_values = Vec::with_capacity(hops.len());
    for (hi, &k) in hops.iter().enumerate() {
        let shell: Vec<usize> = dist[target_type.0]
            .iter()
            .enumerate()
            .filter_map(|(i, d)| (*d == Some(k)).then_some(i))
            .collect();
        if shell.is_empty() {
            vn_values.push(vec![None; variances.len()]);
            plain_values.push(vec![None; variances.len()]);
            continue;
        }
        let mut vn_row = Vec::with_capacity(variances.len());
        let mut plain_row = Vec::with_capacity(variances.len());
        for (vi, &variance) in variances.iter().enumerate() {
            let mut rng = rng_from(derive_seed(seed, &[domain::NOISE, hi as u64, vi as u64]));
            let sigma = variance.sqrt();
            let mut feats = graph.features(target_type).clone();
            for &node in &shell {
                for value in feats.row_mut(node) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *value += sigma * z;
                }
            }
            let mut all_feats: Vec<_> = graph
                .schema()
                .node_types()
                .map(|t| graph.features(t).clone())
                .collect();
            all_feats[target_type.0] = feats;
            let perturbed = graph.with_features(all_feats)?;

            let plain_row_emb = forward_graph(&perturbed, &plain_model.params, &opts)?;
            plain_row.push(Some(l2_diff(
                plain_row_emb.output(target_type).row(target),
                &clean_plain,
            )));

            let aug_pert = aug_clean.refresh_features(&perturbed)?;
            let vn_row_emb = forward(&aug_pert, &vn_model.params, &opts)?;
            vn_row.push(Some(l2_diff(
                vn_row_emb.output(target_type).row(target),
                &clean_vn,
            )));
        }
        vn_values.push(vn_row);
        plain_values.push(plain_row);
    }

    let grid = |descriptor: &str, values: Vec<Vec<Option<f64>>>| PerturbationGrid {
        descriptor: descriptor.to_string(),
        target,
        hops: hops.to_vec(),
        variances: variances.to_vec(),
        values,
    };
    Ok((grid("vn", vn_values), grid("plain", plain_values)))
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    HiddenDim,
    Layers,
    NVirtual,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 3] = [SweepAxis::HiddenDim, SweepAxis::Layers, SweepAxis::NVirtual];

    fn apply(&self, cfg: &mut TrainConfig, value: usize) {
        match self {
            SweepAxis::HiddenDim => cfg.hidden_dim = value,
            SweepAxis::Layers => cfg.layers = value,
            SweepAxis::NVirtual => cfg.n_virtual = value,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepAxis::HiddenDim => "hidden_dim",
            SweepAxis::Layers => "layers",
            SweepAxis::NVirtual => "n_virtual",
        };
        f.write_str(s)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden_dim" => Ok(SweepAxis::HiddenDim),
            "layers" => Ok(SweepAxis::Layers),
            "n_virtual" => Ok(SweepAxis::NVirtual),
            other => Err(Error::config(format!(
                "unknown sweep axis '{other}'; valid axes: hidden_dim, layers, n_virtual"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub mean_micro: f64,
    pub std_micro: f64,
    pub mean_macro: f64,
    pub std_macro: f64,
    pub runs: usize,
}

/// One fit per (value, seed) cell, scored on the test split; rows aggregate
/// mean and sample standard deviation over seeds. Cells run in parallel and
/// are fully determined by their own seed.
pub fn sweep(
    graph: &HeteroGraph,
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[usize],
    seeds: &[u64],
    ratio: f64,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::config("sweep needs at least one value and one seed".to_string()));
    }
    let labels = graph
        .labels()
        .ok_or_else(|| Error::data("graph has no labels".to_string()))?;

    let cells: Vec<(usize, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<Result<(f64, f64)>> = cells
        .par_iter()
        .map(|&(value, seed)| {
            let annotate = |e: Error| {
                Error::config(format!("sweep cell (axis={axis}, value={value}, seed={seed}): {e}"))
            };
            let mut cfg = *base;
            axis.apply(&mut cfg, value);
            cfg.seed = seed;
            cfg.validate().map_err(annotate)?;
            let split = make_split(labels, ratio, seed).map_err(annotate)?;
            let out = fit(graph, &cfg, &split).map_err(annotate)?;
            let report = evaluate_model(graph, &out.model, &split.test).map_err(annotate)?;
            Ok((report.micro_f1, report.macro_f1))
        })
        .collect();

    let mut rows = Vec::with_capacity(values.len());
    let mut it = results.into_iter();
    for &value in values {
        let mut micros = Vec::with_capacity(seeds.len());
        let mut macros = Vec::with_capacity(seeds.len());
        for _ in seeds {
            let (micro, macro_) = it.next().expect("cell count matches")?;
            micros.push(micro);
            macros.push(macro_);
        }
        let (mean_micro, std_micro) = mean_std(&micros);
        let (mean_macro, std_macro) = mean_std(&macros);
        rows.push(SweepRow {
            value,
            mean_micro,
            std_micro,
            mean_macro,
            std_macro,
            runs: seeds.len(),
        });
    }
    Ok(rows)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn sweep_to_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# sweep over {axis}; sample std over seeds\n"));
    out.push_str("value,mean_micro_f1,std_micro_f1,mean_macro_f1,std_macro_f1,runs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.value, r.mean_micro, r.std_micro, r.mean_macro, r.std_macro, r.runs
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, NetworkSchema, NodeTypeId};
    use crate::model::{init_params, DimensionPlan};
    use crate::numerics::DenseMatrix;
    use rand::Rng;

    fn labels_from(values: Vec<Option<usize>>, classes: usize) -> Labels {
        Labels {
            node_type: NodeTypeId(0),
            num_classes: classes,
            values,
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let labels = labels_from(vec![Some(0), Some(1), Some(2), Some(1)], 3);
        let preds = vec![0, 1, 2, 1];
        let mask = vec![0, 1, 2, 3];
        let r = f1_scores(&preds, &labels, &mask).unwrap();
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn degenerate_binary_case() {
        // All predictions class 0, gold half 0 half 1:
        // micro = 0.5; macro = (2/3 + 0)/2 = 1/3.
        let labels = labels_from(vec![Some(0), Some(0), Some(1), Some(1)], 2);
        let preds = vec![0, 0, 0, 0];
        let mask = vec![0, 1, 2, 3];
        let r = f1_scores(&preds, &labels, &mask).unwrap();
        assert!((r.micro_f1 - 0.5).abs() < 1e-15);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[0].support, 2);
        assert_eq!(r.confusion[1][0], 2);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = rng_from(31);
        let classes = 4;
        let n = 100;
        let labels = labels_from(
            (0..n).map(|_| Some(rng.gen_range(0..classes))).collect(),
            classes,
        );
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let mask: Vec<usize> = (0..n).collect();
        let r = f1_scores(&preds, &labels, &mask).unwrap();

        // Independent counting oracle, straight from the definitions.
        let gold: Vec<usize> = labels.values.iter().map(|v| v.unwrap()).collect();
        let accuracy =
            mask.iter().filter(|&&i| preds[i] == gold[i]).count() as f64 / mask.len() as f64;
        assert_eq!(r.micro_f1, accuracy);
        let mut macro_sum = 0.0;
        for c in 0..classes {
            let tp = mask.iter().filter(|&&i| preds[i] == c && gold[i] == c).count() as f64;
            let fp = mask.iter().filter(|&&i| preds[i] == c && gold[i] != c).count() as f64;
            let fn_ = mask.iter().filter(|&&i| preds[i] != c && gold[i] == c).count() as f64;
            let f1 = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
            macro_sum += f1;
        }
        assert!((r.macro_f1 - macro_sum / classes as f64).abs() < 1e-15);
        // Confusion row sums are the per-class supports.
        for c in 0..classes {
            let support = gold.iter().filter(|&&g| g == c).count();
            assert_eq!(r.confusion[c].iter().sum::<usize>(), support);
        }
    }

    #[test]
    fn empty_mask_is_eval_error() {
        let labels = labels_from(vec![Some(0)], 2);
        assert!(matches!(
            f1_scores(&[0], &labels, &[]),
            Err(Error::Eval(_))
        ));
    }

    fn chain_with_labels(n: usize, dim: usize) -> HeteroGraph {
        let mut schema = NetworkSchema::new();
        let t = schema.add_node_type("node");
        schema.add_symmetric_relation("next", t);
        let feats = DenseMatrix::from_fn(n, dim, |i, j| ((i * dim + j) % 5) as f64 * 0.4 - 0.8);
        let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
        let labels = labels_from((0..n).map(|i| Some(i % 2)).collect(), 2);
        build_graph(schema, vec![feats], vec![edges], Some(labels)).unwrap()
    }

    fn untrained_pair(graph: &HeteroGraph, layers: usize, seed: u64) -> (TrainedModel, TrainedModel) {
        let aug_cfg = crate::augment::AugmentationConfig {
            n_virtual: 2,
            central_dim: 6,
            assignment: crate::augment::AssignmentMode::UniformRandom,
            seed,
        };
        let aug = augment(graph, &aug_cfg).unwrap();
        let aug_dims: Vec<usize> = aug
            .graph()
            .schema()
            .node_types()
            .map(|t| aug.graph().feature_dim(t))
            .collect();
        let vn = TrainedModel {
            params: init_params(
                aug.graph().schema(),
                DimensionPlan::uniform(&aug_dims, layers, 8, 4, NodeTypeId(0), 2),
                seed,
            )
            .unwrap(),
            augmentation: Some(aug_cfg),
        };
        let plain = TrainedModel {
            params: init_params(
                graph.schema(),
                DimensionPlan::uniform(&[graph.feature_dim(NodeTypeId(0))], layers, 8, 4, NodeTypeId(0), 2),
                seed,
            )
            .unwrap(),
            augmentation: None,
        };
        (vn, plain)
    }

    #[test]
    fn zero_variance_gives_exactly_zero_change() {
        let g = chain_with_labels(10, 3);
        let (vn, plain) = untrained_pair(&g, 2, 5);
        let (gv, gp) = perturbation_study(&g, &vn, &plain, 0, &[2, 3], &[0.0], 7).unwrap();
        for grid in [gv, gp] {
            for row in &grid.values {
                assert_eq!(row, &vec![Some(0.0)]);
            }
        }
    }

    #[test]
    fn receptive_field_dichotomy_on_chain() {
        let layers = 3;
        let g = chain_with_labels(12, 3);
        let (vn, plain) = untrained_pair(&g, layers, 2);
        let hops = [2usize, 5, 6, 7];
        let (gv, gp) = perturbation_study(&g, &vn, &plain, 0, &hops, &[1.0], 3).unwrap();
        // Beyond `layers` hops the plain model cannot see the perturbation.
        assert_eq!(gp.cell(5, 1.0), Some(0.0));
        assert_eq!(gp.cell(6, 1.0), Some(0.0));
        assert_eq!(gp.cell(7, 1.0), Some(0.0));
        assert!(gp.cell(2, 1.0).unwrap() > 0.0);
        // The augmented model remains sensitive at any hop.
        for &k in &hops {
            assert!(gv.cell(k, 1.0).unwrap() > 1e-8, "hop {k}");
        }
    }

    #[test]
    fn empty_hop_shell_is_missing_not_zero() {
        let g = chain_with_labels(5, 3);
        let (vn, plain) = untrained_pair(&g, 2, 8);
        // Hop 9 exceeds the chain length: no nodes there.
        let (gv, gp) = perturbation_study(&g, &vn, &plain, 0, &[9], &[1.0], 4).unwrap();
        assert_eq!(gv.cell(9, 1.0), None);
        assert_eq!(gp.cell(9, 1.0), None);
        assert!(gv.to_csv().contains("9,1,\n"));
    }

    #[test]
    fn perturbation_is_deterministic() {
        let g = chain_with_labels(9, 3);
        let (vn, plain) = untrained_pair(&g, 2, 1);
        let a = perturbation_study(&g, &vn, &plain, 1, &[2, 4], &[0.5, 1.0], 11).unwrap();
        let b = perturbation_study(&g, &vn, &plain, 1, &[2, 4], &[0.5, 1.0], 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_axis_parsing() {
        assert_eq!("layers".parse::<SweepAxis>().unwrap(), SweepAxis::Layers);
        let err = "depth".parse::<SweepAxis>().unwrap_err();
        match err {
            Error::Config(msg) => {
                assert!(msg.contains("hidden_dim") && msg.contains("n_virtual"), "{msg}")
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn mean_std_sample_convention() {
        let (m, s) = mean_std(&[0.5]);
        assert_eq!((m, s), (0.5, 0.0));
        let (m, s) = mean_std(&[0.4, 0.6]);
        assert!((m - 0.5).abs() < 1e-15);
        // Sample std over two runs: sqrt(((0.1)^2 + (0.1)^2) / 1).
        assert!((s - (0.02f64).sqrt()).abs() < 1e-15);
    }
}
