//! Full-graph training: seeded splits, cross-entropy with L2, Adam, and a
//! best-validation-epoch selection rule.
//!
//! The graph is augmented once per fit (the virtual-node assignment is fixed
//! for the run); only the drop-edge mask is resampled every epoch. All
//! randomness derives from the config seed, so a fit is a deterministic
//! function of (graph, config, split).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AssignmentMode, AugmentationConfig, AugmentedGraph};
use crate::checkpoint::TrainedModel;
use crate::error::{Error, Result};
use crate::eval::f1_scores;
use crate::graph::{HeteroGraph, Labels};
use crate::model::{
    argmax_rows, init_params, predict, predict_graph, tape_forward, tape_forward_augmented,
    DimensionPlan, ForwardOptions, ModelParams, TapeForward,
};
use crate::numerics::DenseMatrix;
use crate::seed::{derive_seed, domain, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    /// Feature dropout rate; searched in [0, 0.5].
    pub dropout: f64,
    /// Virtual-edge drop rate; searched in [0, 0.5].
    pub drop_edge: f64,
    pub layers: usize,
    pub hidden_dim: usize,
    pub d_a: usize,
    pub n_virtual: usize,
    pub central_dim: usize,
    pub assignment: AssignmentMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            l2: 1e-4,
            epochs: 1000,
            dropout: 0.0,
            drop_edge: 0.0,
            layers: 4,
            hidden_dim: 64,
            d_a: 64,
            n_virtual: 16,
            central_dim: 64,
            assignment: AssignmentMode::UniformRandom,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be non-negative".to_string()));
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(Error::config("l2 must be non-negative".to_string()));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1".to_string()));
        }
        for (name, rate) in [("dropout", self.dropout), ("drop_edge", self.drop_edge)] {
            if !(0.0..=0.5).contains(&rate) {
                return Err(Error::config(format!(
                    "{name} must lie in [0, 0.5], got {rate}"
                )));
            }
        }
        if self.layers == 0 {
            return Err(Error::config("layers must be at least 1".to_string()));
        }
        if self.hidden_dim == 0 || self.d_a == 0 {
            return Err(Error::config("hidden_dim and d_a must be positive".to_string()));
        }
        if self.n_virtual == 0 || self.central_dim == 0 {
            return Err(Error::config(
                "n_virtual and central_dim must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn augmentation(&self) -> AugmentationConfig {
        AugmentationConfig {
            n_virtual: self.n_virtual,
            central_dim: self.central_dim,
            assignment: self.assignment,
            seed: derive_seed(self.seed, &[domain::ASSIGNMENT]),
        }
    }
}

/// Disjoint train/val/test index sets over the target type's labeled nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub ratio: f64,
}

/// Seeded uniform shuffle of the labeled nodes: the first `ceil(ratio * n)`
/// go to training, the remainder is halved into validation and test (the
/// two differ by at most one element).
pub fn make_split(labels: &Labels, ratio: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&ratio) || ratio == 0.0 {
        return Err(Error::config(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut nodes = labels.labeled_nodes();
    if nodes.is_empty() {
        return Err(Error::data("no labeled nodes to split".to_string()));
    }
    let mut rng = rng_from(derive_seed(seed, &[domain::SPLIT]));
    nodes.shuffle(&mut rng);

    let n = nodes.len();
    let t = ratio * n as f64;
    // Guard against float noise turning an exact multiple into the next ceil.
    let n_train = if (t - t.round()).abs() < 1e-9 {
        t.round() as usize
    } else {
        t.ceil() as usize
    };
    let n_train = n_train.clamp(1, n);
    let rest = n - n_train;
    let n_val = rest.div_ceil(2);
    Ok(Split {
        train: nodes[..n_train].to_vec(),
        val: nodes[n_train..n_train + n_val].to_vec(),
        test: nodes[n_train + n_val..].to_vec(),
        ratio,
    })
}

/// Per-tensor first/second moment accumulators with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let shapes: Vec<DenseMatrix> = params
            .flat()
            .iter()
            .map(|t| DenseMatrix::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            m: shapes.clone(),
            v: shapes,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[DenseMatrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let n = params.flat().len();
    if grads.len() != n || state.m.len() != n {
        return Err(Error::shape(format!(
            "adam_step: {} gradients for {} tensors",
            grads.len(),
            n
        )));
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        let name = params.tensor_names().swap_remove(bad);
        return Err(Error::numeric(format!(
            "non-finite gradient for tensor '{name}'"
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((theta, g), (m, v)) in params
        .flat_mut()
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if theta.shape() != g.shape() {
            return Err(Error::shape("adam_step: gradient shape mismatch".to_string()));
        }
        for (((tv, &gv), mv), vv) in theta
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mv = state.beta1 * *mv + (1.0 - state.beta1) * gv;
            *vv = state.beta2 * *vv + (1.0 - state.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *tv -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
}

pub fn metrics_to_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_micro_f1,val_macro_f1\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{}\n",
            m.epoch, m.train_loss, m.val_micro_f1, m.val_macro_f1
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters of the epoch with the best validation Micro-F1
    /// (ties resolve to the earliest epoch).
    pub model: TrainedModel,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

/// Training loss and per-tensor gradients (canonical order) for one
/// training-mode forward over the augmented graph:
/// cross-entropy over `mask` plus `l2 * sum of squared parameters`.
pub fn loss_and_grads(
    aug: &AugmentedGraph,
    params: &ModelParams,
    opts: &ForwardOptions,
    mask: &[usize],
    l2: f64,
) -> Result<(f64, Vec<DenseMatrix>)> {
    let labels = required_labels(aug.graph())?;
    let tf = tape_forward_augmented(aug, params, opts)?;
    finish_loss(tf, params, &labels, mask, l2)
}

/// Same as [`loss_and_grads`] for a plain, non-augmented graph.
pub fn loss_and_grads_graph(
    graph: &HeteroGraph,
    params: &ModelParams,
    opts: &ForwardOptions,
    mask: &[usize],
    l2: f64,
) -> Result<(f64, Vec<DenseMatrix>)> {
    let labels = required_labels(graph)?;
    let tf = tape_forward(graph, params, opts)?;
    finish_loss(tf, params, &labels, mask, l2)
}

fn required_labels(graph: &HeteroGraph) -> Result<Labels> {
    graph
        .labels()
        .cloned()
        .ok_or_else(|| Error::data("graph has no labels on a target type".to_string()))
}

fn finish_loss(
    tf: TapeForward,
    params: &ModelParams,
    labels: &Labels,
    mask: &[usize],
    l2: f64,
) -> Result<(f64, Vec<DenseMatrix>)> {
    let mut tape = tf.tape;
    let logits = tf.outputs[params.head_type().0];
    let loss_id = tape.softmax_cross_entropy(logits, &labels.values, mask)?;
    let mut grad_store = tape.backward(loss_id)?;
    let mut loss = tape.value(loss_id).get(0, 0);

    let flat = params.flat();
    let mut grads = Vec::with_capacity(flat.len());
    for (i, theta) in flat.iter().enumerate() {
        let mut g = grad_store
            .take(tf.param_ids[i])
            .unwrap_or_else(|| DenseMatrix::zeros(theta.rows(), theta.cols()));
        if l2 != 0.0 {
            for (gv, &tv) in g.data_mut().iter_mut().zip(theta.data()) {
                *gv += 2.0 * l2 * tv;
            }
        }
        grads.push(g);
    }
    if l2 != 0.0 {
        let sq: f64 = flat
            .iter()
            .map(|m| m.data().iter().map(|v| v * v).sum::<f64>())
            .sum();
        loss += l2 * sq;
    }
    Ok((loss, grads))
}

/// Trains on the virtual-node-augmented graph.
pub fn fit(graph: &HeteroGraph, cfg: &TrainConfig, split: &Split) -> Result<FitResult> {
    fit_inner(graph, cfg, split, true)
}

/// Trains the same architecture on the plain schema, without virtual nodes.
/// Drop-edge is a no-op here since it only ever applies to virtual edges.
pub fn fit_plain(graph: &HeteroGraph, cfg: &TrainConfig, split: &Split) -> Result<FitResult> {
    fit_inner(graph, cfg, split, false)
}

fn fit_inner(
    graph: &HeteroGraph,
    cfg: &TrainConfig,
    split: &Split,
    augmented: bool,
) -> Result<FitResult> {
    cfg.validate()?;
    let labels = required_labels(graph)?;
    if split.train.is_empty() {
        return Err(Error::config("empty training set".to_string()));
    }
    if split.val.is_empty() {
        return Err(Error::config(
            "empty validation set; best-epoch selection needs one".to_string(),
        ));
    }

    let aug = if augmented {
        Some(augment(graph, &cfg.augmentation())?)
    } else {
        None
    };
    let model_graph = aug.as_ref().map(|a| a.graph()).unwrap_or(graph);
    let dims: Vec<usize> = model_graph
        .schema()
        .node_types()
        .map(|t| model_graph.feature_dim(t))
        .collect();
    let plan = DimensionPlan::uniform(
        &dims,
        cfg.layers,
        cfg.hidden_dim,
        cfg.d_a,
        labels.node_type,
        labels.num_classes,
    );
    let mut params = init_params(model_graph.schema(), plan, cfg.seed)?;
    let mut adam = AdamState::new(&params);

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for epoch in 1..=cfg.epochs {
        let opts = ForwardOptions::training(
            cfg.dropout,
            cfg.drop_edge,
            derive_seed(cfg.seed, &[domain::EPOCH, epoch as u64]),
        );
        let (loss, grads) = match &aug {
            Some(a) => loss_and_grads(a, &params, &opts, &split.train, cfg.l2)?,
            None => loss_and_grads_graph(graph, &params, &opts, &split.train, cfg.l2)?,
        };
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite loss at epoch {epoch}")));
        }
        adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;

        let probs = match &aug {
            Some(a) => predict(a, &params)?,
            None => predict_graph(graph, &params)?,
        };
        let report = f1_scores(&argmax_rows(&probs), &labels, &split.val)?;
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss,
            val_micro_f1: report.micro_f1,
            val_macro_f1: report.macro_f1,
        });
        if best.as_ref().map_or(true, |(b, _, _)| report.micro_f1 > *b) {
            best = Some((report.micro_f1, epoch, params.clone()));
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(FitResult {
        model: TrainedModel {
            params: best_params,
            augmentation: aug.map(|a| *a.config()),
        },
        metrics,
        best_epoch,
    })
}
