//! A minimal reverse-mode gradient tape over the fixed primitive set the
//! model needs: dense/sparse products, elementwise activations, per-row
//! scaling, grouped row softmax, dropout, and softmax cross-entropy.
//!
//! The computation graph is static and known up front, so there is no
//! general autodiff machinery: each primitive records its inputs, and
//! [`Tape::backward`] walks the node list once in reverse. Adjacency
//! matrices are non-trainable; gradients flow through `spmm` to the dense
//! operand only.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::RowNormalizedAdjacency;
use crate::numerics::DenseMatrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(usize);

enum Op {
    Leaf,
    Matmul(VarId, VarId),
    Spmm {
        adj: Arc<RowNormalizedAdjacency>,
        x: VarId,
    },
    Add(VarId, VarId),
    Tanh(VarId),
    Relu(VarId),
    RowScale {
        x: VarId,
        s: VarId,
    },
    /// Value is the n x k matrix of per-row probabilities over the group.
    GroupedSoftmax(Vec<VarId>),
    TakeColumn {
        src: VarId,
        col: usize,
    },
    Dropout {
        x: VarId,
        /// Entries are 0 or 1/keep; forward is an elementwise product.
        scaled_mask: Box<DenseMatrix>,
    },
    CrossEntropy {
        logits: VarId,
        /// (row, class) pairs for the masked nodes.
        targets: Vec<(usize, usize)>,
        /// Softmax rows for the masked nodes, in `targets` order.
        probs: Box<DenseMatrix>,
    },
}

pub struct Tape {
    values: Vec<DenseMatrix>,
    ops: Vec<Op>,
}

/// Gradients produced by one backward pass, indexed by [`VarId`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> Option<&DenseMatrix> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: VarId) -> Option<DenseMatrix> {
        self.grads[id.0].take()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
        }
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> VarId {
        self.values.push(value);
        self.ops.push(op);
        VarId(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: DenseMatrix) -> VarId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &DenseMatrix {
        &self.values[id.0]
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.values[a.0].matmul(&self.values[b.0])?;
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    pub fn spmm(&mut self, adj: Arc<RowNormalizedAdjacency>, x: VarId) -> Result<VarId> {
        let value = adj.spmm(&self.values[x.0])?;
        Ok(self.push(value, Op::Spmm { adj, x }))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.values[a.0].add(&self.values[b.0])?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn tanh(&mut self, x: VarId) -> VarId {
        let value = self.values[x.0].map(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let value = self.values[x.0].map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    /// Scales row `i` of `x` by the scalar `s[i]`; `s` must be a column.
    pub fn row_scale(&mut self, x: VarId, s: VarId) -> Result<VarId> {
        let xv = &self.values[x.0];
        let sv = &self.values[s.0];
        if sv.cols() != 1 || sv.rows() != xv.rows() {
            return Err(Error::shape(format!(
                "row_scale: scale column {}x{} vs matrix {}x{}",
                sv.rows(),
                sv.cols(),
                xv.rows(),
                xv.cols()
            )));
        }
        let mut value = xv.clone();
        for i in 0..value.rows() {
            let si = sv.get(i, 0);
            for v in value.row_mut(i) {
                *v *= si;
            }
        }
        Ok(self.push(value, Op::RowScale { x, s }))
    }

    /// Per-row softmax across a group of logit columns, with per-row max
    /// subtraction. Returns one probability column per input column; for
    /// every row the returned entries sum to one.
    pub fn grouped_row_softmax(&mut self, logits: &[VarId]) -> Result<Vec<VarId>> {
        if logits.is_empty() {
            return Err(Error::config("grouped_row_softmax: empty group".to_string()));
        }
        let n = self.values[logits[0].0].rows();
        for &l in logits {
            let v = &self.values[l.0];
            if v.cols() != 1 || v.rows() != n {
                return Err(Error::shape(format!(
                    "grouped_row_softmax: expected {n}x1 columns, got {}x{}",
                    v.rows(),
                    v.cols()
                )));
            }
        }
        let k = logits.len();
        let mut probs = DenseMatrix::zeros(n, k);
        for i in 0..n {
            let mut m = f64::NEG_INFINITY;
            for &l in logits {
                m = m.max(self.values[l.0].get(i, 0));
            }
            let mut denom = 0.0;
            for (j, &l) in logits.iter().enumerate() {
                let e = (self.values[l.0].get(i, 0) - m).exp();
                probs.set(i, j, e);
                denom += e;
            }
            for j in 0..k {
                probs.set(i, j, probs.get(i, j) / denom);
            }
        }
        let group = self.push(probs, Op::GroupedSoftmax(logits.to_vec()));
        let columns = (0..k)
            .map(|col| {
                let v = &self.values[group.0];
                let column = DenseMatrix::from_fn(n, 1, |i, _| v.get(i, col));
                self.push(column, Op::TakeColumn { src: group, col })
            })
            .collect();
        Ok(columns)
    }

    /// Inverted dropout. In inference mode (or at rate zero) this is the
    /// identity and consumes no randomness.
    pub fn dropout(
        &mut self,
        x: VarId,
        rate: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<VarId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let xv = &self.values[x.0];
        let mask = DenseMatrix::from_fn(xv.rows(), xv.cols(), |_, _| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let mut value = xv.clone();
        for (v, &m) in value.data_mut().iter_mut().zip(mask.data()) {
            *v *= m;
        }
        Ok(self.push(
            value,
            Op::Dropout {
                x,
                scaled_mask: Box::new(mask),
            },
        ))
    }

    /// Mean negative log-likelihood over the masked rows. `labels[i]` must
    /// be `Some(class)` for every masked row.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: VarId,
        labels: &[Option<usize>],
        mask: &[usize],
    ) -> Result<VarId> {
        if mask.is_empty() {
            return Err(Error::config("cross-entropy over an empty mask".to_string()));
        }
        let lv = &self.values[logits.0];
        let classes = lv.cols();
        let mut targets = Vec::with_capacity(mask.len());
        for &i in mask {
            if i >= lv.rows() {
                return Err(Error::shape(format!(
                    "mask row {i} out of range for {} logit rows",
                    lv.rows()
                )));
            }
            let class = labels
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| Error::config(format!("masked node {i} has no label")))?;
            if class >= classes {
                return Err(Error::shape(format!(
                    "label {class} out of range for {classes} classes"
                )));
            }
            targets.push((i, class));
        }

        let mut probs = DenseMatrix::zeros(targets.len(), classes);
        let mut loss = 0.0;
        for (t, &(row, class)) in targets.iter().enumerate() {
            let r = lv.row(row);
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + r.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - r[class];
            for (j, &v) in r.iter().enumerate() {
                probs.set(t, j, (v - lse).exp());
            }
        }
        loss /= targets.len() as f64;
        let value = DenseMatrix::from_vec(1, 1, vec![loss])?;
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets,
                probs: Box::new(probs),
            },
        ))
    }

    /// Reverse pass from a scalar root. Visits every recorded node exactly
    /// once in reverse topological (insertion) order.
    pub fn backward(&self, root: VarId) -> Result<Gradients> {
        if self.values[root.0].shape() != (1, 1) {
            return Err(Error::shape(format!(
                "backward root must be 1x1, got {:?}",
                self.values[root.0].shape()
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.values.len()];
        grads[root.0] = Some(DenseMatrix::ones(1, 1));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.ops[idx] {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let ga = g.matmul_nt(&self.values[b.0])?;
                    let gb = self.values[a.0].matmul_tn(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Spmm { adj, x } => {
                    accumulate(&mut grads, *x, adj.spmm_transpose(&g)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Tanh(x) => {
                    let y = &self.values[idx];
                    let mut gx = g.clone();
                    for (gv, &yv) in gx.data_mut().iter_mut().zip(y.data()) {
                        *gv *= 1.0 - yv * yv;
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let xv = &self.values[x.0];
                    let mut gx = g.clone();
                    for (gv, &v) in gx.data_mut().iter_mut().zip(xv.data()) {
                        if v <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::RowScale { x, s } => {
                    let xv = &self.values[x.0];
                    let sv = &self.values[s.0];
                    let mut gx = g.clone();
                    let mut gs = DenseMatrix::zeros(sv.rows(), 1);
                    for i in 0..xv.rows() {
                        let si = sv.get(i, 0);
                        let mut dot = 0.0;
                        for ((gv, &xval), &gval) in gx
                            .row_mut(i)
                            .iter_mut()
                            .zip(xv.row(i))
                            .zip(g.row(i))
                        {
                            dot += gval * xval;
                            *gv = gval * si;
                        }
                        gs.set(i, 0, dot);
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *s, gs);
                }
                Op::GroupedSoftmax(inputs) => {
                    let p = &self.values[idx];
                    let (n, k) = p.shape();
                    // dl_j = p_j * (g_j - sum_k p_k g_k), per row.
                    for (j, &input) in inputs.iter().enumerate() {
                        let mut gi = DenseMatrix::zeros(n, 1);
                        for i in 0..n {
                            let mut dot = 0.0;
                            for c in 0..k {
                                dot += p.get(i, c) * g.get(i, c);
                            }
                            gi.set(i, 0, p.get(i, j) * (g.get(i, j) - dot));
                        }
                        accumulate(&mut grads, input, gi);
                    }
                }
                Op::TakeColumn { src, col } => {
                    let (n, k) = self.values[src.0].shape();
                    let mut gs = DenseMatrix::zeros(n, k);
                    for i in 0..n {
                        gs.set(i, *col, g.get(i, 0));
                    }
                    accumulate(&mut grads, *src, gs);
                }
                Op::Dropout { x, scaled_mask } => {
                    let mut gx = g.clone();
                    for (gv, &m) in gx.data_mut().iter_mut().zip(scaled_mask.data()) {
                        *gv *= m;
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let upstream = g.get(0, 0);
                    let lv = &self.values[logits.0];
                    let scale = upstream / targets.len() as f64;
                    let mut gl = DenseMatrix::zeros(lv.rows(), lv.cols());
                    for (t, &(row, class)) in targets.iter().enumerate() {
                        for j in 0..lv.cols() {
                            let indicator = if j == class { 1.0 } else { 0.0 };
                            gl.set(row, j, gl.get(row, j) + scale * (probs.get(t, j) - indicator));
                        }
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], id: VarId, delta: DenseMatrix) {
    match &mut grads[id.0] {
        Some(g) => g.add_assign(&delta),
        slot => *slot = Some(delta),
    }
}

/// Plain row softmax of a dense matrix, outside the tape. Used for turning
/// logits into class probabilities at inference time.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            denom += *v;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    out
}
