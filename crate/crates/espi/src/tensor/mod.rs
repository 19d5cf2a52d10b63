//! Reverse-mode differentiable tensor core.
//!
//! A small tape-based engine with exactly the primitives the encoders need:
//! embedding lookup, affine layers, layer norm, LSTM/GRU cells, max-pooling
//! and a numerically stable binary cross entropy. Everything is f64.

mod adam;
mod gradcheck;
mod rnn;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, GradCheckError, GradCheckReport};
pub use rnn::{bilstm_sequence, gru_cell, GruVars, LstmVars};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("embedding index {index} out of vocabulary (size {vocab})")]
    IndexOutOfVocab { index: usize, vocab: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("max-pool over an empty list")]
    EmptyPool,
}

/// Dense row-major f64 array. Gradients are stored alongside the data so a
/// parameter can accumulate over several backward passes before an optimizer
/// step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    #[serde(default)]
    pub requires_grad: bool,
    #[serde(skip)]
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data, requires_grad: false, grad: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let mut t = Tensor::new(shape, data);
        t.requires_grad = true;
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.data.len());
        let grad = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

/// Named parameter collection. BTreeMap keeps iteration order deterministic,
/// which the optimizer and checkpoint format rely on.
pub type ParamSet = BTreeMap<String, Tensor>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
}

impl Var {
    /// Position in the tape's gradient arena.
    pub fn index(&self) -> usize {
        self.id
    }
}

type BackFn = Box<dyn Fn(&[Vec<f64>], &[f64], &mut [Vec<f64>])>;

/// Records forward operations so gradients can be replayed in reverse
/// execution order. One tape per loss evaluation.
#[derive(Default)]
pub struct Tape {
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    // (output id, backward closure); closures capture only ids and scalars,
    // values are read from the arena during backward.
    records: Vec<(usize, BackFn)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.values[v.id]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.shapes[v.id]
    }

    fn alloc(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let id = self.values.len();
        self.shapes.push(shape);
        self.values.push(data);
        Var { id }
    }

    fn record(&mut self, out: Var, back: BackFn) {
        self.records.push((out.id, back));
    }

    /// Load a tensor onto the tape as a leaf.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.alloc(t.shape.clone(), t.data.clone())
    }

    pub fn leaf_data(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Var {
        self.alloc(shape, data)
    }

    pub fn zeros_leaf(&mut self, n: usize) -> Var {
        self.alloc(vec![n], vec![0.0; n])
    }

    /// Row lookup into a `v x d` table.
    pub fn embed_lookup(&mut self, table: Var, index: usize) -> Result<Var, TensorError> {
        let shape = &self.shapes[table.id];
        if shape.len() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "embedding table must be 2-d, got {shape:?}"
            )));
        }
        let (v, d) = (shape[0], shape[1]);
        if index >= v {
            return Err(TensorError::IndexOutOfVocab { index, vocab: v });
        }
        let row = self.values[table.id][index * d..(index + 1) * d].to_vec();
        let out = self.alloc(vec![d], row);
        let tid = table.id;
        self.record(
            out,
            Box::new(move |_vals, g, grads| {
                for (j, gj) in g.iter().enumerate() {
                    grads[tid][index * d + j] += gj;
                }
            }),
        );
        Ok(out)
    }

    /// Matrix-vector product: `w` is `n x m`, `x` is `m`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, TensorError> {
        let ws = self.shapes[w.id].clone();
        let xs = self.shapes[x.id].clone();
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(TensorError::ShapeMismatch(format!(
                "matvec: w {ws:?} vs x {xs:?}"
            )));
        }
        let (n, m) = (ws[0], ws[1]);
        let mut out = vec![0.0; n];
        {
            let wv = &self.values[w.id];
            let xv = &self.values[x.id];
            for i in 0..n {
                let row = &wv[i * m..(i + 1) * m];
                let mut acc = 0.0;
                for j in 0..m {
                    acc += row[j] * xv[j];
                }
                out[i] = acc;
            }
        }
        let out = self.alloc(vec![n], out);
        let (wid, xid) = (w.id, x.id);
        self.record(
            out,
            Box::new(move |vals, g, grads| {
                let wv = &vals[wid];
                let xv = &vals[xid];
                for i in 0..n {
                    let gi = g[i];
                    if gi == 0.0 {
                        continue;
                    }
                    for j in 0..m {
                        grads[wid][i * m + j] += gi * xv[j];
                        grads[xid][j] += gi * wv[i * m + j];
                    }
                }
            }),
        );
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check_same_shape(a, b, "add")?;
        let out: Vec<f64> = self.values[a.id]
            .iter()
            .zip(&self.values[b.id])
            .map(|(x, y)| x + y)
            .collect();
        let out = self.alloc(self.shapes[a.id].clone(), out);
        let (aid, bid) = (a.id, b.id);
        self.record(
            out,
            Box::new(move |_vals, g, grads| {
                for (j, gj) in g.iter().enumerate() {
                    grads[aid][j] += gj;
                    grads[bid][j] += gj;
                }
            }),
        );
        Ok(out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check_same_shape(a, b, "mul")?;
        let out: Vec<f64> = self.values[a.id]
            .iter()
            .zip(&self.values[b.id])
            .map(|(x, y)| x * y)
            .collect();
        let out = self.alloc(self.shapes[a.id].clone(), out);
        let (aid, bid) = (a.id, b.id);
        self.record(
            out,
            Box::new(move |vals, g, grads| {
                for (j, gj) in g.iter().enumerate() {
                    grads[aid][j] += gj * vals[bid][j];
                    grads[bid][j] += gj * vals[aid][j];
                }
            }),
        );
        Ok(out)
    }

    /// Elementwise `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out: Vec<f64> = self.values[a.id].iter().map(|x| 1.0 - x).collect();
        let out = self.alloc(self.shapes[a.id].clone(), out);
        let aid = a.id;
        self.record(
            out,
            Box::new(move |_vals, g, grads| {
                for (j, gj) in g.iter().enumerate() {
                    grads[aid][j] -= gj;
                }
            }),
        );
        out
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out: Vec<f64> = self.values[a.id].iter().map(|x| sigmoid(*x)).collect();
        let out = self.alloc(self.shapes[a.id].clone(), out);
        let (aid, oid) = (a.id, out.id);
        self.record(
            out,
            Box::new(move |vals, g, grads| {
                for (j, gj) in g.iter().enumerate() {
                    let s = vals[oid][j];
                    grads[aid][j] += gj * s * (1.0 - s);
                }
            }),
        );
        out
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out: Vec<f64> = self.values[a.id].iter().map(|x| x.tanh()).collect();
        let out = self.alloc(self.shapes[a.id].clone(), out);
        let (aid, oid) = (a.id, out.id);
        self.record(
            out,
            Box::new(move |vals, g, grads| {
                for (j, gj) in g.iter().enumerate() {
                    let t = vals[oid][j];
                    grads[aid][j] += gj * (1.0 - t * t);
                }
            }),
        );
        out
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        let mut segments = Vec::with_capacity(parts.len());
        for p in parts {
            let v = &self.values[p.id];
            segments.push((p.id, data.len(), v.len()));
            data.extend_from_slice(v);
        }
        let n = data.len();
        let out = self.alloc(vec![n], data);
        self.record(
            out,
            Box::new(move |_vals, g, grads| {
                for &(pid, off, len) in &segments {
                    for j in 0..len {
                        grads[pid][j] += g[off + j];
                    }
                }
            }),
        );
        out
    }

    /// Sum of equally shaped vectors.
    pub fn sum_rows(&mut self, rows: &[Var]) -> Result<Var, TensorError> {
        if rows.is_empty() {
            return Err(TensorError::EmptyPool);
        }
        let shape = self.shapes[rows[0].id].clone();
        let mut data = vec![0.0; self.values[rows[0].id].len()];
        for r in rows {
            self.check_same_shape(rows[0], *r, "sum_rows")?;
            for (a, b) in data.iter_mut().zip(&self.values[r.id]) {
                *a += b;
            }
        }
        let out = self.alloc(shape, data);
        let ids: Vec<usize> = rows.iter().map(|r| r.id).collect();
        self.record(
            out,
            Box::new(move |_vals, g, grads| {
                for &rid in &ids {
                    for (j, gj) in g.iter().enumerate() {
                        grads[rid][j] += gj;
                    }
                }
            }),
        );
        Ok(out)
    }

    /// Elementwise max over rows. Ties route the gradient to the lowest row
    /// index. Also returns the argmax row per coordinate.
    pub fn maxpool_rows(&mut self, rows: &[Var]) -> Result<(Var, Vec<usize>), TensorError> {
        if rows.is_empty() {
            return Err(TensorError::EmptyPool);
        }
        let d = self.values[rows[0].id].len();
        let mut data = self.values[rows[0].id].clone();
        let mut argmax = vec![0usize; d];
        for (ri, r) in rows.iter().enumerate().skip(1) {
            self.check_same_shape(rows[0], *r, "maxpool_rows")?;
            for j in 0..d {
                let v = self.values[r.id][j];
                if v > data[j] {
                    data[j] = v;
                    argmax[j] = ri;
                }
            }
        }
        let shape = self.shapes[rows[0].id].clone();
        let out = self.alloc(shape, data);
        let ids: Vec<usize> = rows.iter().map(|r| r.id).collect();
        let arg = argmax.clone();
        self.record(
            out,
            Box::new(move |_vals, g, grads| {
                for (j, gj) in g.iter().enumerate() {
                    grads[ids[arg[j]]][j] += gj;
                }
            }),
        );
        Ok((out, argmax))
    }

    /// `W x + b`.
    pub fn fc(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    /// Layer normalization with population variance.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, TensorError> {
        self.check_same_shape(x, gamma, "layer_norm")?;
        self.check_same_shape(x, beta, "layer_norm")?;
        let d = self.values[x.id].len();
        let xv = &self.values[x.id];
        let mean = xv.iter().sum::<f64>() / d as f64;
        let var = xv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let std = (var + eps).sqrt();
        let xhat: Vec<f64> = xv.iter().map(|v| (v - mean) / std).collect();
        let out: Vec<f64> = xhat
            .iter()
            .zip(self.values[gamma.id].iter().zip(&self.values[beta.id]))
            .map(|(xh, (g, b))| xh * g + b)
            .collect();
        let out = self.alloc(self.shapes[x.id].clone(), out);
        let (xid, gid, bid) = (x.id, gamma.id, beta.id);
        self.record(
            out,
            Box::new(move |vals, g, grads| {
                let xv = &vals[xid];
                let mean = xv.iter().sum::<f64>() / d as f64;
                let var = xv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let std = (var + eps).sqrt();
                let xhat: Vec<f64> = xv.iter().map(|v| (v - mean) / std).collect();
                // dL/dxhat_j = g_j * gamma_j
                let gx: Vec<f64> = g
                    .iter()
                    .zip(&vals[gid])
                    .map(|(gj, gam)| gj * gam)
                    .collect();
                let mean_gx = gx.iter().sum::<f64>() / d as f64;
                let mean_gx_xhat =
                    gx.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                for j in 0..d {
                    grads[bid][j] += g[j];
                    grads[gid][j] += g[j] * xhat[j];
                    grads[xid][j] += (gx[j] - mean_gx - xhat[j] * mean_gx_xhat) / std;
                }
            }),
        );
        Ok(out)
    }

    /// Scalar sum of all elements.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.values[a.id].iter().sum();
        let out = self.alloc(vec![1], vec![s]);
        let aid = a.id;
        let n = self.values[aid].len();
        self.record(
            out,
            Box::new(move |_vals, g, grads| {
                for j in 0..n {
                    grads[aid][j] += g[0];
                }
            }),
        );
        out
    }

    /// Binary cross entropy on a raw logit, in log-sum-exp form:
    /// `max(z,0) - z*y + ln(1 + exp(-|z|))`.
    pub fn bce_with_logits(&mut self, logit: Var, label: f64) -> Var {
        let z = self.values[logit.id][0];
        let loss = z.max(0.0) - z * label + (-z.abs()).exp().ln_1p();
        let out = self.alloc(vec![1], vec![loss]);
        let lid = logit.id;
        self.record(
            out,
            Box::new(move |vals, g, grads| {
                let z = vals[lid][0];
                grads[lid][0] += g[0] * (sigmoid(z) - label);
            }),
        );
        out
    }

    /// Backpropagate from a scalar root; returns the gradient arena indexed
    /// by var id. Traversal is strictly reverse execution order.
    pub fn backward(&mut self, root: Var) -> Vec<Vec<f64>> {
        assert_eq!(self.values[root.id].len(), 1, "backward root must be scalar");
        let mut grads: Vec<Vec<f64>> = self.values.iter().map(|v| vec![0.0; v.len()]).collect();
        grads[root.id][0] = 1.0;
        for (out, back) in self.records.iter().rev() {
            let gout = grads[*out].clone();
            if gout.iter().all(|g| *g == 0.0) {
                continue;
            }
            back(&self.values, &gout, &mut grads);
        }
        grads
    }

    fn check_same_shape(&self, a: Var, b: Var, op: &str) -> Result<(), TensorError> {
        if self.shapes[a.id] != self.shapes[b.id] {
            return Err(TensorError::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shapes[a.id], self.shapes[b.id]
            )));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
