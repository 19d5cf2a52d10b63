//! The three neural components: BiLSTM path encoding with max-pooling over
//! the sampled path set, gated-graph propagation over the message graph, and
//! the ensembled sigmoid classifier.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::PathSet;
use crate::msg::MessageGraph;
use crate::tensor::{
    bilstm_sequence, gru_cell, GruVars, LstmVars, ParamSet, Tape, Tensor, TensorError, Var,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub d_model: usize,
    pub hidden: usize,
    pub k: usize,
    pub r: f64,
    pub hops: usize,
    pub max_path_len: usize,
    pub lr: f64,
    pub patience: usize,
    pub batch: usize,
    pub seed: u64,
    pub max_epochs: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            d_model: 128,
            hidden: 128,
            k: 500,
            r: 1.0,
            hops: 4,
            max_path_len: 16,
            lr: 0.001,
            patience: 10,
            batch: 32,
            seed: 0,
            max_epochs: 200,
        }
    }
}

impl HyperParams {
    /// Scaled-down settings for tests and smoke experiments.
    pub fn small(seed: u64) -> Self {
        HyperParams {
            d_model: 16,
            hidden: 16,
            k: 30,
            hops: 2,
            max_path_len: 12,
            lr: 0.01,
            patience: 5,
            batch: 8,
            seed,
            max_epochs: 50,
            ..HyperParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.hidden == 0 || self.k == 0 || self.max_path_len == 0 {
            return Err("dimensions and k must be positive".into());
        }
        if self.r <= 0.0 || self.lr <= 0.0 {
            return Err("ratio and learning rate must be positive".into());
        }
        if self.patience == 0 || self.batch == 0 || self.max_epochs == 0 {
            return Err("patience, batch, and max_epochs must be positive".into());
        }
        Ok(())
    }
}

pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Token-to-index map with reserved pad (0) and unknown (1) entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut index = BTreeMap::new();
        for t in tokens {
            let next = index.len() + 2;
            index.entry(t.to_string()).or_insert(next);
        }
        Vocab { index }
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn len(&self) -> usize {
        self.index.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Split an identifier into lowercase subtokens at underscores, case
/// transitions, and letter/digit boundaries. Values with no alphanumeric
/// content (operator tokens) pass through whole.
pub fn split_subtokens(value: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = value.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            if !current.is_empty() {
                parts.push(std::mem::take(&mut current));
            }
            continue;
        }
        if !current.is_empty() {
            let prev = chars[i - 1];
            let case_boundary = c.is_uppercase()
                && (prev.is_lowercase()
                    || (prev.is_uppercase()
                        && chars.get(i + 1).map(|n| n.is_lowercase()).unwrap_or(false)));
            let digit_boundary = c.is_ascii_digit() != prev.is_ascii_digit()
                && prev.is_alphanumeric();
            if case_boundary || digit_boundary {
                parts.push(std::mem::take(&mut current));
            }
        }
        current.push(c.to_ascii_lowercase());
    }
    if !current.is_empty() {
        parts.push(current);
    }
    if parts.is_empty() {
        parts.push(value.to_string());
    }
    parts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub node_types: Vocab,
    pub subtokens: Vocab,
    pub msg_tokens: Vocab,
}

/// Per-commit encoder input: the sampled path set plus the message graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommitFeatures {
    pub paths: PathSet,
    pub graph: MessageGraph,
}

/// Collect the three vocabularies from training features.
pub fn build_vocabularies<'a>(features: impl IntoIterator<Item = &'a CommitFeatures>) -> Vocabularies {
    let mut node_types = Vec::new();
    let mut subtokens = Vec::new();
    let mut msg_tokens = Vec::new();
    for f in features {
        for p in &f.paths.paths {
            for t in &p.node_types {
                node_types.push(t.clone());
            }
            for v in [&p.start_value, &p.end_value] {
                subtokens.extend(split_subtokens(v));
            }
        }
        msg_tokens.extend(f.graph.tokens.iter().cloned());
    }
    Vocabularies {
        node_types: Vocab::build(node_types.iter().map(|s| s.as_str())),
        subtokens: Vocab::build(subtokens.iter().map(|s| s.as_str())),
        msg_tokens: Vocab::build(msg_tokens.iter().map(|s| s.as_str())),
    }
}

const LSTM_GATES: [&str; 4] = ["i", "f", "g", "o"];
const GRU_GATES: [&str; 3] = ["z", "r", "h"];

/// Xavier-uniform matrices, zero biases, small-uniform embeddings.
pub fn init_params(hp: &HyperParams, vocabs: &Vocabularies, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let d = hp.d_model;
    let h = hp.hidden;

    let embedding = |params: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, v: usize| {
        let data: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-0.05..0.05)).collect();
        params.insert(name.to_string(), Tensor::param(vec![v, d], data));
    };
    embedding(&mut params, &mut rng, "emb_node_type", vocabs.node_types.len());
    embedding(&mut params, &mut rng, "emb_subtoken", vocabs.subtokens.len());
    embedding(&mut params, &mut rng, "emb_msg", vocabs.msg_tokens.len());

    let matrix = |params: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize| {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        params.insert(name.to_string(), Tensor::param(vec![rows, cols], data));
    };
    let bias = |params: &mut ParamSet, name: &str, n: usize| {
        let mut t = Tensor::zeros(vec![n]);
        t.requires_grad = true;
        params.insert(name.to_string(), t);
    };

    for dir in ["f", "b"] {
        for gate in LSTM_GATES {
            matrix(&mut params, &mut rng, &format!("path_lstm_{dir}_wx_{gate}"), h, d);
            matrix(&mut params, &mut rng, &format!("path_lstm_{dir}_wh_{gate}"), h, h);
            bias(&mut params, &format!("path_lstm_{dir}_b_{gate}"), h);
        }
    }
    matrix(&mut params, &mut rng, "path_fc_w", d, 2 * d + 2 * h);
    bias(&mut params, "path_fc_b", d);
    params.insert("path_ln_gamma".to_string(), Tensor::param(vec![d], vec![1.0; d]));
    bias(&mut params, "path_ln_beta", d);

    matrix(&mut params, &mut rng, "msg_init_w", h, d);
    bias(&mut params, "msg_init_b", h);
    for gate in GRU_GATES {
        matrix(&mut params, &mut rng, &format!("msg_gru_wx_{gate}"), h, h);
        matrix(&mut params, &mut rng, &format!("msg_gru_wh_{gate}"), h, h);
        bias(&mut params, &format!("msg_gru_b_{gate}"), h);
    }
    matrix(&mut params, &mut rng, "msg_fc_w", d, h);
    bias(&mut params, "msg_fc_b", d);

    matrix(&mut params, &mut rng, "ens_fc_w", 1, 2 * d);
    bias(&mut params, "ens_fc_b", 1);
    params
}

/// Parameters loaded onto a tape for one forward pass.
pub struct TapeParams {
    vars: BTreeMap<String, Var>,
}

impl TapeParams {
    pub fn load(tape: &mut Tape, params: &ParamSet) -> Self {
        let vars = params.iter().map(|(k, t)| (k.clone(), tape.leaf(t))).collect();
        TapeParams { vars }
    }

    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    fn lstm(&self, prefix: &str) -> LstmVars {
        LstmVars {
            wx_i: self.get(&format!("{prefix}_wx_i")),
            wh_i: self.get(&format!("{prefix}_wh_i")),
            b_i: self.get(&format!("{prefix}_b_i")),
            wx_f: self.get(&format!("{prefix}_wx_f")),
            wh_f: self.get(&format!("{prefix}_wh_f")),
            b_f: self.get(&format!("{prefix}_b_f")),
            wx_g: self.get(&format!("{prefix}_wx_g")),
            wh_g: self.get(&format!("{prefix}_wh_g")),
            b_g: self.get(&format!("{prefix}_b_g")),
            wx_o: self.get(&format!("{prefix}_wx_o")),
            wh_o: self.get(&format!("{prefix}_wh_o")),
            b_o: self.get(&format!("{prefix}_b_o")),
        }
    }

    fn gru(&self, prefix: &str) -> GruVars {
        GruVars {
            wx_z: self.get(&format!("{prefix}_wx_z")),
            wh_z: self.get(&format!("{prefix}_wh_z")),
            b_z: self.get(&format!("{prefix}_b_z")),
            wx_r: self.get(&format!("{prefix}_wx_r")),
            wh_r: self.get(&format!("{prefix}_wh_r")),
            b_r: self.get(&format!("{prefix}_b_r")),
            wx_h: self.get(&format!("{prefix}_wx_h")),
            wh_h: self.get(&format!("{prefix}_wh_h")),
            b_h: self.get(&format!("{prefix}_b_h")),
        }
    }

    /// Accumulate a backward pass's gradients into the parameter tensors.
    pub fn accumulate_into(&self, grads: &[Vec<f64>], params: &mut ParamSet) {
        for (name, var) in &self.vars {
            let t = params.get_mut(name).expect("parameter present");
            if t.requires_grad {
                t.accumulate_grad(&grads[var.index()]);
            }
        }
    }
}

/// Subtoken-sum terminal embedding.
pub fn embed_terminal(
    tape: &mut Tape,
    tp: &TapeParams,
    value: &str,
    vocabs: &Vocabularies,
) -> Result<Var, TensorError> {
    let table = tp.get("emb_subtoken");
    let rows: Vec<Var> = split_subtokens(value)
        .iter()
        .map(|s| tape.embed_lookup(table, vocabs.subtokens.lookup(s)))
        .collect::<Result<_, _>>()?;
    tape.sum_rows(&rows)
}

/// One path embedding: BiLSTM over the node-type sequence, endpoints by
/// subtoken sums, then fc + layer norm.
pub fn embed_path(
    tape: &mut Tape,
    tp: &TapeParams,
    path: &crate::ast::AstPath,
    vocabs: &Vocabularies,
    hp: &HyperParams,
) -> Result<Var, TensorError> {
    let type_table = tp.get("emb_node_type");
    let inputs: Vec<Var> = path
        .node_types
        .iter()
        .map(|t| tape.embed_lookup(type_table, vocabs.node_types.lookup(t)))
        .collect::<Result<_, _>>()?;
    let fwd = tp.lstm("path_lstm_f");
    let bwd = tp.lstm("path_lstm_b");
    let (fwd_states, bwd_states) = bilstm_sequence(tape, &inputs, &fwd, &bwd, hp.hidden)?;
    let r_path = tape.concat(&[*fwd_states.last().unwrap(), bwd_states[0]]);

    let r_start = embed_terminal(tape, tp, &path.start_value, vocabs)?;
    let r_end = embed_terminal(tape, tp, &path.end_value, vocabs)?;
    let joined = tape.concat(&[r_start, r_path, r_end]);
    let pre_norm = tape.fc(joined, tp.get("path_fc_w"), tp.get("path_fc_b"))?;
    tape.layer_norm(pre_norm, tp.get("path_ln_gamma"), tp.get("path_ln_beta"), 1e-5)
}

/// Max-pool over all path embeddings. Returns the pooled vector, the argmax
/// path index per coordinate (evidence), and a degraded flag for empty sets.
pub fn encode_code_change(
    tape: &mut Tape,
    tp: &TapeParams,
    paths: &PathSet,
    vocabs: &Vocabularies,
    hp: &HyperParams,
) -> Result<(Var, Vec<usize>, bool), TensorError> {
    if paths.paths.is_empty() {
        return Ok((tape.zeros_leaf(hp.d_model), Vec::new(), true));
    }
    let rows: Vec<Var> = paths
        .paths
        .iter()
        .map(|p| embed_path(tape, tp, p, vocabs, hp))
        .collect::<Result<_, _>>()?;
    let (v_c, evidence) = tape.maxpool_rows(&rows)?;
    Ok((v_c, evidence, false))
}

/// Symmetrized, 0/1-clipped neighbor sets of the message graph.
pub fn neighbor_sets(graph: &MessageGraph) -> Vec<BTreeSet<usize>> {
    let n = graph.tokens.len();
    let mut sets = vec![BTreeSet::new(); n];
    for (s, d, _) in &graph.edges {
        sets[*s].insert(*d);
        sets[*d].insert(*s);
    }
    sets
}

/// One aggregation round: each node receives the sum of its neighbors'
/// states over the symmetrized edge set; isolated nodes get zero.
pub fn ggnn_aggregate(
    tape: &mut Tape,
    graph: &MessageGraph,
    states: &[Var],
) -> Result<Vec<Var>, TensorError> {
    assert_eq!(states.len(), graph.tokens.len(), "one state per node");
    let hidden = tape.shape(states[0])[0];
    let mut out = Vec::with_capacity(states.len());
    for neigh in neighbor_sets(graph) {
        if neigh.is_empty() {
            out.push(tape.zeros_leaf(hidden));
        } else {
            let rows: Vec<Var> = neigh.iter().map(|j| states[*j]).collect();
            out.push(tape.sum_rows(&rows)?);
        }
    }
    Ok(out)
}

/// Message encoder: token embeddings projected to the hidden size, `hops`
/// rounds of aggregate-then-GRU with shared weights, then fc + max-pool.
pub fn encode_message(
    tape: &mut Tape,
    tp: &TapeParams,
    graph: &MessageGraph,
    vocabs: &Vocabularies,
    hp: &HyperParams,
) -> Result<Var, TensorError> {
    let emb = tp.get("emb_msg");
    let (init_w, init_b) = (tp.get("msg_init_w"), tp.get("msg_init_b"));
    let mut states: Vec<Var> = graph
        .tokens
        .iter()
        .map(|t| {
            let e = tape.embed_lookup(emb, vocabs.msg_tokens.lookup(t))?;
            tape.fc(e, init_w, init_b)
        })
        .collect::<Result<_, _>>()?;
    let gru = tp.gru("msg_gru");
    for _ in 0..hp.hops {
        let agg = ggnn_aggregate(tape, graph, &states)?;
        let mut next = Vec::with_capacity(states.len());
        for (h_prev, x) in states.iter().zip(agg) {
            next.push(gru_cell(tape, *h_prev, x, &gru)?);
        }
        states = next;
    }
    let (w, b) = (tp.get("msg_fc_w"), tp.get("msg_fc_b"));
    let rows: Vec<Var> = states
        .into_iter()
        .map(|s| tape.fc(s, w, b))
        .collect::<Result<_, _>>()?;
    let (v_m, _) = tape.maxpool_rows(&rows)?;
    Ok(v_m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prob: f64,
    pub verdict: u8,
    /// Argmax path index per pooled coordinate; empty when no paths.
    pub evidence: Vec<usize>,
    pub degraded: bool,
}

/// Raw classifier logit over the two encoder outputs.
pub fn ensemble_logit(
    tape: &mut Tape,
    tp: &TapeParams,
    v_m: Var,
    v_c: Var,
) -> Result<Var, TensorError> {
    let joined = tape.concat(&[v_m, v_c]);
    tape.fc(joined, tp.get("ens_fc_w"), tp.get("ens_fc_b"))
}

pub fn prediction_from_logit(logit: f64, evidence: Vec<usize>, degraded: bool) -> Prediction {
    let prob = crate::tensor::sigmoid(logit);
    Prediction { prob, verdict: u8::from(prob >= 0.5), evidence, degraded }
}

/// Full forward pass for one commit's features; returns the logit plus the
/// code-side evidence.
pub fn forward_commit(
    tape: &mut Tape,
    tp: &TapeParams,
    features: &CommitFeatures,
    vocabs: &Vocabularies,
    hp: &HyperParams,
) -> Result<(Var, Vec<usize>, bool), TensorError> {
    let (v_c, evidence, degraded) = encode_code_change(tape, tp, &features.paths, vocabs, hp)?;
    let v_m = encode_message(tape, tp, &features.graph, vocabs, hp)?;
    let logit = ensemble_logit(tape, tp, v_m, v_c)?;
    Ok((logit, evidence, degraded))
}

/// Convenience inference entry: one tape, no gradient use.
pub fn predict_features(
    params: &ParamSet,
    features: &CommitFeatures,
    vocabs: &Vocabularies,
    hp: &HyperParams,
) -> Result<Prediction, TensorError> {
    let mut tape = Tape::new();
    let tp = TapeParams::load(&mut tape, params);
    let (logit, evidence, degraded) = forward_commit(&mut tape, &tp, features, vocabs, hp)?;
    Ok(prediction_from_logit(tape.value(logit)[0], evidence, degraded))
}
