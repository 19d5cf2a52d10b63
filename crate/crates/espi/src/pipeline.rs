//! Commit-to-features plumbing: function resolution with a changed-lines
//! fallback, candidate path enumeration and sampling, message graphing, a
//! disk feature cache, and the timed end-to-end prediction path.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ast::{
    changed_terminals, enumerate_candidate_paths, parse_ast, sample_paths, AstPath, Dialect,
};
use crate::checkpoint::ModelCheckpoint;
use crate::diff::{resolve_function_pair, split_changes, Commit, FunctionSide};
use crate::model::{predict_features, CommitFeatures, HyperParams};
use crate::msg::graph_for_message;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub k: usize,
    pub r: f64,
    pub max_path_len: usize,
    pub seed: u64,
}

impl From<&HyperParams> for ExtractConfig {
    fn from(hp: &HyperParams) -> Self {
        ExtractConfig { k: hp.k, r: hp.r, max_path_len: hp.max_path_len, seed: hp.seed }
    }
}

impl ExtractConfig {
    pub fn hash(&self) -> u64 {
        let mut h = fnv1a(b"extract-config");
        for word in [self.k as u64, self.r.to_bits(), self.max_path_len as u64, self.seed] {
            h = fnv1a_continue(h, &word.to_le_bytes());
        }
        h
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_continue(0xcbf2_9ce4_8422_2325, bytes)
}

pub(crate) fn fnv1a_continue(mut hash: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Path sampling at inference must be reproducible per commit: derive the
/// seed from the commit id and the configured base seed.
pub fn inference_seed(commit_id: &str, base_seed: u64) -> u64 {
    fnv1a(commit_id.as_bytes()) ^ base_seed
}

/// Wrap bare changed statements in a synthetic function so they parse when
/// no enclosing function can be resolved.
fn synthetic_side(lines: &[(usize, String)]) -> Option<FunctionSide> {
    if lines.is_empty() {
        return None;
    }
    let mut source = String::from("void changed_block() {\n");
    let mut changed = BTreeSet::new();
    for (i, (_, text)) in lines.iter().enumerate() {
        source.push_str(text);
        source.push('\n');
        changed.insert(i + 2);
    }
    source.push_str("}\n");
    Some(FunctionSide { source, changed_lines: changed })
}

/// All resolvable function sides of a commit, pre and post. Files whose
/// sources are missing or unresolvable degrade to synthetic wrappers around
/// just their changed lines.
pub fn resolve_sides(commit: &Commit) -> Vec<FunctionSide> {
    let mut sides = Vec::new();
    for file in &commit.files {
        match resolve_function_pair(file) {
            Ok(pairs) => {
                for pair in pairs {
                    sides.extend(pair.pre_function);
                    sides.extend(pair.post_function);
                }
            }
            Err(_) => {
                let mut sub_lines = Vec::new();
                let mut add_lines = Vec::new();
                for chunk in &file.chunks {
                    let (sub, add, _) = split_changes(chunk);
                    sub_lines.extend(sub);
                    add_lines.extend(add);
                }
                sides.extend(synthetic_side(&sub_lines));
                sides.extend(synthetic_side(&add_lines));
            }
        }
    }
    sides
}

/// Enumerate within-changes and within-context candidates over every
/// resolvable side. Sides that fail to parse contribute nothing.
pub fn collect_candidate_paths(
    commit: &Commit,
    max_path_len: usize,
) -> (Vec<AstPath>, Vec<AstPath>) {
    let mut wc = Vec::new();
    let mut ctx = Vec::new();
    for side in resolve_sides(commit) {
        let Ok(ast) = parse_ast(&side.source, Dialect::CSubset) else {
            continue;
        };
        let changed: BTreeSet<usize> =
            changed_terminals(&ast, &side.changed_lines).into_iter().collect();
        if changed.is_empty() {
            continue;
        }
        let (w, c) = enumerate_candidate_paths(&ast, &changed, max_path_len);
        wc.extend(w);
        ctx.extend(c);
    }
    (wc, ctx)
}

/// Full feature extraction for one commit: sampled path set plus message
/// graph. Deterministic for a given commit and config.
pub fn extract_features(commit: &Commit, cfg: &ExtractConfig) -> CommitFeatures {
    let (wc, ctx) = collect_candidate_paths(commit, cfg.max_path_len);
    let paths = sample_paths(wc, ctx, cfg.k, cfg.r, inference_seed(&commit.id, cfg.seed));
    CommitFeatures { paths, graph: graph_for_message(&commit.message) }
}

/// Per-commit feature files keyed by commit id and extraction config.
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(FeatureCache { dir: dir.to_path_buf() })
    }

    fn entry_path(&self, commit_id: &str, cfg: &ExtractConfig) -> PathBuf {
        self.dir
            .join(format!("{:016x}-{:016x}.json", fnv1a(commit_id.as_bytes()), cfg.hash()))
    }

    pub fn load(&self, commit_id: &str, cfg: &ExtractConfig) -> Option<CommitFeatures> {
        let bytes = std::fs::read(self.entry_path(commit_id, cfg)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn store(
        &self,
        commit_id: &str,
        cfg: &ExtractConfig,
        features: &CommitFeatures,
    ) -> std::io::Result<()> {
        let bytes = serde_json::to_vec(features).expect("features serialize");
        std::fs::write(self.entry_path(commit_id, cfg), bytes)
    }

    /// Cached features if present, otherwise extract and store.
    pub fn get_or_extract(&self, commit: &Commit, cfg: &ExtractConfig) -> CommitFeatures {
        if let Some(f) = self.load(&commit.id, cfg) {
            return f;
        }
        let f = extract_features(commit, cfg);
        let _ = self.store(&commit.id, cfg, &f);
        f
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub extraction_ms: f64,
    pub processing_ms: f64,
    pub inference_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.extraction_ms + self.processing_ms + self.inference_ms
    }
}

/// One line of the prediction report. A failed commit carries the reason in
/// `error` and no probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<u8>,
    pub degraded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timings: StageTimings,
}

/// End-to-end prediction with per-stage wall-clock timings: extraction
/// (function resolution), processing (ASTs, paths, message graph), and
/// inference (the forward pass).
pub fn predict_commit(commit: &Commit, ckpt: &ModelCheckpoint) -> PredictReport {
    let cfg = ExtractConfig::from(&ckpt.hyperparams);
    let mut timings = StageTimings::default();

    let start = Instant::now();
    let sides = resolve_sides(commit);
    timings.extraction_ms = start.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    let mut wc = Vec::new();
    let mut ctx = Vec::new();
    for side in sides {
        let Ok(ast) = parse_ast(&side.source, Dialect::CSubset) else {
            continue;
        };
        let changed: BTreeSet<usize> =
            changed_terminals(&ast, &side.changed_lines).into_iter().collect();
        if changed.is_empty() {
            continue;
        }
        let (w, c) = enumerate_candidate_paths(&ast, &changed, cfg.max_path_len);
        wc.extend(w);
        ctx.extend(c);
    }
    let paths = sample_paths(wc, ctx, cfg.k, cfg.r, inference_seed(&commit.id, cfg.seed));
    let features = CommitFeatures { paths, graph: graph_for_message(&commit.message) };
    timings.processing_ms = start.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    let result = predict_features(&ckpt.params, &features, &ckpt.vocabs, &ckpt.hyperparams);
    timings.inference_ms = start.elapsed().as_secs_f64() * 1e3;

    match result {
        Ok(pred) => PredictReport {
            id: commit.id.clone(),
            prob: Some(pred.prob),
            verdict: Some(pred.verdict),
            degraded: pred.degraded,
            error: None,
            timings,
        },
        Err(e) => PredictReport {
            id: commit.id.clone(),
            prob: None,
            verdict: None,
            degraded: true,
            error: Some(e.to_string()),
            timings,
        },
    }
}
