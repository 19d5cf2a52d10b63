//! Dataset splitting, the training loop with early stopping, evaluation
//! metrics, and ablation sweeps.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{ModelCheckpoint, TrainMeta};
use crate::diff::Commit;
use crate::model::{
    build_vocabularies, init_params, predict_features, CommitFeatures, HyperParams, TapeParams,
};
use crate::pipeline::{fnv1a, ExtractConfig, FeatureCache};
use crate::tensor::{adam_step, AdamState, Tape, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training split contains a single class only")]
    DegenerateData,
    #[error("commit {0} has no label")]
    MissingLabel(String),
    #[error("labels and verdicts differ in length: {labels} vs {verdicts}")]
    LengthMismatch { labels: usize, verdicts: usize },
    #[error("invalid hyperparameters: {0}")]
    BadHyperParams(String),
    #[error("model failure: {0}")]
    Model(#[from] TensorError),
}

/// Name used for commits without a project tag and for projects too small
/// to split on their own.
pub const PSEUDO_PROJECT: &str = "(unassigned)";

const MIN_PROJECT_SIZE: usize = 10;

/// Index partition of a commit list into train/validation/test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// Notes about pooled under-sized projects; empty when every project
    /// was split directly.
    pub warnings: Vec<String>,
}

/// Per-project seeded shuffle, a contiguous 80/10/10 cut, then fusion in
/// sorted project order. Projects with fewer than ten commits are pooled
/// into one pseudo-project first.
pub fn split_dataset(commits: &[Commit], seed: u64) -> SplitSpec {
    let mut by_project: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in commits.iter().enumerate() {
        let tag = c.project.clone().unwrap_or_else(|| PSEUDO_PROJECT.to_string());
        by_project.entry(tag).or_default().push(i);
    }
    let mut warnings = Vec::new();
    let mut pooled = by_project.remove(PSEUDO_PROJECT).unwrap_or_default();
    let small: Vec<String> = by_project
        .iter()
        .filter(|(_, v)| v.len() < MIN_PROJECT_SIZE)
        .map(|(k, _)| k.clone())
        .collect();
    for name in small {
        let members = by_project.remove(&name).unwrap();
        warnings.push(format!(
            "project {name} has only {} commits; pooled into {PSEUDO_PROJECT}",
            members.len()
        ));
        pooled.extend(members);
    }
    if !pooled.is_empty() {
        pooled.sort_unstable();
        by_project.insert(PSEUDO_PROJECT.to_string(), pooled);
    }

    let mut spec = SplitSpec {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
        warnings,
    };
    for (name, mut members) in by_project {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()));
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = (8 * n + 5) / 10;
        let n_val = (n + 5) / 10;
        let n_val = n_val.min(n - n_train);
        spec.train.extend(&members[..n_train]);
        spec.validation.extend(&members[n_train..n_train + n_val]);
        spec.test.extend(&members[n_train + n_val..]);
    }
    spec
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any of the ratios hit a zero denominator and was reported
    /// as 0.
    pub zero_division: bool,
}

pub fn compute_metrics(labels: &[u8], verdicts: &[u8]) -> Result<MetricsReport, TrainError> {
    if labels.len() != verdicts.len() {
        return Err(TrainError::LengthMismatch {
            labels: labels.len(),
            verdicts: verdicts.len(),
        });
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&l, &v) in labels.iter().zip(verdicts) {
        match (l, v) {
            (1, 1) => tp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fp += 1,
            _ => fn_ += 1,
        }
    }
    let mut zero_division = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            zero_division = true;
            0.0
        } else {
            num / den
        }
    };
    let accuracy = ratio((tp + tn) as f64, labels.len() as f64);
    let precision = ratio(tp as f64, (tp + fp) as f64);
    let recall = ratio(tp as f64, (tp + fn_) as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Ok(MetricsReport { tp, tn, fp, fn_, accuracy, precision, recall, f1, zero_division })
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

fn labeled_features(
    commits: &[Commit],
    indices: &[usize],
    cache: &FeatureCache,
    cfg: &ExtractConfig,
) -> Result<Vec<(CommitFeatures, f64)>, TrainError> {
    indices
        .iter()
        .map(|&i| {
            let label = commits[i]
                .label
                .ok_or_else(|| TrainError::MissingLabel(commits[i].id.clone()))?;
            Ok((cache.get_or_extract(&commits[i], cfg), f64::from(label)))
        })
        .collect()
}

fn accuracy_on(
    examples: &[(CommitFeatures, f64)],
    params: &crate::tensor::ParamSet,
    vocabs: &crate::model::Vocabularies,
    hp: &HyperParams,
) -> Result<f64, TrainError> {
    let mut correct = 0usize;
    for (features, label) in examples {
        let pred = predict_features(params, features, vocabs, hp)?;
        if f64::from(pred.verdict) == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len().max(1) as f64)
}

/// Full training run. Returns the best-validation checkpoint and a
/// per-epoch log. The validation split falls back to the training split
/// when empty.
pub fn train(
    commits: &[Commit],
    splits: &SplitSpec,
    hp: &HyperParams,
    cache: &FeatureCache,
) -> Result<(ModelCheckpoint, Vec<EpochLog>), TrainError> {
    hp.validate().map_err(TrainError::BadHyperParams)?;
    let cfg = ExtractConfig::from(hp);
    let train_set = labeled_features(commits, &splits.train, cache, &cfg)?;
    if train_set.is_empty()
        || train_set.iter().all(|(_, l)| *l == 0.0)
        || train_set.iter().all(|(_, l)| *l == 1.0)
    {
        return Err(TrainError::DegenerateData);
    }
    let val_set = if splits.validation.is_empty() {
        train_set.clone()
    } else {
        labeled_features(commits, &splits.validation, cache, &cfg)?
    };

    let vocabs = build_vocabularies(train_set.iter().map(|(f, _)| f));
    let mut params = init_params(hp, &vocabs, hp.seed);
    let mut adam = AdamState::new(hp.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);

    let mut best_params = params.clone();
    let mut best_meta = TrainMeta { epoch: 0, best_val_accuracy: f64::NEG_INFINITY, seed: hp.seed };
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=hp.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hp.batch) {
            for &i in batch {
                let (features, label) = &train_set[i];
                let mut tape = Tape::new();
                let tp = TapeParams::load(&mut tape, &params);
                let (logit, _, _) = crate::model::forward_commit(&mut tape, &tp, features, &vocabs, hp)?;
                let loss = tape.bce_with_logits(logit, *label);
                epoch_loss += tape.value(loss)[0];
                let grads = tape.backward(loss);
                tp.accumulate_into(&grads, &mut params);
            }
            let scale = 1.0 / batch.len() as f64;
            for t in params.values_mut() {
                if let Some(g) = &mut t.grad {
                    for x in g.iter_mut() {
                        *x *= scale;
                    }
                }
            }
            adam_step(&mut params, &mut adam);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_accuracy = accuracy_on(&val_set, &params, &vocabs, hp)?;
        log.push(EpochLog { epoch, train_loss, val_accuracy });
        if val_accuracy > best_meta.best_val_accuracy {
            best_meta = TrainMeta { epoch, best_val_accuracy: val_accuracy, seed: hp.seed };
            best_params = params.clone();
        } else if epoch - best_meta.epoch >= hp.patience {
            break;
        }
    }

    for t in best_params.values_mut() {
        t.grad = None;
    }
    let ckpt = ModelCheckpoint {
        hyperparams: hp.clone(),
        vocabs,
        params: best_params,
        meta: best_meta,
    };
    Ok((ckpt, log))
}

/// Metrics of a trained model over the listed commits.
pub fn evaluate(
    commits: &[Commit],
    indices: &[usize],
    ckpt: &ModelCheckpoint,
    cache: &FeatureCache,
) -> Result<MetricsReport, TrainError> {
    let cfg = ExtractConfig::from(&ckpt.hyperparams);
    let mut labels = Vec::new();
    let mut verdicts = Vec::new();
    for &i in indices {
        let label = commits[i]
            .label
            .ok_or_else(|| TrainError::MissingLabel(commits[i].id.clone()))?;
        let features = cache.get_or_extract(&commits[i], &cfg);
        let pred = predict_features(&ckpt.params, &features, &ckpt.vocabs, &ckpt.hyperparams)?;
        labels.push(label);
        verdicts.push(pred.verdict);
    }
    compute_metrics(&labels, &verdicts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    K,
    R,
    Hops,
}

impl SweepParam {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "k" => Some(SweepParam::K),
            "r" => Some(SweepParam::R),
            "hops" | "t" => Some(SweepParam::Hops),
            _ => None,
        }
    }

    fn apply(self, hp: &mut HyperParams, value: f64) {
        match self {
            SweepParam::K => hp.k = value as usize,
            SweepParam::R => hp.r = value,
            SweepParam::Hops => hp.hops = value as usize,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub error: Option<String>,
}

/// One train/evaluate cycle per value with shared seed and splits. A cell
/// that fails records its error and the sweep continues.
pub fn sweep(
    commits: &[Commit],
    param: SweepParam,
    values: &[f64],
    base: &HyperParams,
    cache: &FeatureCache,
) -> Vec<SweepRow> {
    let splits = split_dataset(commits, base.seed);
    values
        .iter()
        .map(|&value| {
            let mut hp = base.clone();
            param.apply(&mut hp, value);
            let outcome = train(commits, &splits, &hp, cache)
                .and_then(|(ckpt, _)| evaluate(commits, &splits.test, &ckpt, cache));
            match outcome {
                Ok(m) => SweepRow {
                    value,
                    accuracy: Some(m.accuracy),
                    f1: Some(m.f1),
                    error: None,
                },
                Err(e) => SweepRow { value, accuracy: None, f1: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}
