//! End-to-end acceptance gate. Each test covers one release criterion and
//! prints a single pass/fail line.

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use espi::ast::{
    parse_ast, sample_paths, shortest_path, AstPath, Dialect, PathCategory, PathSet,
};
use espi::checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, TrainMeta};
use espi::diff::Commit;
use espi::fixture::shorten_commit;
use espi::model::{
    build_vocabularies, forward_commit, ggnn_aggregate, init_params, CommitFeatures, HyperParams,
    TapeParams,
};
use espi::msg::{graph_for_message, MessageGraph};
use espi::pipeline::{collect_candidate_paths, extract_features, predict_commit, ExtractConfig, FeatureCache};
use espi::synth::generate_corpus;
use espi::tensor::{grad_check, ParamSet, Tape, Tensor};
use espi::train::{compute_metrics, evaluate, sweep, train, SplitSpec, SweepParam};

fn report(n: usize, title: &str, f: impl FnOnce()) {
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(f));
    match &outcome {
        Ok(()) => println!("acceptance {n:02} {title}: pass"),
        Err(_) => println!("acceptance {n:02} {title}: FAIL"),
    }
    if let Err(e) = outcome {
        std::panic::resume_unwind(e);
    }
}

fn commits_from(records: Vec<espi::dataset::CommitRecord>) -> Vec<Commit> {
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_commit(i + 1).unwrap())
        .collect()
}

fn all_train_split(n: usize, seed: u64) -> SplitSpec {
    SplitSpec {
        train: (0..n).collect(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
        warnings: Vec::new(),
    }
}

/// Checkpoint with freshly initialized weights whose vocabularies cover the
/// given feature sets.
fn untrained_checkpoint(hp: HyperParams, features: &[CommitFeatures]) -> ModelCheckpoint {
    let vocabs = build_vocabularies(features.iter());
    let params = init_params(&hp, &vocabs, hp.seed);
    ModelCheckpoint {
        hyperparams: hp.clone(),
        vocabs,
        params,
        meta: TrainMeta { epoch: 0, best_val_accuracy: 0.0, seed: hp.seed },
    }
}

// ---- 1: tree path finding vs breadth-first search ---------------------

fn random_tree_sexp(rng: &mut ChaCha8Rng, max_nodes: usize) -> String {
    fn gen(rng: &mut ChaCha8Rng, budget: &mut usize, depth: usize, next_id: &mut usize) -> String {
        let id = *next_id;
        *next_id += 1;
        *budget -= 1;
        let leaf = *budget == 0 || depth >= 6 || rng.gen_bool(0.4);
        if leaf {
            return format!("(T{id} \"v{id}\" L:1-1)");
        }
        let n_children = rng.gen_range(1..=3usize).min(*budget).max(1);
        let mut out = format!("(N{id}");
        for _ in 0..n_children {
            if *budget == 0 {
                break;
            }
            out.push(' ');
            out.push_str(&gen(rng, budget, depth + 1, next_id));
        }
        if !out.contains(' ') {
            // Ran out of budget before any child: degrade to a terminal.
            return format!("(T{id} \"v{id}\" L:1-1)");
        }
        out.push(')');
        out
    }
    let mut budget = rng.gen_range(2..=max_nodes);
    let mut next_id = 0;
    let mut out = String::from("(root");
    while budget > 0 {
        out.push(' ');
        out.push_str(&gen(rng, &mut budget, 1, &mut next_id));
        if rng.gen_bool(0.6) {
            break;
        }
    }
    out.push(')');
    out
}

fn bfs_path(ast: &espi::ast::Ast, from: usize, to: usize) -> Vec<usize> {
    let n = ast.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for (i, node) in ast.nodes.iter().enumerate() {
        for &c in &node.children {
            adj[i].push(c);
            adj[c].push(i);
        }
    }
    let mut prev = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([from]);
    prev[from] = from;
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &adj[u] {
            if prev[v] == usize::MAX {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    while *path.last().unwrap() != from {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    path
}

#[test]
fn criterion_01_path_finding_matches_bfs_oracle() {
    report(1, "tree paths match a BFS oracle on 1000 random trees", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..1000 {
            let sexp = random_tree_sexp(&mut rng, 50);
            let ast = parse_ast(&sexp, Dialect::Sexp).expect("generated tree parses");
            let terminals = ast.terminals();
            if terminals.len() < 2 {
                continue;
            }
            for _ in 0..10 {
                let a = terminals[rng.gen_range(0..terminals.len())];
                let b = terminals[rng.gen_range(0..terminals.len())];
                if a == b {
                    continue;
                }
                let got = shortest_path(&ast, a, b, PathCategory::WithinChanges).unwrap();
                assert_eq!(got.node_indices, bfs_path(&ast, a, b));
            }
        }
        assert!(start.elapsed().as_secs() < 30, "took {:?}", start.elapsed());
    });
}

// ---- 2: sampling contract ---------------------------------------------

fn dummy_paths(tag: &str, n: usize, category: PathCategory) -> Vec<AstPath> {
    (0..n)
        .map(|i| AstPath {
            start_value: format!("{tag}{i}"),
            node_types: vec!["id".into()],
            end_value: format!("{tag}{i}"),
            category,
            node_indices: Vec::new(),
        })
        .collect()
}

#[test]
fn criterion_02_sampling_counts_and_uniqueness() {
    report(2, "path sampling honors k, ratio, backfill, uniqueness", || {
        let (k, r) = (500usize, 1.0f64);
        let target_wc = ((k as f64) * r / (1.0 + r)).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for trial in 0..200 {
            let n_wc = rng.gen_range(0..1500);
            let n_ctx = rng.gen_range(0..1500);
            let wc = dummy_paths("wc", n_wc, PathCategory::WithinChanges);
            let ctx = dummy_paths("ctx", n_ctx, PathCategory::WithinContext);
            let ps = sample_paths(wc, ctx, k, r, trial);
            let got_wc = ps
                .paths
                .iter()
                .filter(|p| p.category == PathCategory::WithinChanges)
                .count();
            let got_ctx = ps.paths.len() - got_wc;
            let (want_wc, want_ctx) = if n_wc >= target_wc && n_ctx >= k - target_wc {
                (target_wc, k - target_wc)
            } else if n_wc < target_wc {
                (n_wc, (k - n_wc).min(n_ctx))
            } else {
                ((k - n_ctx).min(n_wc), n_ctx)
            };
            assert_eq!((got_wc, got_ctx), (want_wc, want_ctx), "pools {n_wc}/{n_ctx}");
            if n_wc + n_ctx <= k {
                assert_eq!(ps.paths.len(), n_wc + n_ctx, "undersized pools return all");
            }
            let unique: std::collections::BTreeSet<&str> =
                ps.paths.iter().map(|p| p.start_value.as_str()).collect();
            assert_eq!(unique.len(), ps.paths.len(), "sampling without replacement");
        }
    });
}

// ---- 3: gradients -----------------------------------------------------

fn composite_loss(p: &ParamSet) -> f64 {
    let mut tape = Tape::new();
    let tp = TapeParams::load(&mut tape, p);
    let (w1, b1) = (tp.get("w1"), tp.get("b1"));
    let (gamma, beta) = (tp.get("gamma"), tp.get("beta"));
    let (w2, b2) = (tp.get("w2"), tp.get("b2"));
    let (table, x) = (tp.get("table"), tp.get("x"));
    let e = tape.embed_lookup(table, 2).unwrap();
    let x = tape.add(x, e).unwrap();
    let y = tape.fc(x, w1, b1).unwrap();
    let ln = tape.layer_norm(y, gamma, beta, 1e-5).unwrap();
    let s = tape.sigmoid(ln);
    let t = tape.tanh(y);
    let m = tape.mul(s, t).unwrap();
    let om = tape.one_minus(s);
    let (pooled, _) = tape.maxpool_rows(&[m, om]).unwrap();
    let summed = tape.sum_rows(&[m, om]).unwrap();
    let c = tape.concat(&[pooled, summed]);
    let logit = tape.fc(c, w2, b2).unwrap();
    let loss = tape.bce_with_logits(logit, 1.0);
    tape.value(loss)[0]
}

fn toy_features() -> CommitFeatures {
    let path = |s: &str, types: &[&str], e: &str| AstPath {
        start_value: s.to_string(),
        node_types: types.iter().map(|t| t.to_string()).collect(),
        end_value: e.to_string(),
        category: PathCategory::WithinChanges,
        node_indices: Vec::new(),
    };
    CommitFeatures {
        paths: PathSet {
            paths: vec![
                path("buffer", &["identifier", "SubscrExpr", "BinExpr", "identifier"], "len"),
                path("i", &["identifier", "BinExpr", "NumLit"], "0"),
                path("get_buffer", &["identifier", "CallExpr", "ArgList", "identifier"], "size"),
            ],
            k_requested: 10,
            ratio_r: 1.0,
        },
        graph: graph_for_message("fix buffer overflow in the decoder"),
    }
}

#[test]
fn criterion_03_gradient_suite() {
    report(3, "analytic gradients match finite differences", || {
        // Composite of the elementary operations, checked tightly.
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut rand_tensor = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            Tensor::param(shape, (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect())
        };
        let mut params = ParamSet::new();
        params.insert("w1".into(), rand_tensor(vec![3, 4]));
        params.insert("b1".into(), rand_tensor(vec![3]));
        params.insert("gamma".into(), rand_tensor(vec![3]));
        params.insert("beta".into(), rand_tensor(vec![3]));
        params.insert("w2".into(), rand_tensor(vec![1, 6]));
        params.insert("b2".into(), rand_tensor(vec![1]));
        params.insert("table".into(), rand_tensor(vec![5, 4]));
        params.insert("x".into(), rand_tensor(vec![4]));

        let mut work = params.clone();
        {
            let mut tape = Tape::new();
            let tp = TapeParams::load(&mut tape, &params);
            let (w1, b1) = (tp.get("w1"), tp.get("b1"));
            let (gamma, beta) = (tp.get("gamma"), tp.get("beta"));
            let (w2, b2) = (tp.get("w2"), tp.get("b2"));
            let (table, x) = (tp.get("table"), tp.get("x"));
            let e = tape.embed_lookup(table, 2).unwrap();
            let x = tape.add(x, e).unwrap();
            let y = tape.fc(x, w1, b1).unwrap();
            let ln = tape.layer_norm(y, gamma, beta, 1e-5).unwrap();
            let s = tape.sigmoid(ln);
            let t = tape.tanh(y);
            let m = tape.mul(s, t).unwrap();
            let om = tape.one_minus(s);
            let (pooled, _) = tape.maxpool_rows(&[m, om]).unwrap();
            let summed = tape.sum_rows(&[m, om]).unwrap();
            let c = tape.concat(&[pooled, summed]);
            let logit = tape.fc(c, w2, b2).unwrap();
            let loss = tape.bce_with_logits(logit, 1.0);
            let grads = tape.backward(loss);
            tp.accumulate_into(&grads, &mut work);
        }
        let analytic: BTreeMap<String, Vec<f64>> = work
            .iter()
            .map(|(k, t)| (k.clone(), t.grad.clone().unwrap_or_else(|| vec![0.0; t.data.len()])))
            .collect();
        let rep = grad_check(composite_loss, &params, &analytic, 1e-5).unwrap();
        assert!(rep.passed(), "elementary ops: max rel err {}", rep.max_rel_err);

        // Full model loss on a toy commit.
        let hp = HyperParams {
            d_model: 4,
            hidden: 3,
            k: 10,
            hops: 2,
            max_path_len: 8,
            seed: 16,
            ..HyperParams::default()
        };
        let features = toy_features();
        let vocabs = build_vocabularies([&features]);
        let mut params = init_params(&hp, &vocabs, 16);
        {
            let mut tape = Tape::new();
            let tp = TapeParams::load(&mut tape, &params);
            let (logit, _, _) = forward_commit(&mut tape, &tp, &features, &vocabs, &hp).unwrap();
            let loss = tape.bce_with_logits(logit, 1.0);
            let grads = tape.backward(loss);
            tp.accumulate_into(&grads, &mut params);
        }
        let analytic: BTreeMap<String, Vec<f64>> = params
            .iter()
            .map(|(k, t)| (k.clone(), t.grad.clone().unwrap_or_else(|| vec![0.0; t.data.len()])))
            .collect();
        let f = |p: &ParamSet| {
            let mut tape = Tape::new();
            let tp = TapeParams::load(&mut tape, p);
            let (logit, _, _) = forward_commit(&mut tape, &tp, &features, &vocabs, &hp).unwrap();
            let loss = tape.bce_with_logits(logit, 1.0);
            tape.value(loss)[0]
        };
        let rep = grad_check(f, &params, &analytic, 1e-4).unwrap();
        assert!(rep.passed(), "end to end: max rel err {}", rep.max_rel_err);
    });
}

// ---- 4: graph aggregation vs dense adjacency --------------------------

#[test]
fn criterion_04_ggnn_matches_dense_adjacency() {
    report(4, "graph aggregation equals dense adjacency multiply", || {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let d = 4usize;
        for _ in 0..100 {
            let n = rng.gen_range(1..=30usize);
            let mut edges = Vec::new();
            for _ in 0..rng.gen_range(0..3 * n) {
                let s = rng.gen_range(0..n);
                let t = rng.gen_range(0..n);
                let kind = ["neigh", "det", "obj"][rng.gen_range(0..3)];
                edges.push((s, t, kind.to_string()));
            }
            let graph = MessageGraph {
                tokens: (0..n).map(|i| format!("t{i}")).collect(),
                edges,
            };
            let states_data: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let mut adjacency = vec![vec![0.0f64; n]; n];
            for (s, t, _) in &graph.edges {
                adjacency[*s][*t] = 1.0;
                adjacency[*t][*s] = 1.0;
            }
            let mut tape = Tape::new();
            let states: Vec<_> = states_data
                .iter()
                .map(|row| tape.leaf_data(vec![d], row.clone()))
                .collect();
            let agg = ggnn_aggregate(&mut tape, &graph, &states).unwrap();
            for i in 0..n {
                let got = tape.value(agg[i]).to_vec();
                let mut want = vec![0.0; d];
                for j in 0..n {
                    for c in 0..d {
                        want[c] += adjacency[i][j] * states_data[j][c];
                    }
                }
                for c in 0..d {
                    assert!(
                        (got[c] - want[c]).abs() <= 1e-12,
                        "node {i} coord {c}: {} vs {}",
                        got[c],
                        want[c]
                    );
                }
            }
        }
    });
}

// ---- 5: metrics -------------------------------------------------------

#[test]
fn criterion_05_metrics_oracle() {
    report(5, "metrics match an independent implementation", || {
        let m = compute_metrics(&[1, 1, 0, 0], &[1, 0, 0, 1]).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            assert_eq!(v, 0.5);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for _ in 0..1000 {
            let n = rng.gen_range(1..60);
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let verdicts: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let m = compute_metrics(&labels, &verdicts).unwrap();

            let tp = labels.iter().zip(&verdicts).filter(|(&l, &v)| l == 1 && v == 1).count();
            let fp = labels.iter().zip(&verdicts).filter(|(&l, &v)| l == 0 && v == 1).count();
            let fn_ = labels.iter().zip(&verdicts).filter(|(&l, &v)| l == 1 && v == 0).count();
            let tn = n - tp - fp - fn_;
            assert_eq!((m.tp, m.fp, m.fn_, m.tn), (tp, fp, fn_, tn));
            assert_eq!(m.accuracy, (tp + tn) as f64 / n as f64);
            let pre = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            let rec = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
            assert_eq!(m.precision, pre);
            assert_eq!(m.recall, rec);
            let f1 = if pre + rec > 0.0 { 2.0 * pre * rec / (pre + rec) } else { 0.0 };
            assert_eq!(m.f1, f1);
        }
    });
}

// ---- 6: overfit smoke test --------------------------------------------

#[test]
fn criterion_06_overfit_and_generalize() {
    report(6, "training overfits 50 commits and generalizes to 200", || {
        let start = Instant::now();
        let train_commits = commits_from(generate_corpus(50, 100));
        let test_commits = commits_from(generate_corpus(200, 200));
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path()).unwrap();

        let mut train_accs = Vec::new();
        let mut test_accs = Vec::new();
        for seed in [1u64, 2, 3] {
            let hp = HyperParams::small(seed);
            let splits = all_train_split(train_commits.len(), seed);
            let (ckpt, log) = train(&train_commits, &splits, &hp, &cache).unwrap();
            assert!(log.len() <= 50, "needed {} epochs", log.len());
            let train_idx: Vec<usize> = (0..train_commits.len()).collect();
            let test_idx: Vec<usize> = (0..test_commits.len()).collect();
            train_accs.push(evaluate(&train_commits, &train_idx, &ckpt, &cache).unwrap().accuracy);
            test_accs.push(evaluate(&test_commits, &test_idx, &ckpt, &cache).unwrap().accuracy);
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(avg(&train_accs) >= 0.95, "train accuracies {train_accs:?}");
        assert!(avg(&test_accs) >= 0.80, "test accuracies {test_accs:?}");
        assert!(start.elapsed().as_secs() < 600, "took {:?}", start.elapsed());
    });
}

// ---- 7: ablation sanity -----------------------------------------------

#[test]
fn criterion_07_k_sweep_non_degradation() {
    report(7, "more sampled paths never hurt beyond tolerance", || {
        let commits = commits_from(generate_corpus(500, 300));
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path()).unwrap();
        let mut acc_low = Vec::new();
        let mut acc_high = Vec::new();
        for seed in [1u64, 2, 3] {
            // Smallest dimensions that still learn the corpus; the swept
            // quantity is k, which the sweep itself overrides per cell.
            let hp = HyperParams {
                d_model: 8,
                hidden: 8,
                lr: 0.02,
                max_epochs: 4,
                ..HyperParams::small(seed)
            };
            let rows = sweep(&commits, SweepParam::K, &[50.0, 500.0], &hp, &cache);
            assert_eq!(rows.len(), 2);
            for row in &rows {
                assert!(row.error.is_none(), "seed {seed} cell failed: {:?}", row.error);
            }
            acc_low.push(rows[0].accuracy.unwrap());
            acc_high.push(rows[1].accuracy.unwrap());
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            avg(&acc_high) >= avg(&acc_low) - 0.02,
            "k=500 {acc_high:?} vs k=50 {acc_low:?}"
        );
    });
}

// ---- 8: canonical fixture end-to-end ----------------------------------

#[test]
fn criterion_08_fixture_pipeline() {
    report(8, "bundled security patch runs the full pipeline", || {
        let commit = shorten_commit();
        let (wc, ctx) = collect_candidate_paths(&commit, 16);
        assert!(!wc.is_empty());
        assert!(
            ctx.iter().any(|p| {
                (p.start_value == "s" && p.end_value == "blocksize")
                    || (p.start_value == "blocksize" && p.end_value == "s")
            }),
            "expected a within-context candidate joining the changed index with blocksize"
        );

        let hp = HyperParams::small(8);
        let features = extract_features(&commit, &ExtractConfig::from(&hp));
        let ckpt = untrained_checkpoint(hp, &[features]);
        let rep = predict_commit(&commit, &ckpt);
        assert!(rep.error.is_none(), "{:?}", rep.error);
        let prob = rep.prob.unwrap();
        assert!(prob > 0.0 && prob < 1.0);
        assert_eq!(rep.verdict.unwrap(), u8::from(prob >= 0.5));
        assert!(!rep.degraded);
        assert!(rep.timings.extraction_ms >= 0.0);
        assert!(rep.timings.processing_ms >= 0.0);
        assert!(rep.timings.inference_ms >= 0.0);
    });
}

// ---- 9: per-commit latency --------------------------------------------

#[test]
fn criterion_09_prediction_latency() {
    report(9, "median end-to-end prediction under one second", || {
        let mut commits = commits_from(generate_corpus(30, 900));
        commits.push(shorten_commit());
        let hp = HyperParams::small(9);
        let cfg = ExtractConfig::from(&hp);
        let features: Vec<CommitFeatures> =
            commits.iter().map(|c| extract_features(c, &cfg)).collect();
        let ckpt = untrained_checkpoint(hp, &features);
        let mut totals: Vec<f64> = commits
            .iter()
            .map(|c| {
                let rep = predict_commit(c, &ckpt);
                assert!(rep.error.is_none());
                rep.timings.total_ms()
            })
            .collect();
        totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = totals[totals.len() / 2];
        assert!(median < 1000.0, "median latency {median} ms");
    });
}

// ---- 10: checkpoint round trip ----------------------------------------

#[test]
fn criterion_10_checkpoint_preserves_predictions() {
    report(10, "checkpoint round trip is prediction-exact", || {
        let commits = commits_from(generate_corpus(100, 1000));
        let hp = HyperParams::small(10);
        let cfg = ExtractConfig::from(&hp);
        let features: Vec<CommitFeatures> =
            commits.iter().map(|c| extract_features(c, &cfg)).collect();
        let ckpt = untrained_checkpoint(hp, &features);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        for commit in &commits {
            let a = predict_commit(commit, &ckpt);
            let b = predict_commit(commit, &loaded);
            assert_eq!(
                a.prob.unwrap().to_bits(),
                b.prob.unwrap().to_bits(),
                "commit {}",
                commit.id
            );
            assert_eq!(a.verdict, b.verdict);
        }
    });
}
