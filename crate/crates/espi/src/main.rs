use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use espi::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use espi::dataset::{load_dataset, save_records, DatasetError};
use espi::model::{build_vocabularies, forward_commit, init_params, HyperParams, TapeParams};
use espi::pipeline::{predict_commit, extract_features, ExtractConfig, FeatureCache};
use espi::synth::generate_corpus;
use espi::tensor::{grad_check, ParamSet, Tape};
use espi::train::{evaluate, split_dataset, sweep, train, SweepParam, TrainError};

#[derive(Parser)]
#[command(
    name = "espi",
    about = "Security patch identification over commit structure",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract path and message features for every commit into a cache.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        #[arg(long, default_value_t = 16)]
        max_path_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model with early stopping and write the best checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 4)]
        hops: usize,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = 10)]
        patience: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        #[arg(long, default_value_t = 16)]
        max_path_len: usize,
        #[arg(long, default_value_t = 200)]
        max_epochs: usize,
    },
    /// Score commits with a trained checkpoint; one JSON record per line.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report metrics of a checkpoint over a labeled dataset.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Train once per value of one hyperparameter and tabulate metrics.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// One of: k, r, hops
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 100,300,500
        #[arg(long)]
        values: String,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 200)]
        max_epochs: usize,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck,
    /// Write a deterministic synthetic labeled corpus.
    GenCorpus {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Data(String),
    Model(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Data(_) => ExitCode::from(1),
            CliError::Model(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Model(m) => m,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(_) | TrainError::BadHyperParams(_) => {
                CliError::Model(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Extract { input, out, k, ratio, max_path_len, seed } => {
            let commits = load_dataset(&input)?;
            let cache = FeatureCache::new(&out)?;
            let cfg = ExtractConfig { k, r: ratio, max_path_len, seed };
            for commit in &commits {
                cache.get_or_extract(commit, &cfg);
            }
            println!("extracted features for {} commits into {}", commits.len(), out.display());
            Ok(())
        }
        Cmd::Train {
            data,
            cache,
            out,
            dim,
            hidden,
            hops,
            lr,
            patience,
            batch,
            seed,
            k,
            ratio,
            max_path_len,
            max_epochs,
        } => {
            let commits = load_dataset(&data)?;
            let cache = FeatureCache::new(&cache)?;
            let hp = HyperParams {
                d_model: dim,
                hidden,
                k,
                r: ratio,
                hops,
                max_path_len,
                lr,
                patience,
                batch,
                seed,
                max_epochs,
            };
            let splits = split_dataset(&commits, seed);
            for w in &splits.warnings {
                eprintln!("warning: {w}");
            }
            let (ckpt, log) = train(&commits, &splits, &hp, &cache)?;
            for e in &log {
                println!(
                    "epoch {:3}  loss {:.6}  val_acc {:.4}",
                    e.epoch, e.train_loss, e.val_accuracy
                );
            }
            save_checkpoint(&ckpt, &out)?;
            println!(
                "best epoch {} (val_acc {:.4}) written to {}",
                ckpt.meta.epoch,
                ckpt.meta.best_val_accuracy,
                out.display()
            );
            Ok(())
        }
        Cmd::Predict { ckpt, input, out } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let commits = load_dataset(&input)?;
            let mut file = std::fs::File::create(&out)?;
            for commit in &commits {
                let report = predict_commit(commit, &ckpt);
                let line = serde_json::to_string(&report)
                    .map_err(|e| CliError::Model(e.to_string()))?;
                writeln!(file, "{line}")?;
            }
            println!("wrote {} predictions to {}", commits.len(), out.display());
            Ok(())
        }
        Cmd::Evaluate { ckpt, data, cache } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let commits = load_dataset(&data)?;
            let cache_dir = match cache {
                Some(dir) => dir,
                None => tempdir()?,
            };
            let cache = FeatureCache::new(&cache_dir)?;
            let indices: Vec<usize> = (0..commits.len()).collect();
            let metrics = evaluate(&commits, &indices, &ckpt, &cache)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Model(e.to_string()))?
            );
            Ok(())
        }
        Cmd::Sweep { data, param, values, cache, seed, dim, hidden, max_epochs } => {
            let commits = load_dataset(&data)?;
            let param = SweepParam::parse(&param)
                .ok_or_else(|| CliError::Data(format!("unknown sweep parameter: {param}")))?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Data(format!("bad sweep value: {v}")))
                })
                .collect::<Result<_, _>>()?;
            if values.is_empty() {
                return Err(CliError::Data("no sweep values given".into()));
            }
            let cache_dir = match cache {
                Some(dir) => dir,
                None => tempdir()?,
            };
            let cache = FeatureCache::new(&cache_dir)?;
            let hp = HyperParams {
                d_model: dim,
                hidden,
                seed,
                max_epochs,
                ..HyperParams::default()
            };
            let rows = sweep(&commits, param, &values, &hp, &cache);
            println!("{:>10}  {:>8}  {:>8}  error", "value", "accuracy", "f1");
            for row in &rows {
                match (&row.accuracy, &row.f1, &row.error) {
                    (Some(a), Some(f), None) => {
                        println!("{:>10}  {:>8.4}  {:>8.4}  -", row.value, a, f)
                    }
                    _ => println!(
                        "{:>10}  {:>8}  {:>8}  {}",
                        row.value,
                        "-",
                        "-",
                        row.error.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            Ok(())
        }
        Cmd::Gradcheck => {
            let report = run_gradcheck().map_err(CliError::Model)?;
            for (name, err) in &report.per_param {
                println!("{name:<24} max_rel_err {err:.3e}");
            }
            println!(
                "overall max_rel_err {:.3e} (tolerance {:.0e})",
                report.max_rel_err, report.tolerance
            );
            if report.passed() {
                println!("gradcheck passed");
                Ok(())
            } else {
                Err(CliError::Model("gradient check failed".into()))
            }
        }
        Cmd::GenCorpus { n, seed, out } => {
            let records = generate_corpus(n, seed);
            save_records(&out, &records)?;
            println!("wrote {n} synthetic commits to {}", out.display());
            Ok(())
        }
    }
}

fn tempdir() -> std::io::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("espi-cache-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// End-to-end loss gradient on one synthetic commit at reduced dimensions.
fn run_gradcheck() -> Result<espi::tensor::GradCheckReport, String> {
    let hp = HyperParams {
        d_model: 6,
        hidden: 5,
        k: 8,
        hops: 2,
        max_path_len: 10,
        ..HyperParams::default()
    };
    let record = generate_corpus(1, 42).pop().expect("one record");
    let commit = record.into_commit(1).map_err(|e| e.to_string())?;
    let features = extract_features(&commit, &ExtractConfig::from(&hp));
    let vocabs = build_vocabularies([&features]);
    let mut params = init_params(&hp, &vocabs, 42);

    let mut tape = Tape::new();
    let tp = TapeParams::load(&mut tape, &params);
    let (logit, _, _) =
        forward_commit(&mut tape, &tp, &features, &vocabs, &hp).map_err(|e| e.to_string())?;
    let loss = tape.bce_with_logits(logit, 1.0);
    let grads = tape.backward(loss);
    tp.accumulate_into(&grads, &mut params);

    let analytic: BTreeMap<String, Vec<f64>> = params
        .iter()
        .filter(|(_, t)| t.requires_grad)
        .map(|(k, t)| (k.clone(), t.grad.clone().unwrap_or_else(|| vec![0.0; t.data.len()])))
        .collect();
    let f = |p: &ParamSet| {
        let mut tape = Tape::new();
        let tp = TapeParams::load(&mut tape, p);
        let (logit, _, _) = forward_commit(&mut tape, &tp, &features, &vocabs, &hp)
            .expect("forward pass");
        let loss = tape.bce_with_logits(logit, 1.0);
        tape.value(loss)[0]
    };
    // Finite differences get noisy for near-zero gradient entries, so the
    // command-line check runs with more headroom than the unit suites.
    grad_check(f, &params, &analytic, 1e-3).map_err(|e| e.to_string())
}
