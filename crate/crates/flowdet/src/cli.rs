//! `flowdet` command-line interface: `train`, `evaluate`, `predict`.
//!
//! Exit codes: 0 success; 1 configuration or checkpoint error; 2 data
//! error; 3 training/run failure. Every failure prints a one-line
//! diagnostic on stderr. All artifacts are written atomically (temp file +
//! rename), so a failed run never leaves a partial file behind.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use crate::config::{RunConfig, SplitMode};
use crate::error::Error;
use crate::ingest::{
    parse_feature_csv, parse_netflow_csv, parse_netflow_csv_lenient, summarize_labels, ParseMode,
    RawDataset,
};
use crate::model::Checkpoint;
use crate::preprocess::{
    block_split, build_windows, fit_encoder, stratified_split, transform_windows, DatasetSplits,
};
use crate::train::{epoch_log_csv, evaluate, fit};
use crate::util::write_atomic;

#[derive(Parser)]
#[command(
    name = "flowdet",
    version,
    about = "CNN-BiLSTM anomaly detector for NetFlow traffic"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a detector from a flow CSV and write checkpoint, loss curve and
    /// test metrics
    Train(Box<TrainArgs>),
    /// Score a labeled flow CSV with a saved checkpoint and report metrics
    Evaluate(EvaluateArgs),
    /// Score a (possibly unlabeled) flow CSV and write per-window
    /// predictions
    Predict(PredictArgs),
}

/// Flags mirror the config-file keys one-to-one; a flag wins over the file.
#[derive(Args)]
pub struct TrainArgs {
    /// Config file (`key = value`, `#` comments)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input flow CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory (default: runs/<timestamp>-seed<seed>)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed for split, init and training randomness
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub feature_columns: Option<String>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub attack_column: Option<String>,
    #[arg(long)]
    pub drop_columns: Option<String>,
    /// strict (abort on bad rows) or lenient (skip and count)
    #[arg(long)]
    pub parse_mode: Option<String>,
    #[arg(long)]
    pub window_len: Option<String>,
    #[arg(long)]
    pub stride: Option<String>,
    /// Three comma-separated train/val/test fractions summing to 1
    #[arg(long)]
    pub ratios: Option<String>,
    /// stratified or block
    #[arg(long)]
    pub split_mode: Option<String>,
    #[arg(long)]
    pub log1p_columns: Option<String>,
    #[arg(long)]
    pub conv1_filters: Option<String>,
    #[arg(long)]
    pub conv2_filters: Option<String>,
    #[arg(long)]
    pub kernel_size: Option<String>,
    #[arg(long)]
    pub pool_width: Option<String>,
    #[arg(long)]
    pub dropout_rate: Option<String>,
    #[arg(long)]
    pub lstm_hidden: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub beta1: Option<String>,
    #[arg(long)]
    pub beta2: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    /// on/off: weight the loss by inverse class frequency
    #[arg(long)]
    pub class_weighting: Option<String>,
    #[arg(long)]
    pub threshold_grid_step: Option<String>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Saved checkpoint JSON
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled flow CSV to score
    #[arg(long)]
    pub data: PathBuf,
    /// Optional directory for metrics.json (metrics always print to stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Window stride override (default: the stride stored in the checkpoint)
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Saved checkpoint JSON
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Flow CSV to score; the label column may be absent
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for predictions.csv (default: runs/<timestamp>-predict)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Window stride override (default: the stride stored in the checkpoint)
    #[arg(long)]
    pub stride: Option<usize>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(msg: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            message: format!("config error: {msg}"),
        }
    }

    fn data(msg: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: format!("data error: {msg}"),
        }
    }

    fn run(msg: impl std::fmt::Display) -> Self {
        Failure {
            code: 3,
            message: format!("run failed: {msg}"),
        }
    }
}

/// Parse argv, dispatch, and return the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Predict(args) => cmd_predict(&args),
    };
    match result {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("{}", failure.message);
            failure.code
        }
    }
}

fn resolve_run_config(args: &TrainArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    let overrides: [(&str, &Option<String>); 25] = [
        ("seed", &args.seed),
        ("feature_columns", &args.feature_columns),
        ("label_column", &args.label_column),
        ("attack_column", &args.attack_column),
        ("drop_columns", &args.drop_columns),
        ("parse_mode", &args.parse_mode),
        ("window_len", &args.window_len),
        ("stride", &args.stride),
        ("ratios", &args.ratios),
        ("split_mode", &args.split_mode),
        ("log1p_columns", &args.log1p_columns),
        ("conv1_filters", &args.conv1_filters),
        ("conv2_filters", &args.conv2_filters),
        ("kernel_size", &args.kernel_size),
        ("pool_width", &args.pool_width),
        ("dropout_rate", &args.dropout_rate),
        ("lstm_hidden", &args.lstm_hidden),
        ("epochs", &args.epochs),
        ("batch_size", &args.batch_size),
        ("learning_rate", &args.learning_rate),
        ("beta1", &args.beta1),
        ("beta2", &args.beta2),
        ("epsilon", &args.epsilon),
        ("class_weighting", &args.class_weighting),
        ("threshold_grid_step", &args.threshold_grid_step),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.apply_kv(key, v).map_err(Failure::config)?;
        }
    }
    if let Some(data) = &args.data {
        cfg.data = Some(data.clone());
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn parse_dataset(cfg: &RunConfig, path: &Path) -> Result<RawDataset, Failure> {
    let wrap = |e: Error| Failure::data(format!("{}: {e}", path.display()));
    match cfg.parse_mode {
        ParseMode::Strict => parse_netflow_csv(path, &cfg.schema()).map_err(wrap),
        ParseMode::Lenient => {
            let (ds, rejected) = parse_netflow_csv_lenient(path, &cfg.schema()).map_err(wrap)?;
            if rejected > 0 {
                eprintln!("warning: skipped {rejected} malformed rows");
            }
            Ok(ds)
        }
    }
}

fn split_windows(
    cfg: &RunConfig,
    windows: Vec<crate::preprocess::SequenceWindow>,
) -> Result<DatasetSplits, Failure> {
    let seed = cfg.split_seed();
    match cfg.split_mode {
        SplitMode::Stratified => stratified_split(windows, cfg.ratios, seed),
        SplitMode::Block => block_split(windows, cfg.ratios, seed),
    }
    .map_err(Failure::data)
}

/// Timestamped per-run directory so repeated runs never clobber each other.
fn default_out_dir(tag: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
    PathBuf::from("runs").join(format!("{stamp}-{tag}"))
}

fn train_error(e: Error) -> Failure {
    match e {
        Error::NonFiniteLoss { .. } => Failure::run(e),
        Error::EmptySplit(_) | Error::EmptyInput => Failure::data(e),
        Error::Config(_) | Error::InvalidConfig(_) => Failure::config(e),
        other => Failure::run(other),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let cfg = resolve_run_config(args)?;
    let data_path = cfg
        .data
        .clone()
        .ok_or_else(|| Failure::config("no input data: set `data` in the config or pass --data"))?;

    let dataset = parse_dataset(&cfg, &data_path)?;
    let summary = summarize_labels(&dataset).map_err(Failure::data)?;
    println!("{}", summary.to_json());

    // Windows are built over the full ordered stream on raw values, split,
    // and only then normalized with an encoder fitted on the rows covered by
    // training windows.
    let raw_features: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.features.clone()).collect();
    let labels: Vec<u8> = dataset.records.iter().map(|r| r.label).collect();
    let raw_windows =
        build_windows(&raw_features, &labels, cfg.window_len, cfg.stride).map_err(Failure::data)?;
    let mut splits = split_windows(&cfg, raw_windows)?;

    let mut in_train = vec![false; dataset.records.len()];
    for w in &splits.train {
        let start = w.origin_index + 1 - cfg.window_len;
        for slot in &mut in_train[start..=w.origin_index] {
            *slot = true;
        }
    }
    let train_records: Vec<crate::ingest::FlowRecord> = dataset
        .records
        .iter()
        .zip(&in_train)
        .filter(|(_, &keep)| keep)
        .map(|(r, _)| r.clone())
        .collect();
    let schema = cfg.schema();
    let encoder =
        fit_encoder(&train_records, &schema, &cfg.log1p_columns).map_err(Failure::data)?;
    for split in [&mut splits.train, &mut splits.val, &mut splits.test] {
        transform_windows(split, &encoder).map_err(Failure::data)?;
    }

    let model_cfg = cfg.model_config();
    let train_cfg = cfg.train_config();
    let (checkpoint, logs) = fit(
        &splits, &model_cfg, &train_cfg, &encoder, &schema, cfg.stride,
    )
    .map_err(train_error)?;
    for log in &logs {
        println!(
            "epoch {} train_loss {} val_f1 {} threshold {}",
            log.epoch, log.train_loss, log.val_f1, log.threshold
        );
    }

    let report = evaluate(&checkpoint, &splits.test).map_err(train_error)?;

    let out_dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| default_out_dir(&format!("seed{}", cfg.seed)));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Failure::run(format!("cannot create {}: {e}", out_dir.display())))?;
    checkpoint
        .save(out_dir.join("checkpoint.json"))
        .map_err(Failure::run)?;
    write_atomic(
        &out_dir.join("loss_curve.csv"),
        epoch_log_csv(&logs).as_bytes(),
    )
    .map_err(Failure::run)?;
    let mut metrics_json = report.to_json();
    metrics_json.push('\n');
    write_atomic(&out_dir.join("metrics.json"), metrics_json.as_bytes()).map_err(Failure::run)?;

    println!("{}", report.to_json());
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}

/// Load a checkpoint, parse `data` against its embedded schema, normalize
/// with its encoder and rebuild windows with its geometry.
fn windows_for_checkpoint(
    ckpt: &Checkpoint,
    data: &Path,
    stride_override: Option<usize>,
    require_label: bool,
) -> Result<Vec<crate::preprocess::SequenceWindow>, Failure> {
    let wrap = |e: Error| Failure::data(format!("{}: {e}", data.display()));
    let dataset = if require_label {
        parse_netflow_csv(data, &ckpt.schema).map_err(wrap)?
    } else {
        parse_feature_csv(data, &ckpt.schema).map_err(wrap)?
    };
    let mut features: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.features.clone()).collect();
    for row in features.iter_mut() {
        ckpt.encoder.transform_row(row).map_err(wrap)?;
    }
    let labels: Vec<u8> = dataset.records.iter().map(|r| r.label).collect();
    let stride = stride_override.unwrap_or(ckpt.stride);
    if stride == 0 {
        return Err(Failure::config("stride must be >= 1"));
    }
    build_windows(&features, &labels, ckpt.model.config.window_len, stride).map_err(wrap)
}

fn checkpoint_failure(path: &Path, e: Error) -> Failure {
    Failure {
        code: 1,
        message: format!("checkpoint error: {}: {e}", path.display()),
    }
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let ckpt =
        Checkpoint::load(&args.checkpoint).map_err(|e| checkpoint_failure(&args.checkpoint, e))?;
    let windows = windows_for_checkpoint(&ckpt, &args.data, args.stride, true)?;
    let report = evaluate(&ckpt, &windows).map_err(Failure::data)?;
    println!("{}", report.to_json());
    if let Some(out_dir) = &args.out {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| Failure::run(format!("cannot create {}: {e}", out_dir.display())))?;
        let mut json = report.to_json();
        json.push('\n');
        write_atomic(&out_dir.join("metrics.json"), json.as_bytes()).map_err(Failure::run)?;
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<(), Failure> {
    let ckpt =
        Checkpoint::load(&args.checkpoint).map_err(|e| checkpoint_failure(&args.checkpoint, e))?;
    let windows = windows_for_checkpoint(&ckpt, &args.data, args.stride, false)?;
    let scores = ckpt.model.predict_proba(&windows).map_err(Failure::data)?;

    let mut csv = String::from("origin_index,score,predicted_label\n");
    for (w, &score) in windows.iter().zip(&scores) {
        let predicted = u8::from(score >= ckpt.threshold);
        csv.push_str(&format!("{},{},{}\n", w.origin_index, score, predicted));
    }
    let out_dir = args.out.clone().unwrap_or_else(|| default_out_dir("predict"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Failure::run(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join("predictions.csv");
    write_atomic(&path, csv.as_bytes()).map_err(Failure::run)?;
    println!("predictions written to {}", path.display());
    Ok(())
}
