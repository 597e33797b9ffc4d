//! Run configuration: a flat, commented `key = value` file plus CLI flag
//! overrides (flags win). Every key is validated up front so a bad run
//! fails before any work starts.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::{FlowSchema, ParseMode};
use crate::model::ModelConfig;
use crate::nn::derive_seed;
use crate::preprocess::SplitRatios;
use crate::train::TrainConfig;

/// How windows are assigned to train/val/test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Per-class apportionment with a seeded shuffle (default).
    Stratified,
    /// Contiguous blocks of the window stream; leak-free but unshuffled.
    Block,
}

/// All knobs of a run. One seed drives every random choice: the split,
/// parameter initialization and training-time shuffling/dropout each use a
/// subseed derived from it.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,

    // schema
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub attack_column: Option<String>,
    pub drop_columns: Vec<String>,
    pub parse_mode: ParseMode,

    // preprocessing
    pub window_len: usize,
    pub stride: usize,
    pub ratios: SplitRatios,
    pub split_mode: SplitMode,
    pub log1p_columns: Vec<String>,

    // model
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel_size: usize,
    pub pool_width: usize,
    pub dropout_rate: f64,
    pub lstm_hidden: usize,

    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub class_weighting: bool,
    pub threshold_grid_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schema = FlowSchema::nf_bot_iot_v1();
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            data: None,
            out: None,
            seed: 42,
            feature_columns: schema.feature_columns,
            label_column: schema.label_column,
            attack_column: schema.attack_column,
            drop_columns: schema.drop_columns,
            parse_mode: ParseMode::Strict,
            window_len: model.window_len,
            stride: 1,
            ratios: SplitRatios::default(),
            split_mode: SplitMode::Stratified,
            log1p_columns: FlowSchema::default_log1p_columns(),
            conv1_filters: model.conv1_filters,
            conv2_filters: model.conv2_filters,
            kernel_size: model.kernel_size,
            pool_width: model.pool_width,
            dropout_rate: model.dropout_rate,
            lstm_hidden: model.lstm_hidden,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            beta1: train.beta1,
            beta2: train.beta2,
            epsilon: train.epsilon,
            class_weighting: train.class_weighting,
            threshold_grid_step: train.threshold_grid_step,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{value}`")))
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "key `{key}`: expected on/off, got `{other}`"
        ))),
    }
}

impl RunConfig {
    /// Apply a single `key = value` setting; unknown keys are errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = Some(PathBuf::from(value.trim())),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "seed" => self.seed = parse_num(key, value)?,
            "feature_columns" => self.feature_columns = parse_list(value),
            "label_column" => self.label_column = value.trim().to_string(),
            "attack_column" => {
                let v = value.trim();
                self.attack_column = if v.is_empty() {
                    None
                } else {
                    Some(v.to_string())
                };
            }
            "drop_columns" => self.drop_columns = parse_list(value),
            "parse_mode" => {
                self.parse_mode = match value.trim() {
                    "strict" => ParseMode::Strict,
                    "lenient" => ParseMode::Lenient,
                    other => {
                        return Err(Error::Config(format!(
                            "key `parse_mode`: expected strict|lenient, got `{other}`"
                        )))
                    }
                }
            }
            "window_len" => self.window_len = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "ratios" => {
                let parts = parse_list(value);
                if parts.len() != 3 {
                    return Err(Error::Config(format!(
                        "key `ratios`: expected three comma-separated values, got `{value}`"
                    )));
                }
                self.ratios = SplitRatios {
                    train: parse_num("ratios", &parts[0])?,
                    val: parse_num("ratios", &parts[1])?,
                    test: parse_num("ratios", &parts[2])?,
                };
            }
            "split_mode" => {
                self.split_mode = match value.trim() {
                    "stratified" => SplitMode::Stratified,
                    "block" => SplitMode::Block,
                    other => {
                        return Err(Error::Config(format!(
                            "key `split_mode`: expected stratified|block, got `{other}`"
                        )))
                    }
                }
            }
            "log1p_columns" => self.log1p_columns = parse_list(value),
            "conv1_filters" => self.conv1_filters = parse_num(key, value)?,
            "conv2_filters" => self.conv2_filters = parse_num(key, value)?,
            "kernel_size" => self.kernel_size = parse_num(key, value)?,
            "pool_width" => self.pool_width = parse_num(key, value)?,
            "dropout_rate" => self.dropout_rate = parse_num(key, value)?,
            "lstm_hidden" => self.lstm_hidden = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "class_weighting" => self.class_weighting = parse_bool(key, value)?,
            "threshold_grid_step" => self.threshold_grid_step = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Defaults overlaid with the settings from a config file. Lines are
    /// `key = value`; `#` starts a comment; blank lines are ignored.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.as_ref().display(),
                    lineno + 1
                )));
            };
            cfg.apply_kv(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn schema(&self) -> FlowSchema {
        FlowSchema {
            feature_columns: self.feature_columns.clone(),
            label_column: self.label_column.clone(),
            attack_column: self.attack_column.clone(),
            drop_columns: self.drop_columns.clone(),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            window_len: self.window_len,
            feature_count: self.schema().feature_count(),
            conv1_filters: self.conv1_filters,
            conv2_filters: self.conv2_filters,
            kernel_size: self.kernel_size,
            pool_width: self.pool_width,
            dropout_rate: self.dropout_rate,
            lstm_hidden: self.lstm_hidden,
            seed: derive_seed(self.seed, 2),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            class_weighting: self.class_weighting,
            threshold_grid_step: self.threshold_grid_step,
            seed: derive_seed(self.seed, 3),
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }

    /// Fail-fast validation of every derived module config.
    pub fn validate(&self) -> Result<()> {
        self.schema().validate()?;
        self.ratios.validate()?;
        if self.stride < 1 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if self.window_len < 1 {
            return Err(Error::Config("window_len must be >= 1".into()));
        }
        self.model_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.train_config().validate()?;
        Ok(())
    }
}
