//! CNN-BiLSTM model assembly, scoring and checkpointing.
//!
//! The architecture is two conv+pool stages over the window's time axis,
//! dropout, a bidirectional LSTM whose final hidden states form the context
//! vector, and a single logistic output unit:
//!
//! ```text
//! [T x n] -> conv1/relu -> pool -> conv2/relu -> pool -> dropout
//!         -> bilstm -> [2H] -> dense -> logistic -> score in (0,1)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::FlowSchema;
use crate::nn::activations::{relu_mat, relu_mat_backward};
use crate::nn::conv::Conv1dGrads;
use crate::nn::dense::DenseGrads;
use crate::nn::lstm::{BiLstmCache, BiLstmGrads};
use crate::nn::{
    dropout, dropout_backward, logistic, logistic_grad_from_output, maxpool1d, maxpool1d_backward,
    BiLstmParams, Conv1dParams, DenseParams, Mat, Mode, Padding,
};
use crate::preprocess::{FeatureEncoder, SequenceWindow};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Window length T (time steps per input).
    pub window_len: usize,
    /// Feature dimension n per time step.
    pub feature_count: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel_size: usize,
    pub pool_width: usize,
    pub dropout_rate: f64,
    /// Hidden size per LSTM direction; the context vector has twice this.
    pub lstm_hidden: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Conventional small defaults for the given input shape.
    pub fn new(window_len: usize, feature_count: usize) -> Self {
        ModelConfig {
            window_len,
            feature_count,
            conv1_filters: 64,
            conv2_filters: 128,
            kernel_size: 3,
            pool_width: 2,
            dropout_rate: 0.3,
            lstm_hidden: 64,
            seed: 42,
        }
    }

    /// Sequence length after both conv (same padding) + pool stages.
    pub fn pooled_len(&self) -> usize {
        (self.window_len / self.pool_width) / self.pool_width
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_len", self.window_len),
            ("feature_count", self.feature_count),
            ("conv1_filters", self.conv1_filters),
            ("conv2_filters", self.conv2_filters),
            ("kernel_size", self.kernel_size),
            ("lstm_hidden", self.lstm_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.pool_width < 1 {
            return Err(Error::InvalidConfig("pool_width must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.pooled_len() < 1 {
            return Err(Error::InvalidConfig(format!(
                "window_len {} collapses to zero length after two pool stages of width {}",
                self.window_len, self.pool_width
            )));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(10, 10)
    }
}

#[derive(Debug, Clone)]
pub struct CnnBiLstmModel {
    pub conv1: Conv1dParams,
    pub conv2: Conv1dParams,
    pub bilstm: BiLstmParams,
    pub head: DenseParams,
    pub config: ModelConfig,
}

/// Gradient buffers mirroring [`CnnBiLstmModel`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub conv1: Conv1dGrads,
    pub conv2: Conv1dGrads,
    pub bilstm: BiLstmGrads,
    pub head: DenseGrads,
}

/// Intermediates of one training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Mat,
    conv1_pre: Mat,
    pool1_arg: Vec<usize>,
    pool1_out: Mat,
    conv2_pre: Mat,
    pool2_arg: Vec<usize>,
    dropout_mask: Vec<f64>,
    lstm: BiLstmCache,
    context: Vec<f64>,
    score: f64,
}

impl ForwardCache {
    pub fn score(&self) -> f64 {
        self.score
    }
}

/// Allocate the full layer stack with seeded Glorot initialization;
/// deterministic for a fixed config.
pub fn init_model(config: &ModelConfig) -> Result<CnnBiLstmModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let conv1 = Conv1dParams::init(
        config.kernel_size,
        config.feature_count,
        config.conv1_filters,
        Padding::Same,
        &mut rng,
    );
    let conv2 = Conv1dParams::init(
        config.kernel_size,
        config.conv1_filters,
        config.conv2_filters,
        Padding::Same,
        &mut rng,
    );
    let bilstm = BiLstmParams::init(config.conv2_filters, config.lstm_hidden, &mut rng);
    let head = DenseParams::init(2 * config.lstm_hidden, 1, &mut rng);
    Ok(CnnBiLstmModel {
        conv1,
        conv2,
        bilstm,
        head,
        config: config.clone(),
    })
}

fn zeros_model(config: &ModelConfig) -> Result<CnnBiLstmModel> {
    config.validate()?;
    Ok(CnnBiLstmModel {
        conv1: Conv1dParams::zeros(
            config.kernel_size,
            config.feature_count,
            config.conv1_filters,
            Padding::Same,
        ),
        conv2: Conv1dParams::zeros(
            config.kernel_size,
            config.conv1_filters,
            config.conv2_filters,
            Padding::Same,
        ),
        bilstm: BiLstmParams::zeros(config.conv2_filters, config.lstm_hidden),
        head: DenseParams::zeros(2 * config.lstm_hidden, 1),
        config: config.clone(),
    })
}

impl CnnBiLstmModel {
    fn check_window_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if rows != self.config.window_len || cols != self.config.feature_count {
            return Err(Error::ShapeMismatch(format!(
                "window is {}x{}, model expects {}x{}",
                rows, cols, self.config.window_len, self.config.feature_count
            )));
        }
        Ok(())
    }

    fn window_mat(&self, w: &SequenceWindow) -> Result<Mat> {
        self.check_window_shape(w.window_len, w.arity)?;
        Mat::from_vec(w.window_len, w.arity, w.x.clone())
    }

    fn run(&self, x: &Mat, mode: Mode, rng: &mut ChaCha8Rng) -> Result<(f64, ForwardCache)> {
        self.check_window_shape(x.rows(), x.cols())?;
        let conv1_pre = self.conv1.forward(x)?;
        let r1 = relu_mat(&conv1_pre);
        let (pool1_out, pool1_arg) = maxpool1d(&r1, self.config.pool_width)?;
        let conv2_pre = self.conv2.forward(&pool1_out)?;
        let r2 = relu_mat(&conv2_pre);
        let (pool2_out, pool2_arg) = maxpool1d(&r2, self.config.pool_width)?;
        let (dropped, dropout_mask) = dropout(&pool2_out, self.config.dropout_rate, mode, rng)?;
        let (context, lstm) = self.bilstm.forward_cached(&dropped)?;
        let logit = self.head.forward(&context)?[0];
        let score = logistic(logit);
        Ok((
            score,
            ForwardCache {
                x: x.clone(),
                conv1_pre,
                pool1_arg,
                pool1_out,
                conv2_pre,
                pool2_arg,
                dropout_mask,
                lstm,
                context,
                score,
            },
        ))
    }

    /// Forward pass with dropout active; `rng` drives the dropout mask.
    pub fn forward_train(&self, x: &Mat, rng: &mut ChaCha8Rng) -> Result<(f64, ForwardCache)> {
        self.run(x, Mode::Train, rng)
    }

    /// Training-mode forward over a window, with the dropout mask drawn from
    /// a generator seeded by `dropout_seed`. Seeding per window keeps batches
    /// reproducible no matter how the work is scheduled.
    pub fn forward_window_train(
        &self,
        w: &SequenceWindow,
        dropout_seed: u64,
    ) -> Result<(f64, ForwardCache)> {
        let x = self.window_mat(w)?;
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        self.run(&x, Mode::Train, &mut rng)
    }

    /// Deterministic forward pass with dropout disabled.
    pub fn forward_eval(&self, x: &Mat) -> Result<f64> {
        // rng is never consulted in eval mode
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.run(x, Mode::Eval, &mut rng).map(|(p, _)| p)
    }

    /// Backward pass from dLoss/dScore through the whole stack.
    pub fn backward(&self, cache: &ForwardCache, d_score: f64) -> Result<ModelGrads> {
        let d_logit = d_score * logistic_grad_from_output(cache.score);
        let (head_grads, d_context) = self.head.backward(&cache.context, &[d_logit])?;
        let (bilstm_grads, d_dropped) = self.bilstm.backward(&cache.lstm, &d_context)?;
        let d_pool2 = dropout_backward(&d_dropped, &cache.dropout_mask);
        let d_r2 = maxpool1d_backward(&cache.pool2_arg, &d_pool2, cache.conv2_pre.rows());
        let d_conv2_pre = relu_mat_backward(&cache.conv2_pre, &d_r2);
        let (conv2_grads, d_pool1) = self.conv2.backward(&cache.pool1_out, &d_conv2_pre)?;
        let d_r1 = maxpool1d_backward(&cache.pool1_arg, &d_pool1, cache.conv1_pre.rows());
        let d_conv1_pre = relu_mat_backward(&cache.conv1_pre, &d_r1);
        let (conv1_grads, _d_input) = self.conv1.backward(&cache.x, &d_conv1_pre)?;
        Ok(ModelGrads {
            conv1: conv1_grads,
            conv2: conv2_grads,
            bilstm: bilstm_grads,
            head: head_grads,
        })
    }

    /// Score windows in eval mode (dropout off). One score per window, in
    /// input order; windows are independent, so batching cannot change the
    /// per-window result.
    pub fn predict_proba(&self, windows: &[SequenceWindow]) -> Result<Vec<f64>> {
        windows
            .par_iter()
            .map(|w| {
                let x = self.window_mat(w)?;
                self.forward_eval(&x)
            })
            .collect()
    }

    /// Named parameter blocks with shapes, in checkpoint order.
    pub fn param_blocks(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let c = &self.config;
        let mut blocks: Vec<(String, Vec<usize>, &[f64])> = vec![
            (
                "conv1.kernel".into(),
                vec![c.kernel_size, c.feature_count, c.conv1_filters],
                &self.conv1.kernel,
            ),
            ("conv1.bias".into(), vec![c.conv1_filters], &self.conv1.bias),
            (
                "conv2.kernel".into(),
                vec![c.kernel_size, c.conv1_filters, c.conv2_filters],
                &self.conv2.kernel,
            ),
            ("conv2.bias".into(), vec![c.conv2_filters], &self.conv2.bias),
        ];
        let d = c.conv2_filters;
        let h = c.lstm_hidden;
        for (dir, cell) in [("fwd", &self.bilstm.fwd), ("bwd", &self.bilstm.bwd)] {
            for (gate, params) in [
                ("input_gate", &cell.input_gate),
                ("forget_gate", &cell.forget_gate),
                ("output_gate", &cell.output_gate),
                ("candidate", &cell.candidate),
            ] {
                blocks.push((
                    format!("bilstm.{dir}.{gate}.w_x"),
                    vec![d, h],
                    params.w_x.data(),
                ));
                blocks.push((
                    format!("bilstm.{dir}.{gate}.w_h"),
                    vec![h, h],
                    params.w_h.data(),
                ));
                blocks.push((format!("bilstm.{dir}.{gate}.bias"), vec![h], &params.b));
            }
        }
        blocks.push((
            "head.weight".into(),
            vec![2 * h, 1],
            self.head.weight.data(),
        ));
        blocks.push(("head.bias".into(), vec![1], &self.head.bias));
        blocks
    }

    /// Mutable views of the parameter blocks, in the same order as
    /// [`param_blocks`](Self::param_blocks).
    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let CnnBiLstmModel {
            conv1,
            conv2,
            bilstm,
            head,
            ..
        } = self;
        let mut blocks: Vec<&mut [f64]> = vec![
            &mut conv1.kernel,
            &mut conv1.bias,
            &mut conv2.kernel,
            &mut conv2.bias,
        ];
        for cell in [&mut bilstm.fwd, &mut bilstm.bwd] {
            for gate in [
                &mut cell.input_gate,
                &mut cell.forget_gate,
                &mut cell.output_gate,
                &mut cell.candidate,
            ] {
                blocks.push(gate.w_x.data_mut());
                blocks.push(gate.w_h.data_mut());
                blocks.push(&mut gate.b);
            }
        }
        blocks.push(head.weight.data_mut());
        blocks.push(&mut head.bias);
        blocks
    }
}

impl ModelGrads {
    pub fn zeros_like(model: &CnnBiLstmModel) -> Self {
        ModelGrads {
            conv1: model.conv1.grads(),
            conv2: model.conv2.grads(),
            bilstm: model.bilstm.grads(),
            head: model.head.grads(),
        }
    }

    /// Gradient blocks in the same order as the model's parameter blocks.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut blocks: Vec<&[f64]> = vec![
            &self.conv1.kernel,
            &self.conv1.bias,
            &self.conv2.kernel,
            &self.conv2.bias,
        ];
        for cell in [&self.bilstm.fwd, &self.bilstm.bwd] {
            for gate in [
                &cell.input_gate,
                &cell.forget_gate,
                &cell.output_gate,
                &cell.candidate,
            ] {
                blocks.push(gate.w_x.data());
                blocks.push(gate.w_h.data());
                blocks.push(&gate.b);
            }
        }
        blocks.push(self.head.weight.data());
        blocks.push(&self.head.bias);
        blocks
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let ModelGrads {
            conv1,
            conv2,
            bilstm,
            head,
        } = self;
        let mut blocks: Vec<&mut [f64]> = vec![
            &mut conv1.kernel,
            &mut conv1.bias,
            &mut conv2.kernel,
            &mut conv2.bias,
        ];
        for cell in [&mut bilstm.fwd, &mut bilstm.bwd] {
            for gate in [
                &mut cell.input_gate,
                &mut cell.forget_gate,
                &mut cell.output_gate,
                &mut cell.candidate,
            ] {
                blocks.push(gate.w_x.data_mut());
                blocks.push(gate.w_h.data_mut());
                blocks.push(&mut gate.b);
            }
        }
        blocks.push(head.weight.data_mut());
        blocks.push(&mut head.bias);
        blocks
    }

    /// Elementwise accumulate another gradient set into this one.
    pub fn accumulate(&mut self, other: &ModelGrads) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            debug_assert_eq!(dst.len(), src.len());
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// Everything needed to reproduce scoring: model parameters, fitted encoder,
/// source schema, window stride and the tuned decision threshold.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: CnnBiLstmModel,
    pub encoder: FeatureEncoder,
    pub schema: FlowSchema,
    pub stride: usize,
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamBlockFile {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    schema: FlowSchema,
    stride: usize,
    encoder: FeatureEncoder,
    threshold: f64,
    params: Vec<ParamBlockFile>,
}

impl Checkpoint {
    pub fn new(
        model: CnnBiLstmModel,
        encoder: FeatureEncoder,
        schema: FlowSchema,
        stride: usize,
        threshold: f64,
    ) -> Self {
        Checkpoint {
            model,
            encoder,
            schema,
            stride,
            threshold,
        }
    }

    /// Serialize to a single JSON document (atomically: temp file + rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.model.config.clone(),
            schema: self.schema.clone(),
            stride: self.stride,
            encoder: self.encoder.clone(),
            threshold: self.threshold,
            params: self
                .model
                .param_blocks()
                .into_iter()
                .map(|(name, shape, data)| ParamBlockFile {
                    name,
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_string(&file)
            .map_err(|e| Error::CorruptCheckpoint(format!("serialize: {e}")))?;
        crate::util::write_atomic(path.as_ref(), json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let bytes = std::fs::read(path.as_ref())?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| Error::CorruptCheckpoint(format!("not valid JSON: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CorruptCheckpoint("missing format_version".into()))?;
        if version != CHECKPOINT_FORMAT_VERSION as u64 {
            return Err(Error::VersionMismatch {
                found: version as u32,
                supported: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let file: CheckpointFile = serde_json::from_value(value)
            .map_err(|e| Error::CorruptCheckpoint(format!("schema: {e}")))?;
        if !(0.0..=1.0).contains(&file.threshold) {
            return Err(Error::CorruptCheckpoint(format!(
                "threshold {} outside [0, 1]",
                file.threshold
            )));
        }
        if file.encoder.arity() != file.config.feature_count {
            return Err(Error::CorruptCheckpoint(format!(
                "encoder arity {} does not match config feature_count {}",
                file.encoder.arity(),
                file.config.feature_count
            )));
        }
        if file.schema.feature_count() != file.config.feature_count {
            return Err(Error::CorruptCheckpoint(format!(
                "schema has {} active features, config expects {}",
                file.schema.feature_count(),
                file.config.feature_count
            )));
        }
        if file.stride == 0 {
            return Err(Error::CorruptCheckpoint("stride must be >= 1".into()));
        }

        let mut model =
            zeros_model(&file.config).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let expected: Vec<(String, Vec<usize>, usize)> = model
            .param_blocks()
            .into_iter()
            .map(|(name, shape, data)| (name, shape, data.len()))
            .collect();
        if file.params.len() != expected.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "{} parameter blocks, expected {}",
                file.params.len(),
                expected.len()
            )));
        }
        let mut targets = model.param_blocks_mut();
        for (block, (name, shape, len)) in file.params.iter().zip(&expected) {
            if &block.name != name {
                return Err(Error::CorruptCheckpoint(format!(
                    "unexpected block `{}` (expected `{name}`)",
                    block.name
                )));
            }
            if &block.shape != shape || block.data.len() != *len {
                return Err(Error::CorruptCheckpoint(format!(
                    "block `{name}` has shape {:?}/{} values, expected {shape:?}/{len}",
                    block.shape,
                    block.data.len()
                )));
            }
        }
        for (target, block) in targets.iter_mut().zip(&file.params) {
            target.copy_from_slice(&block.data);
        }
        drop(targets);
        Ok(Checkpoint {
            model,
            encoder: file.encoder,
            schema: file.schema,
            stride: file.stride,
            threshold: file.threshold,
        })
    }
}
