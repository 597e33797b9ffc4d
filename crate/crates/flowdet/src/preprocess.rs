//! Feature normalization, window reconstruction and dataset splitting.
//!
//! The encoder is min-max scaling to `[0, 1]` fitted on training data, with
//! an optional `log(1+x)` transform for heavy-tailed counter columns.
//! Windows are built over the ordered record stream first and then split;
//! stratified splitting apportions each class across train/val/test by the
//! largest-remainder rule and shuffles with a seeded generator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FlowRecord, FlowSchema};
use crate::nn::derive_seed;

/// Per-feature min-max scaler with optional log1p pre-transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub log1p_mask: Vec<bool>,
    pub fitted: bool,
}

impl FeatureEncoder {
    /// Identity encoder for inputs that are already in `[0, 1]`.
    pub fn identity(arity: usize) -> Self {
        FeatureEncoder {
            mins: vec![0.0; arity],
            maxs: vec![1.0; arity],
            log1p_mask: vec![false; arity],
            fitted: true,
        }
    }

    pub fn arity(&self) -> usize {
        self.mins.len()
    }

    #[inline]
    fn pre(&self, j: usize, v: f64) -> f64 {
        if self.log1p_mask[j] {
            v.ln_1p()
        } else {
            v
        }
    }

    /// Map one raw feature vector into `[0, 1]^n` in place. Constant
    /// features map to 0; values outside the fitted range are clipped.
    pub fn transform_row(&self, row: &mut [f64]) -> Result<()> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        if row.len() != self.arity() {
            return Err(Error::ArityMismatch {
                expected: self.arity(),
                found: row.len(),
            });
        }
        for (j, v) in row.iter_mut().enumerate() {
            let span = self.maxs[j] - self.mins[j];
            *v = if span == 0.0 {
                0.0
            } else {
                // max/min rather than clamp: a NaN (e.g. log1p of v <= -1)
                // lands at 0 instead of propagating
                #[allow(clippy::manual_clamp)]
                ((self.pre(j, *v) - self.mins[j]) / span).max(0.0).min(1.0)
            };
        }
        Ok(())
    }
}

/// Fit per-feature min/max over the supplied records (after log1p where
/// masked). `log1p_columns` names which active feature columns get the log
/// transform; unknown names are ignored.
pub fn fit_encoder(
    records: &[FlowRecord],
    schema: &FlowSchema,
    log1p_columns: &[String],
) -> Result<FeatureEncoder> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let active = schema.active_features();
    let arity = active.len();
    let log1p_mask: Vec<bool> = active
        .iter()
        .map(|name| log1p_columns.iter().any(|c| c == name))
        .collect();
    let mut enc = FeatureEncoder {
        mins: vec![f64::INFINITY; arity],
        maxs: vec![f64::NEG_INFINITY; arity],
        log1p_mask,
        fitted: false,
    };
    for rec in records {
        if rec.features.len() != arity {
            return Err(Error::ArityMismatch {
                expected: arity,
                found: rec.features.len(),
            });
        }
        for (j, &v) in rec.features.iter().enumerate() {
            let v = enc.pre(j, v);
            if v < enc.mins[j] {
                enc.mins[j] = v;
            }
            if v > enc.maxs[j] {
                enc.maxs[j] = v;
            }
        }
    }
    enc.fitted = true;
    Ok(enc)
}

/// Transform records into a normalized feature matrix (one row per record).
pub fn transform_features(records: &[FlowRecord], enc: &FeatureEncoder) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let mut row = rec.features.clone();
        enc.transform_row(&mut row)?;
        out.push(row);
    }
    Ok(out)
}

/// Apply the encoder to every row of every window in place. Used when
/// windows are built over raw values first and normalized after the encoder
/// has been fitted on the training portion.
pub fn transform_windows(windows: &mut [SequenceWindow], enc: &FeatureEncoder) -> Result<()> {
    for w in windows.iter_mut() {
        let arity = w.arity;
        for t in 0..w.window_len {
            enc.transform_row(&mut w.x[t * arity..(t + 1) * arity])?;
        }
    }
    Ok(())
}

/// A fixed-length slice of the flow stream: `window_len` consecutive feature
/// vectors labeled by the final row.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    /// Row-major `[window_len x arity]` feature matrix, oldest row first.
    pub x: Vec<f64>,
    pub window_len: usize,
    pub arity: usize,
    /// Label of the final row.
    pub label: u8,
    /// Index of the final row in the source feature matrix.
    pub origin_index: usize,
}

impl SequenceWindow {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.x[t * self.arity..(t + 1) * self.arity]
    }
}

/// Slide a window of length `window_len` over the feature matrix with the
/// given stride. Windows start at 0, stride, 2*stride, ...; the count is
/// `floor((N - window_len) / stride) + 1`.
pub fn build_windows(
    features: &[Vec<f64>],
    labels: &[u8],
    window_len: usize,
    stride: usize,
) -> Result<Vec<SequenceWindow>> {
    assert!(
        window_len >= 1 && stride >= 1,
        "window_len and stride must be >= 1"
    );
    let n = features.len();
    if labels.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} feature rows vs {} labels",
            n,
            labels.len()
        )));
    }
    if n < window_len {
        return Err(Error::TooFewRecords {
            needed: window_len,
            found: n,
        });
    }
    let arity = features[0].len();
    let count = (n - window_len) / stride + 1;
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride;
        let end = start + window_len;
        let mut x = Vec::with_capacity(window_len * arity);
        for row in &features[start..end] {
            if row.len() != arity {
                return Err(Error::ArityMismatch {
                    expected: arity,
                    found: row.len(),
                });
            }
            x.extend_from_slice(row);
        }
        windows.push(SequenceWindow {
            x,
            window_len,
            arity,
            label: labels[end - 1],
            origin_index: end - 1,
        });
    }
    Ok(windows)
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&r| r <= 0.0 || !r.is_finite()) {
            return Err(Error::BadRatios(format!(
                "{self:?}: all ratios must be positive"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadRatios(format!("{self:?}: sum {sum} != 1")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Allocate `count` items to the three splits by largest remainder;
/// remainder ties go in train -> val -> test order.
fn apportion(count: usize, ratios: &SplitRatios) -> [usize; 3] {
    let r = ratios.as_array();
    // snap products that are integers up to fp drift, so floor/remainder
    // behave like exact arithmetic (0.7 * 10 must count as 7, not 6.99...)
    let exact: Vec<f64> = r
        .iter()
        .map(|ri| {
            let e = ri * count as f64;
            if (e - e.round()).abs() < 1e-9 {
                e.round()
            } else {
                e
            }
        })
        .collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // stable sort keeps the train -> val -> test tie order
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    for i in 0..count - assigned {
        alloc[order[i % 3]] += 1;
    }
    [alloc[0], alloc[1], alloc[2]]
}

/// Disjoint window splits with the provenance needed to reproduce them.
#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: Vec<SequenceWindow>,
    pub val: Vec<SequenceWindow>,
    pub test: Vec<SequenceWindow>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl DatasetSplits {
    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Stratified split: per-class largest-remainder apportionment with a seeded
/// uniform shuffle inside each class. Deterministic for fixed inputs.
pub fn stratified_split(
    windows: Vec<SequenceWindow>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplits> {
    ratios.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    // 3 buckets of window indices
    let mut bucket: Vec<Vec<usize>> = vec![Vec::new(), Vec::new(), Vec::new()];
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = windows
            .iter()
            .enumerate()
            .filter(|(_, w)| w.label == class)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64));
        idx.shuffle(&mut rng);
        let alloc = apportion(idx.len(), &ratios);
        let mut cursor = 0;
        for (b, &n) in alloc.iter().enumerate() {
            bucket[b].extend_from_slice(&idx[cursor..cursor + n]);
            cursor += n;
        }
    }
    // materialize in stable (original) order within each split
    for b in bucket.iter_mut() {
        b.sort_unstable();
    }
    let mut slots: Vec<Option<SequenceWindow>> = windows.into_iter().map(Some).collect();
    let take = |ids: &[usize], slots: &mut Vec<Option<SequenceWindow>>| {
        ids.iter()
            .map(|&i| slots[i].take().unwrap())
            .collect::<Vec<_>>()
    };
    let train = take(&bucket[0], &mut slots);
    let val = take(&bucket[1], &mut slots);
    let test = take(&bucket[2], &mut slots);
    Ok(DatasetSplits {
        train,
        val,
        test,
        seed,
        ratios,
    })
}

/// Leak-free alternative: contiguous blocks of the window stream in
/// train -> val -> test order, no shuffling.
pub fn block_split(
    windows: Vec<SequenceWindow>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplits> {
    ratios.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let alloc = apportion(windows.len(), &ratios);
    let mut iter = windows.into_iter();
    let train: Vec<_> = iter.by_ref().take(alloc[0]).collect();
    let val: Vec<_> = iter.by_ref().take(alloc[1]).collect();
    let test: Vec<_> = iter.collect();
    Ok(DatasetSplits {
        train,
        val,
        test,
        seed,
        ratios,
    })
}
