//! Shared test oracles: central finite differences for every layer's
//! backward pass, plus naive counting re-implementations of the metric and
//! threshold-search operations. Everything here recomputes results from
//! definitions and never calls into the code paths it is checking.

// each test binary uses its own subset of these helpers
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowdet::nn::{
    BiLstmParams, Conv1dParams, DenseParams, LstmCellParams, LstmState, Mat, Padding,
};
use flowdet::train::{threshold_grid, weighted_bce};

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor so near-zero gradient pairs are compared on
/// an absolute scale.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| lo + rng.random::<f64>() * (hi - lo))
        .collect()
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat {
    Mat::from_vec(rows, cols, rand_vec(rng, rows * cols, lo, hi)).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

/// Check conv1d parameter and input gradients against central differences
/// over `instances` random instances; returns the worst relative error.
pub fn conv1d_grad_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let c_in = rng.random_range(1..4);
        let c_out = rng.random_range(1..4);
        let k = rng.random_range(1..4);
        let l = rng.random_range(k.max(2)..8);
        let padding = if i % 2 == 0 {
            Padding::Same
        } else {
            Padding::Valid
        };
        let mut params = Conv1dParams::zeros(k, c_in, c_out, padding);
        params.kernel = rand_vec(&mut rng, params.kernel.len(), -1.0, 1.0);
        params.bias = rand_vec(&mut rng, c_out, -1.0, 1.0);
        let input = rand_mat(&mut rng, l, c_in, -1.0, 1.0);
        let l_out = params.output_len(l).unwrap();
        let upstream = rand_mat(&mut rng, l_out, c_out, -1.0, 1.0);

        let loss = |p: &Conv1dParams, x: &Mat| dot(p.forward(x).unwrap().data(), upstream.data());
        let (grads, d_input) = params.backward(&input, &upstream).unwrap();

        for idx in 0..params.kernel.len() {
            let mut plus = params.clone();
            plus.kernel[idx] += FD_STEP;
            let mut minus = params.clone();
            minus.kernel[idx] -= FD_STEP;
            let fd = (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.kernel[idx], fd));
        }
        for idx in 0..params.bias.len() {
            let mut plus = params.clone();
            plus.bias[idx] += FD_STEP;
            let mut minus = params.clone();
            minus.bias[idx] -= FD_STEP;
            let fd = (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.bias[idx], fd));
        }
        for idx in 0..input.data().len() {
            let mut plus = input.clone();
            plus.data_mut()[idx] += FD_STEP;
            let mut minus = input.clone();
            minus.data_mut()[idx] -= FD_STEP;
            let fd = (loss(&params, &plus) - loss(&params, &minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(d_input.data()[idx], fd));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// maxpool1d
// ---------------------------------------------------------------------------

/// Check maxpool input gradients. Inputs are resampled until every pooling
/// group has a clear argmax margin, so the finite-difference step cannot
/// cross a tie.
pub fn maxpool_grad_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let width = 2;
    for _ in 0..instances {
        let cols = rng.random_range(1..4);
        let rows = rng.random_range(2..9);
        let input = loop {
            let m = rand_mat(&mut rng, rows, cols, -1.0, 1.0);
            let mut ok = true;
            for i in 0..rows / width {
                for c in 0..cols {
                    let a = m.get(i * width, c);
                    let b = m.get(i * width + 1, c);
                    if (a - b).abs() < 1e-3 {
                        ok = false;
                    }
                }
            }
            if ok {
                break m;
            }
        };
        let (out, argmax) = flowdet::nn::maxpool1d(&input, width).unwrap();
        let upstream = rand_mat(&mut rng, out.rows(), cols, -1.0, 1.0);
        let d_input = flowdet::nn::maxpool1d_backward(&argmax, &upstream, rows);
        let loss = |x: &Mat| {
            let (o, _) = flowdet::nn::maxpool1d(x, width).unwrap();
            dot(o.data(), upstream.data())
        };
        for idx in 0..input.data().len() {
            let mut plus = input.clone();
            plus.data_mut()[idx] += FD_STEP;
            let mut minus = input.clone();
            minus.data_mut()[idx] -= FD_STEP;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(d_input.data()[idx], fd));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// lstm cell
// ---------------------------------------------------------------------------

fn cell_buffers(cell: &mut LstmCellParams) -> Vec<&mut [f64]> {
    let LstmCellParams {
        input_gate,
        forget_gate,
        output_gate,
        candidate,
    } = cell;
    let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
    for gate in [input_gate, forget_gate, output_gate, candidate] {
        out.push(gate.w_x.data_mut());
        out.push(gate.w_h.data_mut());
        out.push(&mut gate.b);
    }
    out
}

fn cell_grad_buffers(grads: &flowdet::nn::LstmCellGrads) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::with_capacity(12);
    for gate in [
        &grads.input_gate,
        &grads.forget_gate,
        &grads.output_gate,
        &grads.candidate,
    ] {
        out.push(gate.w_x.data());
        out.push(gate.w_h.data());
        out.push(&gate.b);
    }
    out
}

fn random_cell(rng: &mut ChaCha8Rng, d: usize, h: usize) -> LstmCellParams {
    let mut cell = LstmCellParams::zeros(d, h);
    for buf in cell_buffers(&mut cell) {
        for v in buf.iter_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
    }
    cell
}

/// Check one gated update: gradients for all twelve parameter blocks plus
/// x, h_prev and c_prev.
pub fn lstm_cell_grad_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let d = rng.random_range(1..4);
        let h = rng.random_range(1..4);
        let cell = random_cell(&mut rng, d, h);
        let x = rand_vec(&mut rng, d, -1.0, 1.0);
        let prev = LstmState {
            h: rand_vec(&mut rng, h, -1.0, 1.0),
            c: rand_vec(&mut rng, h, -1.0, 1.0),
        };
        let u_h = rand_vec(&mut rng, h, -1.0, 1.0);
        let u_c = rand_vec(&mut rng, h, -1.0, 1.0);

        let loss = |cell: &LstmCellParams, x: &[f64], prev: &LstmState| {
            let next = flowdet::nn::lstm_cell_step(cell, x, prev).unwrap();
            dot(&next.h, &u_h) + dot(&next.c, &u_c)
        };

        let (_, cache) = cell.step_cached(&x, &prev).unwrap();
        let mut grads = cell.grads();
        let (dx, dh_prev, dc_prev) = cell.step_backward(&cache, &u_h, &u_c, &mut grads);

        for b in 0..12 {
            let n = {
                let mut tmp = cell.clone();
                cell_buffers(&mut tmp)[b].len()
            };
            for idx in 0..n {
                let mut plus = cell.clone();
                cell_buffers(&mut plus)[b][idx] += FD_STEP;
                let mut minus = cell.clone();
                cell_buffers(&mut minus)[b][idx] -= FD_STEP;
                let fd = (loss(&plus, &x, &prev) - loss(&minus, &x, &prev)) / (2.0 * FD_STEP);
                let analytic = cell_grad_buffers(&grads)[b][idx];
                worst = worst.max(rel_err(analytic, fd));
            }
        }
        for (idx, &a) in dx.iter().enumerate() {
            let mut plus = x.clone();
            plus[idx] += FD_STEP;
            let mut minus = x.clone();
            minus[idx] -= FD_STEP;
            let fd = (loss(&cell, &plus, &prev) - loss(&cell, &minus, &prev)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(a, fd));
        }
        for (idx, &a) in dh_prev.iter().enumerate() {
            let mut plus = prev.clone();
            plus.h[idx] += FD_STEP;
            let mut minus = prev.clone();
            minus.h[idx] -= FD_STEP;
            let fd = (loss(&cell, &x, &plus) - loss(&cell, &x, &minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(a, fd));
        }
        for (idx, &a) in dc_prev.iter().enumerate() {
            let mut plus = prev.clone();
            plus.c[idx] += FD_STEP;
            let mut minus = prev.clone();
            minus.c[idx] -= FD_STEP;
            let fd = (loss(&cell, &x, &plus) - loss(&cell, &x, &minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(a, fd));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// bilstm (backpropagation through time)
// ---------------------------------------------------------------------------

/// Check the full bidirectional pass: every parameter of both cells and the
/// input sequence, backpropagated through time from the context vector.
pub fn bilstm_grad_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let d = rng.random_range(1..4);
        let h = rng.random_range(1..4);
        let t = rng.random_range(1..6);
        let params = BiLstmParams {
            fwd: random_cell(&mut rng, d, h),
            bwd: random_cell(&mut rng, d, h),
        };
        let x = rand_mat(&mut rng, t, d, -1.0, 1.0);
        let u = rand_vec(&mut rng, 2 * h, -1.0, 1.0);

        let loss = |p: &BiLstmParams, x: &Mat| dot(&p.forward(x).unwrap(), &u);

        let (_, cache) = params.forward_cached(&x).unwrap();
        let (grads, d_input) = params.backward(&cache, &u).unwrap();

        for dir in 0..2 {
            for b in 0..12 {
                let n = {
                    let mut tmp = params.clone();
                    let cell = if dir == 0 { &mut tmp.fwd } else { &mut tmp.bwd };
                    cell_buffers(cell)[b].len()
                };
                for idx in 0..n {
                    let mut plus = params.clone();
                    {
                        let cell = if dir == 0 {
                            &mut plus.fwd
                        } else {
                            &mut plus.bwd
                        };
                        cell_buffers(cell)[b][idx] += FD_STEP;
                    }
                    let mut minus = params.clone();
                    {
                        let cell = if dir == 0 {
                            &mut minus.fwd
                        } else {
                            &mut minus.bwd
                        };
                        cell_buffers(cell)[b][idx] -= FD_STEP;
                    }
                    let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * FD_STEP);
                    let dir_grads = if dir == 0 { &grads.fwd } else { &grads.bwd };
                    let analytic = cell_grad_buffers(dir_grads)[b][idx];
                    worst = worst.max(rel_err(analytic, fd));
                }
            }
        }
        for idx in 0..x.data().len() {
            let mut plus = x.clone();
            plus.data_mut()[idx] += FD_STEP;
            let mut minus = x.clone();
            minus.data_mut()[idx] -= FD_STEP;
            let fd = (loss(&params, &plus) - loss(&params, &minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(d_input.data()[idx], fd));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

pub fn dense_grad_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let in_dim = rng.random_range(1..6);
        let out_dim = rng.random_range(1..5);
        let mut params = DenseParams::zeros(in_dim, out_dim);
        for v in params.weight.data_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        params.bias = rand_vec(&mut rng, out_dim, -1.0, 1.0);
        let x = rand_vec(&mut rng, in_dim, -1.0, 1.0);
        let u = rand_vec(&mut rng, out_dim, -1.0, 1.0);

        let loss = |p: &DenseParams, x: &[f64]| dot(&p.forward(x).unwrap(), &u);
        let (grads, dx) = params.backward(&x, &u).unwrap();

        for idx in 0..params.weight.data().len() {
            let mut plus = params.clone();
            plus.weight.data_mut()[idx] += FD_STEP;
            let mut minus = params.clone();
            minus.weight.data_mut()[idx] -= FD_STEP;
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.weight.data()[idx], fd));
        }
        for idx in 0..out_dim {
            let mut plus = params.clone();
            plus.bias[idx] += FD_STEP;
            let mut minus = params.clone();
            minus.bias[idx] -= FD_STEP;
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.bias[idx], fd));
        }
        for idx in 0..in_dim {
            let mut plus = x.clone();
            plus[idx] += FD_STEP;
            let mut minus = x.clone();
            minus[idx] -= FD_STEP;
            let fd = (loss(&params, &plus) - loss(&params, &minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(dx[idx], fd));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// weighted bce
// ---------------------------------------------------------------------------

/// Check dLoss/dScore at interior score values (the clamp never binds).
pub fn bce_grad_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..9);
        let scores = rand_vec(&mut rng, n, 0.05, 0.95);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let weights = (
            0.3 + rng.random::<f64>() * 1.7,
            0.3 + rng.random::<f64>() * 1.7,
        );
        let (_, grad) = weighted_bce(&scores, &labels, weights).unwrap();
        for idx in 0..n {
            let mut plus = scores.clone();
            plus[idx] += FD_STEP;
            let mut minus = scores.clone();
            minus[idx] -= FD_STEP;
            let (lp, _) = weighted_bce(&plus, &labels, weights).unwrap();
            let (lm, _) = weighted_bce(&minus, &labels, weights).unwrap();
            let fd = (lp - lm) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grad[idx], fd));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// naive oracles for metrics and threshold search
// ---------------------------------------------------------------------------

/// Plain per-sample counting, written from the metric definitions.
pub fn naive_metrics(
    scores: &[f64],
    labels: &[u8],
    tau: f64,
) -> (u64, u64, u64, u64, f64, f64, f64, f64) {
    let (mut tp, mut tn, mut fp, mut fneg) = (0u64, 0u64, 0u64, 0u64);
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= tau;
        if pred && y == 1 {
            tp += 1;
        } else if !pred && y == 0 {
            tn += 1;
        } else if pred && y == 0 {
            fp += 1;
        } else {
            fneg += 1;
        }
    }
    let total = (tp + tn + fp + fneg) as f64;
    let accuracy = (tp + tn) as f64 / total;
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fneg > 0 {
        tp as f64 / (tp + fneg) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (tp, tn, fp, fneg, accuracy, precision, recall, f1)
}

/// Brute-force argmax of naive F1 over the threshold grid, smallest
/// threshold on ties.
pub fn brute_force_threshold(scores: &[f64], labels: &[u8], step: f64) -> (f64, f64) {
    let mut best = (0.0, f64::NEG_INFINITY);
    for tau in threshold_grid(step) {
        let (.., f1) = naive_metrics(scores, labels, tau);
        if f1 > best.1 {
            best = (tau, f1);
        }
    }
    best
}
