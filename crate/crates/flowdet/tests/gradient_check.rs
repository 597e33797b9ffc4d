//! Analytic backward passes vs central finite differences, per layer and
//! end to end through the assembled model.

mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flowdet::model::{init_model, ModelConfig};
use flowdet::nn::{dropout, dropout_backward, Mat, Mode};
use flowdet::train::weighted_bce;

const TOL: f64 = 1e-4;
const INSTANCES: usize = 200;

#[test]
fn conv1d_gradients_match_finite_differences() {
    let worst = conv1d_grad_check(INSTANCES, 101);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn maxpool_gradients_match_finite_differences() {
    let worst = maxpool_grad_check(INSTANCES, 202);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn lstm_cell_gradients_match_finite_differences() {
    let worst = lstm_cell_grad_check(INSTANCES, 303);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn bilstm_bptt_gradients_match_finite_differences() {
    let worst = bilstm_grad_check(INSTANCES, 404);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn dense_gradients_match_finite_differences() {
    let worst = dense_grad_check(INSTANCES, 505);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn weighted_bce_gradients_match_finite_differences() {
    let worst = bce_grad_check(INSTANCES, 606);
    assert!(worst <= 1e-6, "worst relative error {worst}");
}

#[test]
fn dropout_backward_uses_the_forward_mask() {
    // With the mask fixed (same seed), dropout is linear; its input gradient
    // is exactly the scaled mask.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let input = rand_mat(&mut rng, 4, 3, -1.0, 1.0);
    let upstream = rand_mat(&mut rng, 4, 3, -1.0, 1.0);
    for mask_seed in 0..20u64 {
        let p = 0.4;
        let (_, mask) = dropout(
            &input,
            p,
            Mode::Train,
            &mut ChaCha8Rng::seed_from_u64(mask_seed),
        )
        .unwrap();
        let d_input = dropout_backward(&upstream, &mask);
        let loss = |x: &Mat| {
            let (out, _) =
                dropout(x, p, Mode::Train, &mut ChaCha8Rng::seed_from_u64(mask_seed)).unwrap();
            out.iter()
                .zip(upstream.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        for idx in 0..input.data().len() {
            let mut plus = input.clone();
            plus.data_mut()[idx] += FD_STEP;
            let mut minus = input.clone();
            minus.data_mut()[idx] -= FD_STEP;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            assert!(
                rel_err(d_input.data()[idx], fd) <= TOL,
                "mask_seed {mask_seed} idx {idx}"
            );
        }
    }
}

#[test]
fn end_to_end_model_gradient_matches_finite_differences() {
    // T=6, n=3, filters 2/2, H=2, dropout disabled.
    let cfg = ModelConfig {
        window_len: 6,
        feature_count: 3,
        conv1_filters: 2,
        conv2_filters: 2,
        kernel_size: 3,
        pool_width: 2,
        dropout_rate: 0.0,
        lstm_hidden: 2,
        seed: 31,
    };
    let model = init_model(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = rand_mat(&mut rng, 6, 3, 0.0, 1.0);
    let label = 1u8;
    let weights = (1.3, 0.8);

    let loss_of = |m: &flowdet::model::CnnBiLstmModel| {
        let p = m.forward_eval(&x).unwrap();
        weighted_bce(&[p], &[label], weights).unwrap().0
    };

    // analytic: backward from dLoss/dScore
    let mut probe = ChaCha8Rng::seed_from_u64(0);
    let (p, cache) = model.forward_train(&x, &mut probe).unwrap();
    let (_, d_scores) = weighted_bce(&[p], &[label], weights).unwrap();
    let grads = model.backward(&cache, d_scores[0]).unwrap();

    let grad_blocks: Vec<Vec<f64>> = grads.blocks().into_iter().map(|b| b.to_vec()).collect();
    let mut worst = 0.0f64;
    for (b, block) in grad_blocks.iter().enumerate() {
        for (idx, &analytic) in block.iter().enumerate() {
            let mut plus = model.clone();
            plus.param_blocks_mut()[b][idx] += FD_STEP;
            let mut minus = model.clone();
            minus.param_blocks_mut()[b][idx] -= FD_STEP;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic, fd));
        }
    }
    assert!(worst <= TOL, "worst relative error {worst}");
}
