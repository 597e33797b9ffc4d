//! Inverted dropout.

use rand::Rng;

use super::{Mat, Mode};
use crate::error::{Error, Result};

/// Apply inverted dropout. In train mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1/(1-rate)`; in eval mode
/// the input passes through unchanged. Returns the output together with the
/// scaled mask the backward pass multiplies by.
pub fn dropout<R: Rng>(input: &Mat, rate: f64, mode: Mode, rng: &mut R) -> Result<(Mat, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::BadRate(rate));
    }
    let n = input.rows() * input.cols();
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), vec![1.0; n]));
    }
    let scale = 1.0 / (1.0 - rate);
    let mut mask = vec![0.0; n];
    for m in mask.iter_mut() {
        if rng.random::<f64>() >= rate {
            *m = scale;
        }
    }
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask.iter()) {
        *v *= m;
    }
    Ok((out, mask))
}

pub fn dropout_backward(upstream: &Mat, mask: &[f64]) -> Mat {
    let mut out = upstream.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask.iter()) {
        *v *= m;
    }
    out
}
