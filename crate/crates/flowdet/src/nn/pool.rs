//! Non-overlapping max pooling over the time axis.

use super::Mat;
use crate::error::{Error, Result};

/// Pool `[L x C]` down to `[floor(L/width) x C]` per channel; stride equals
/// `width`, trailing remainder rows are dropped. Returns the pooled matrix
/// and, per output element, the input row index that won (ties go to the
/// earliest row, which is where the gradient routes).
pub fn maxpool1d(input: &Mat, width: usize) -> Result<(Mat, Vec<usize>)> {
    if input.rows() < width {
        return Err(Error::InputTooShort {
            len: input.rows(),
            required: width,
        });
    }
    let l_out = input.rows() / width;
    let cols = input.cols();
    let mut out = Mat::zeros(l_out, cols);
    let mut argmax = vec![0usize; l_out * cols];
    for i in 0..l_out {
        for c in 0..cols {
            let mut best_row = i * width;
            let mut best = input.get(best_row, c);
            for r in i * width + 1..(i + 1) * width {
                let v = input.get(r, c);
                if v > best {
                    best = v;
                    best_row = r;
                }
            }
            out.set(i, c, best);
            argmax[i * cols + c] = best_row;
        }
    }
    Ok((out, argmax))
}

/// Route each upstream gradient to the argmax position recorded by the
/// forward pass; all other positions get zero.
pub fn maxpool1d_backward(argmax: &[usize], upstream: &Mat, input_rows: usize) -> Mat {
    let cols = upstream.cols();
    let mut d_input = Mat::zeros(input_rows, cols);
    for i in 0..upstream.rows() {
        for c in 0..cols {
            let r = argmax[i * cols + c];
            *d_input.row_mut(r).get_mut(c).unwrap() += upstream.get(i, c);
        }
    }
    d_input
}
