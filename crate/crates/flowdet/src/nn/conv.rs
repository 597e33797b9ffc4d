//! 1-D convolution over the time axis.
//!
//! Input is `[L x C_in]` (rows = positions, columns = channels), kernels are
//! `[k x C_in x C_out]`, output is `[L' x C_out]` with
//! `out[i][co] = b[co] + sum_j sum_ci in[i + j - pad][ci] * w[j][ci][co]`.
//! Stride is fixed at 1.

use rand::Rng;

use super::{glorot_uniform, Mat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so the output length equals the input length; for even k the
    /// extra zero goes on the right.
    Same,
    /// No padding; output length is `L - k + 1`.
    Valid,
}

#[derive(Debug, Clone)]
pub struct Conv1dParams {
    /// Kernel weights, layout `[k][c_in][c_out]` flattened row-major.
    pub kernel: Vec<f64>,
    /// Per-output-channel bias.
    pub bias: Vec<f64>,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub padding: Padding,
}

/// Gradient buffers matching [`Conv1dParams`].
#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1dParams {
    pub fn zeros(
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
    ) -> Self {
        Conv1dParams {
            kernel: vec![0.0; kernel_size * in_channels * out_channels],
            bias: vec![0.0; out_channels],
            kernel_size,
            in_channels,
            out_channels,
            padding,
        }
    }

    /// Glorot-uniform kernel, zero bias.
    pub fn init<R: Rng>(
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(kernel_size, in_channels, out_channels, padding);
        glorot_uniform(
            &mut p.kernel,
            kernel_size * in_channels,
            kernel_size * out_channels,
            rng,
        );
        p
    }

    pub fn grads(&self) -> Conv1dGrads {
        Conv1dGrads {
            kernel: vec![0.0; self.kernel.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    #[inline]
    fn w_slice(&self, j: usize, ci: usize) -> &[f64] {
        let base = (j * self.in_channels + ci) * self.out_channels;
        &self.kernel[base..base + self.out_channels]
    }

    fn pad_left(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel_size - 1) / 2,
            Padding::Valid => 0,
        }
    }

    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        match self.padding {
            Padding::Same => Ok(input_len),
            Padding::Valid => {
                if input_len < self.kernel_size {
                    Err(Error::InputTooShort {
                        len: input_len,
                        required: self.kernel_size,
                    })
                } else {
                    Ok(input_len - self.kernel_size + 1)
                }
            }
        }
    }

    fn check_input(&self, input: &Mat) -> Result<usize> {
        if input.cols() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv1d expects {} input channels, got {}",
                self.in_channels,
                input.cols()
            )));
        }
        self.output_len(input.rows())
    }

    pub fn forward(&self, input: &Mat) -> Result<Mat> {
        let l_out = self.check_input(input)?;
        let pad = self.pad_left();
        let c_out = self.out_channels;
        let mut out = Mat::zeros(l_out, c_out);
        for i in 0..l_out {
            let out_row = out.row_mut(i);
            out_row.copy_from_slice(&self.bias);
            for j in 0..self.kernel_size {
                // input position for tap j; skip taps that land in the padding
                let p = i + j;
                if p < pad || p - pad >= input.rows() {
                    continue;
                }
                let in_row = input.row(p - pad);
                for (ci, &x) in in_row.iter().enumerate() {
                    let w = self.w_slice(j, ci);
                    for co in 0..c_out {
                        out_row[co] += x * w[co];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Backward pass: given dLoss/dOutput, produce parameter gradients and
    /// dLoss/dInput. `input` must be the same matrix the forward pass saw.
    pub fn backward(&self, input: &Mat, upstream: &Mat) -> Result<(Conv1dGrads, Mat)> {
        let l_out = self.check_input(input)?;
        if upstream.rows() != l_out || upstream.cols() != self.out_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv1d upstream is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                l_out,
                self.out_channels
            )));
        }
        let pad = self.pad_left();
        let c_out = self.out_channels;
        let mut grads = self.grads();
        let mut d_input = Mat::zeros(input.rows(), input.cols());
        for i in 0..l_out {
            let up_row = upstream.row(i);
            for (co, &g) in up_row.iter().enumerate() {
                grads.bias[co] += g;
            }
            for j in 0..self.kernel_size {
                let p = i + j;
                if p < pad || p - pad >= input.rows() {
                    continue;
                }
                let r = p - pad;
                let in_row = input.row(r);
                let d_row = d_input.row_mut(r);
                for ci in 0..self.in_channels {
                    let x = in_row[ci];
                    let base = (j * self.in_channels + ci) * c_out;
                    let w = &self.kernel[base..base + c_out];
                    let dw = &mut grads.kernel[base..base + c_out];
                    let mut acc = 0.0;
                    for co in 0..c_out {
                        let g = up_row[co];
                        dw[co] += x * g;
                        acc += w[co] * g;
                    }
                    d_row[ci] += acc;
                }
            }
        }
        Ok((grads, d_input))
    }
}
