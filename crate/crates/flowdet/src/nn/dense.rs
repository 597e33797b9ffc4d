//! Fully-connected affine layer.

use rand::Rng;

use super::{glorot_uniform, Mat};
use crate::error::{Error, Result};

/// Affine map `out = x^T W + b` with `W: [in x out]`.
#[derive(Debug, Clone)]
pub struct DenseParams {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseParams {
            weight: Mat::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(in_dim, out_dim);
        glorot_uniform(p.weight.data_mut(), in_dim, out_dim, rng);
        p
    }

    pub fn grads(&self) -> DenseGrads {
        DenseGrads {
            weight: Mat::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "dense expects input of length {}, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.weight.row(i)) {
                *o += xi * w;
            }
        }
        Ok(out)
    }

    /// Gradients are exact for the linear map: dW = x (outer) upstream,
    /// db = upstream, dx = W. upstream.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(DenseGrads, Vec<f64>)> {
        self.check(x)?;
        if upstream.len() != self.out_dim() {
            return Err(Error::ShapeMismatch(format!(
                "dense upstream has length {}, expected {}",
                upstream.len(),
                self.out_dim()
            )));
        }
        let mut grads = self.grads();
        grads.bias.copy_from_slice(upstream);
        let mut dx = vec![0.0; x.len()];
        for (i, &xi) in x.iter().enumerate() {
            let w_row = self.weight.row(i);
            let dw_row = grads.weight.row_mut(i);
            let mut acc = 0.0;
            for ((dw, &w), &g) in dw_row.iter_mut().zip(w_row).zip(upstream) {
                *dw = xi * g;
                acc += w * g;
            }
            dx[i] = acc;
        }
        Ok((grads, dx))
    }
}
