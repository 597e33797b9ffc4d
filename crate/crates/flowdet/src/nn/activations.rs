//! Elementwise activations and their derivatives.

use super::Mat;

/// Largest representable double strictly below 1. Logistic outputs are
/// clamped into (0, 1) so downstream log/odds arithmetic never sees an
/// exact 0 or 1.
const LOGISTIC_MAX: f64 = 1.0 - 1e-16;

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Derivative of relu; 0 at x = 0 by convention.
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Numerically stable logistic sigmoid, clamped into the open interval (0, 1).
pub fn logistic(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, LOGISTIC_MAX)
}

/// d logistic / dx expressed through the output value p = logistic(x).
pub fn logistic_grad_from_output(p: f64) -> f64 {
    p * (1.0 - p)
}

pub fn relu_mat(m: &Mat) -> Mat {
    let mut out = m.clone();
    for v in out.data_mut() {
        *v = relu(*v);
    }
    out
}

/// Route `upstream` through relu: zero wherever the pre-activation was <= 0.
pub fn relu_mat_backward(pre: &Mat, upstream: &Mat) -> Mat {
    debug_assert_eq!(pre.rows(), upstream.rows());
    debug_assert_eq!(pre.cols(), upstream.cols());
    let mut out = upstream.clone();
    for (v, &x) in out.data_mut().iter_mut().zip(pre.iter()) {
        *v *= relu_grad(x);
    }
    out
}
