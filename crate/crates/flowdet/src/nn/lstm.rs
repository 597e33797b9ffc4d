//! LSTM cell and bidirectional sequence pass.
//!
//! Gate layout follows the standard formulation: input gate `i`, forget
//! gate `f`, output gate `o` and candidate `g`, each an affine map of the
//! step input and the previous hidden state:
//!
//! ```text
//! i,f,o = logistic(W_x x + W_h h_prev + b)     g = tanh(...)
//! c = f . c_prev + i . g                       h = o . tanh(c)
//! ```
//!
//! The bidirectional pass runs one cell over the rows in order and a second
//! cell over the rows in reverse, then concatenates the two final hidden
//! states (forward half first) into the context vector.

use rand::Rng;

use super::{glorot_uniform, Mat};
use crate::error::{Error, Result};

/// Weights for a single gate: `w_x: [D x H]`, `w_h: [H x H]`, `b: [H]`.
#[derive(Debug, Clone)]
pub struct GateParams {
    pub w_x: Mat,
    pub w_h: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GateGrads {
    pub w_x: Mat,
    pub w_h: Mat,
    pub b: Vec<f64>,
}

impl GateParams {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GateParams {
            w_x: Mat::zeros(input_dim, hidden_dim),
            w_h: Mat::zeros(hidden_dim, hidden_dim),
            b: vec![0.0; hidden_dim],
        }
    }

    fn init<R: Rng>(input_dim: usize, hidden_dim: usize, bias: f64, rng: &mut R) -> Self {
        let mut g = Self::zeros(input_dim, hidden_dim);
        glorot_uniform(g.w_x.data_mut(), input_dim, hidden_dim, rng);
        glorot_uniform(g.w_h.data_mut(), hidden_dim, hidden_dim, rng);
        g.b.fill(bias);
        g
    }

    fn grads(&self) -> GateGrads {
        GateGrads {
            w_x: Mat::zeros(self.w_x.rows(), self.w_x.cols()),
            w_h: Mat::zeros(self.w_h.rows(), self.w_h.cols()),
            b: vec![0.0; self.b.len()],
        }
    }

    /// b + x^T w_x + h_prev^T w_h
    fn affine(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut a = self.b.clone();
        for (d, &xd) in x.iter().enumerate() {
            for (av, &w) in a.iter_mut().zip(self.w_x.row(d)) {
                *av += xd * w;
            }
        }
        for (k, &hk) in h_prev.iter().enumerate() {
            for (av, &w) in a.iter_mut().zip(self.w_h.row(k)) {
                *av += hk * w;
            }
        }
        a
    }

    /// Accumulate gradients for this gate given the pre-activation gradient
    /// `da`, adding the input/hidden contributions to `dx` and `dh_prev`.
    fn accumulate(
        &self,
        grads: &mut GateGrads,
        x: &[f64],
        h_prev: &[f64],
        da: &[f64],
        dx: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        for (db, &g) in grads.b.iter_mut().zip(da) {
            *db += g;
        }
        for (d, &xd) in x.iter().enumerate() {
            let w_row = self.w_x.row(d);
            let dw_row = grads.w_x.row_mut(d);
            let mut acc = 0.0;
            for ((dw, &w), &g) in dw_row.iter_mut().zip(w_row).zip(da) {
                *dw += xd * g;
                acc += w * g;
            }
            dx[d] += acc;
        }
        for (k, &hk) in h_prev.iter().enumerate() {
            let w_row = self.w_h.row(k);
            let dw_row = grads.w_h.row_mut(k);
            let mut acc = 0.0;
            for ((dw, &w), &g) in dw_row.iter_mut().zip(w_row).zip(da) {
                *dw += hk * g;
                acc += w * g;
            }
            dh_prev[k] += acc;
        }
    }
}

/// One LSTM cell: four gates sized for input dimension D and hidden
/// dimension H.
#[derive(Debug, Clone)]
pub struct LstmCellParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    pub candidate: GateParams,
}

#[derive(Debug, Clone)]
pub struct LstmCellGrads {
    pub input_gate: GateGrads,
    pub forget_gate: GateGrads,
    pub output_gate: GateGrads,
    pub candidate: GateGrads,
}

/// Hidden and cell state of one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Intermediate values of one cell step, kept for backpropagation through
/// time.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmCellParams {
            input_gate: GateParams::zeros(input_dim, hidden_dim),
            forget_gate: GateParams::zeros(input_dim, hidden_dim),
            output_gate: GateParams::zeros(input_dim, hidden_dim),
            candidate: GateParams::zeros(input_dim, hidden_dim),
        }
    }

    /// Glorot-uniform weights; forget-gate bias starts at 1, the rest at 0.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        LstmCellParams {
            input_gate: GateParams::init(input_dim, hidden_dim, 0.0, rng),
            forget_gate: GateParams::init(input_dim, hidden_dim, 1.0, rng),
            output_gate: GateParams::init(input_dim, hidden_dim, 0.0, rng),
            candidate: GateParams::init(input_dim, hidden_dim, 0.0, rng),
        }
    }

    pub fn grads(&self) -> LstmCellGrads {
        LstmCellGrads {
            input_gate: self.input_gate.grads(),
            forget_gate: self.forget_gate.grads(),
            output_gate: self.output_gate.grads(),
            candidate: self.candidate.grads(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_gate.w_x.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_gate.w_x.cols()
    }

    fn check_step(&self, x: &[f64], state: &LstmState) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "lstm step input has length {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        if state.h.len() != self.hidden_dim() || state.c.len() != self.hidden_dim() {
            return Err(Error::ShapeMismatch(format!(
                "lstm state has lengths h={} c={}, expected {}",
                state.h.len(),
                state.c.len(),
                self.hidden_dim()
            )));
        }
        Ok(())
    }

    pub fn step_cached(&self, x: &[f64], prev: &LstmState) -> Result<(LstmState, LstmStepCache)> {
        self.check_step(x, prev)?;
        let h = self.hidden_dim();
        let mut i = self.input_gate.affine(x, &prev.h);
        let mut f = self.forget_gate.affine(x, &prev.h);
        let mut o = self.output_gate.affine(x, &prev.h);
        let mut g = self.candidate.affine(x, &prev.h);
        for v in i.iter_mut() {
            *v = super::logistic(*v);
        }
        for v in f.iter_mut() {
            *v = super::logistic(*v);
        }
        for v in o.iter_mut() {
            *v = super::logistic(*v);
        }
        for v in g.iter_mut() {
            *v = v.tanh();
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut h_next = vec![0.0; h];
        for k in 0..h {
            c[k] = f[k] * prev.c[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h_next[k] = o[k] * tanh_c[k];
        }
        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: prev.h.clone(),
            c_prev: prev.c.clone(),
            i,
            f,
            o,
            g,
            tanh_c,
        };
        Ok((LstmState { h: h_next, c }, cache))
    }

    /// Backward through one step. `dh` and `dc` are the gradients flowing
    /// into this step's outputs; returns (dx, dh_prev, dc_prev) and adds the
    /// parameter contributions into `grads`.
    pub fn step_backward(
        &self,
        cache: &LstmStepCache,
        dh: &[f64],
        dc_in: &[f64],
        grads: &mut LstmCellGrads,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden_dim();
        let mut da_i = vec![0.0; h];
        let mut da_f = vec![0.0; h];
        let mut da_o = vec![0.0; h];
        let mut da_g = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        for k in 0..h {
            let tanh_c = cache.tanh_c[k];
            let dc = dc_in[k] + dh[k] * cache.o[k] * (1.0 - tanh_c * tanh_c);
            let d_o = dh[k] * tanh_c;
            let d_i = dc * cache.g[k];
            let d_g = dc * cache.i[k];
            let d_f = dc * cache.c_prev[k];
            dc_prev[k] = dc * cache.f[k];
            da_i[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
            da_f[k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
            da_o[k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
            da_g[k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
        }
        let mut dx = vec![0.0; self.input_dim()];
        let mut dh_prev = vec![0.0; h];
        self.input_gate.accumulate(
            &mut grads.input_gate,
            &cache.x,
            &cache.h_prev,
            &da_i,
            &mut dx,
            &mut dh_prev,
        );
        self.forget_gate.accumulate(
            &mut grads.forget_gate,
            &cache.x,
            &cache.h_prev,
            &da_f,
            &mut dx,
            &mut dh_prev,
        );
        self.output_gate.accumulate(
            &mut grads.output_gate,
            &cache.x,
            &cache.h_prev,
            &da_o,
            &mut dx,
            &mut dh_prev,
        );
        self.candidate.accumulate(
            &mut grads.candidate,
            &cache.x,
            &cache.h_prev,
            &da_g,
            &mut dx,
            &mut dh_prev,
        );
        (dx, dh_prev, dc_prev)
    }
}

/// Single gated update: returns the next state for input `x` given `prev`.
pub fn lstm_cell_step(params: &LstmCellParams, x: &[f64], prev: &LstmState) -> Result<LstmState> {
    params.step_cached(x, prev).map(|(state, _)| state)
}

/// Forward and backward cells of the bidirectional layer; both share input
/// dimension D and hidden dimension H.
#[derive(Debug, Clone)]
pub struct BiLstmParams {
    pub fwd: LstmCellParams,
    pub bwd: LstmCellParams,
}

#[derive(Debug, Clone)]
pub struct BiLstmGrads {
    pub fwd: LstmCellGrads,
    pub bwd: LstmCellGrads,
}

/// Step caches for both directions; entry `s` of `bwd_steps` corresponds to
/// input row `T - 1 - s`.
#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd_steps: Vec<LstmStepCache>,
    bwd_steps: Vec<LstmStepCache>,
    input_rows: usize,
    input_cols: usize,
}

impl BiLstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        BiLstmParams {
            fwd: LstmCellParams::zeros(input_dim, hidden_dim),
            bwd: LstmCellParams::zeros(input_dim, hidden_dim),
        }
    }

    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        BiLstmParams {
            fwd: LstmCellParams::init(input_dim, hidden_dim, rng),
            bwd: LstmCellParams::init(input_dim, hidden_dim, rng),
        }
    }

    pub fn grads(&self) -> BiLstmGrads {
        BiLstmGrads {
            fwd: self.fwd.grads(),
            bwd: self.bwd.grads(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.fwd.hidden_dim()
    }

    /// Run both directions over `x` and return the context vector
    /// `[h_fwd_final ; h_bwd_final]` of length 2H along with the step caches.
    pub fn forward_cached(&self, x: &Mat) -> Result<(Vec<f64>, BiLstmCache)> {
        if x.rows() == 0 {
            return Err(Error::EmptySequence);
        }
        let t = x.rows();
        let mut fwd_steps = Vec::with_capacity(t);
        let mut state = LstmState::zeros(self.fwd.hidden_dim());
        for r in 0..t {
            let (next, cache) = self.fwd.step_cached(x.row(r), &state)?;
            fwd_steps.push(cache);
            state = next;
        }
        let h_fwd = state.h;

        let mut bwd_steps = Vec::with_capacity(t);
        let mut state = LstmState::zeros(self.bwd.hidden_dim());
        for r in (0..t).rev() {
            let (next, cache) = self.bwd.step_cached(x.row(r), &state)?;
            bwd_steps.push(cache);
            state = next;
        }
        let h_bwd = state.h;

        let mut hc = h_fwd;
        hc.extend_from_slice(&h_bwd);
        Ok((
            hc,
            BiLstmCache {
                fwd_steps,
                bwd_steps,
                input_rows: t,
                input_cols: x.cols(),
            },
        ))
    }

    pub fn forward(&self, x: &Mat) -> Result<Vec<f64>> {
        self.forward_cached(x).map(|(hc, _)| hc)
    }

    /// Backpropagation through time. `d_hc` is dLoss/dContext (length 2H);
    /// only the final hidden state of each direction receives an external
    /// gradient, everything else flows through the recurrence.
    pub fn backward(&self, cache: &BiLstmCache, d_hc: &[f64]) -> Result<(BiLstmGrads, Mat)> {
        let h = self.hidden_dim();
        if d_hc.len() != 2 * h {
            return Err(Error::ShapeMismatch(format!(
                "context gradient has length {}, expected {}",
                d_hc.len(),
                2 * h
            )));
        }
        let mut grads = self.grads();
        let mut d_input = Mat::zeros(cache.input_rows, cache.input_cols);

        let mut dh = d_hc[..h].to_vec();
        let mut dc = vec![0.0; h];
        for s in (0..cache.fwd_steps.len()).rev() {
            let (dx, dh_prev, dc_prev) =
                self.fwd
                    .step_backward(&cache.fwd_steps[s], &dh, &dc, &mut grads.fwd);
            for (dst, &v) in d_input.row_mut(s).iter_mut().zip(&dx) {
                *dst += v;
            }
            dh = dh_prev;
            dc = dc_prev;
        }

        let mut dh = d_hc[h..].to_vec();
        let mut dc = vec![0.0; h];
        for s in (0..cache.bwd_steps.len()).rev() {
            let (dx, dh_prev, dc_prev) =
                self.bwd
                    .step_backward(&cache.bwd_steps[s], &dh, &dc, &mut grads.bwd);
            let row = cache.input_rows - 1 - s;
            for (dst, &v) in d_input.row_mut(row).iter_mut().zip(&dx) {
                *dst += v;
            }
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok((grads, d_input))
    }
}

/// Context vector for the sequence `x`: both directions' final hidden
/// states, forward half first.
pub fn bilstm_forward(params: &BiLstmParams, x: &Mat) -> Result<Vec<f64>> {
    params.forward(x)
}
