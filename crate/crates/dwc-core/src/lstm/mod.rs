//! From-scratch two-layer LSTM with a linear head, trained by exact
//! backpropagation through time on MSE loss.
//!
//! A cell step computes, with `σ` the logistic sigmoid and `⊗` element-wise:
//!
//! ```text
//! f = σ(W_h_f h + W_i_f x + b_f)        i = σ(W_h_i h + W_i_i x + b_i)
//! c̃ = tanh(W_h_c h + W_i_c x + b_c)     c' = f ⊗ c + i ⊗ c̃
//! o = σ(W_h_o h + W_i_o x + b_o)        h' = tanh(c') ⊗ o
//! ```
//!
//! Layer 1 consumes the window inputs, its full hidden sequence feeds
//! layer 2, and a 2-output dense head with identity activation reads
//! layer 2's final hidden state. All arithmetic is f64 and single-threaded
//! within one training run, so a fixed seed reproduces results bit-exactly.

mod checkpoint;
mod grid;
mod mat;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use grid::{grid_search, write_grid_csv, GridCellResult, GridSpec};
pub use mat::Mat;
pub use train::{
    train, write_history_csv, EpochRecord, Optimizer, TrainConfig, TrainHistory,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// Width of the dense output head: a scaled `(p_x, p_y)` pair.
pub const OUTPUT_DIM: usize = 2;

const STREAM_INIT: u64 = 0x696e6974; // "init"

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights and biases of one LSTM cell with hidden width `H` and input
/// width `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    /// Recurrent weights, `H x H`, one per gate.
    pub w_h_f: Mat,
    pub w_h_i: Mat,
    pub w_h_c: Mat,
    pub w_h_o: Mat,
    /// Input weights, `H x D`, one per gate.
    pub w_i_f: Mat,
    pub w_i_i: Mat,
    pub w_i_c: Mat,
    pub w_i_o: Mat,
    /// Biases, `H` each.
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmCellParams {
            w_h_f: Mat::zeros(hidden, hidden),
            w_h_i: Mat::zeros(hidden, hidden),
            w_h_c: Mat::zeros(hidden, hidden),
            w_h_o: Mat::zeros(hidden, hidden),
            w_i_f: Mat::zeros(hidden, input),
            w_i_i: Mat::zeros(hidden, input),
            w_i_c: Mat::zeros(hidden, input),
            w_i_o: Mat::zeros(hidden, input),
            b_f: vec![0.0; hidden],
            b_i: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h_f.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_i_f.cols()
    }

    fn weight_mats_mut(&mut self) -> [&mut Mat; 8] {
        [
            &mut self.w_h_f,
            &mut self.w_h_i,
            &mut self.w_h_c,
            &mut self.w_h_o,
            &mut self.w_i_f,
            &mut self.w_i_i,
            &mut self.w_i_c,
            &mut self.w_i_o,
        ]
    }

    /// Flat views of every tensor in canonical order (weights then biases).
    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w_h_f.data(),
            self.w_h_i.data(),
            self.w_h_c.data(),
            self.w_h_o.data(),
            self.w_i_f.data(),
            self.w_i_i.data(),
            self.w_i_c.data(),
            self.w_i_o.data(),
            &self.b_f,
            &self.b_i,
            &self.b_c,
            &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_h_f.data_mut(),
            self.w_h_i.data_mut(),
            self.w_h_c.data_mut(),
            self.w_h_o.data_mut(),
            self.w_i_f.data_mut(),
            self.w_i_i.data_mut(),
            self.w_i_c.data_mut(),
            self.w_i_o.data_mut(),
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    pub fn check_shape(&self, hidden: usize, input: usize, name: &str) -> Result<()> {
        for (mat, suffix) in [
            (&self.w_h_f, "w_h_f"),
            (&self.w_h_i, "w_h_i"),
            (&self.w_h_c, "w_h_c"),
            (&self.w_h_o, "w_h_o"),
        ] {
            mat.check_shape(hidden, hidden, &format!("{name}.{suffix}"))?;
        }
        for (mat, suffix) in [
            (&self.w_i_f, "w_i_f"),
            (&self.w_i_i, "w_i_i"),
            (&self.w_i_c, "w_i_c"),
            (&self.w_i_o, "w_i_o"),
        ] {
            mat.check_shape(hidden, input, &format!("{name}.{suffix}"))?;
        }
        for (b, suffix) in [
            (&self.b_f, "b_f"),
            (&self.b_i, "b_i"),
            (&self.b_c, "b_c"),
            (&self.b_o, "b_o"),
        ] {
            if b.len() != hidden {
                return Err(Error::Format(format!(
                    "{name}.{suffix}: expected length {hidden}, got {}",
                    b.len()
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Hidden and cell state of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations stored per consumed time step; required and sufficient for
/// exact BPTT through that step.
#[derive(Debug, Clone)]
pub struct GateCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One LSTM cell step.
pub fn cell_forward(
    params: &LstmCellParams,
    x: &[f64],
    prev: &LstmState,
) -> Result<(LstmState, GateCache)> {
    let hidden = params.hidden_size();
    let input = params.input_size();
    if x.len() != input {
        return Err(Error::argument(format!(
            "input width {} does not match cell input size {input}",
            x.len()
        )));
    }
    if prev.h.len() != hidden || prev.c.len() != hidden {
        return Err(Error::argument("state width does not match cell hidden size"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite cell input".into()));
    }

    let mut pre_f = params.b_f.clone();
    let mut pre_i = params.b_i.clone();
    let mut pre_c = params.b_c.clone();
    let mut pre_o = params.b_o.clone();
    params.w_h_f.matvec_add(&prev.h, &mut pre_f);
    params.w_h_i.matvec_add(&prev.h, &mut pre_i);
    params.w_h_c.matvec_add(&prev.h, &mut pre_c);
    params.w_h_o.matvec_add(&prev.h, &mut pre_o);
    params.w_i_f.matvec_add(x, &mut pre_f);
    params.w_i_i.matvec_add(x, &mut pre_i);
    params.w_i_c.matvec_add(x, &mut pre_c);
    params.w_i_o.matvec_add(x, &mut pre_o);

    let f: Vec<f64> = pre_f.iter().map(|&v| sigmoid(v)).collect();
    let i: Vec<f64> = pre_i.iter().map(|&v| sigmoid(v)).collect();
    let c_tilde: Vec<f64> = pre_c.iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = pre_o.iter().map(|&v| sigmoid(v)).collect();

    let mut c = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        c[j] = f[j] * prev.c[j] + i[j] * c_tilde[j];
        tanh_c[j] = c[j].tanh();
        h[j] = tanh_c[j] * o[j];
    }

    let state = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = GateCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        f,
        i,
        o,
        c_tilde,
        c,
        tanh_c,
        h,
    };
    Ok((state, cache))
}

/// All weights of the two-layer network plus the dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub hidden_units: usize,
    /// First layer; input width is the feature dimension.
    pub layer1: LstmCellParams,
    /// Second layer; input width equals the first layer's hidden width.
    pub layer2: LstmCellParams,
    /// Dense head, `2 x H`.
    pub dense_w: Mat,
    pub dense_b: [f64; OUTPUT_DIM],
}

impl NetworkParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        NetworkParams {
            hidden_units: hidden,
            layer1: LstmCellParams::zeros(hidden, input),
            layer2: LstmCellParams::zeros(hidden, hidden),
            dense_w: Mat::zeros(OUTPUT_DIM, hidden),
            dense_b: [0.0; OUTPUT_DIM],
        }
    }

    /// Seeded initialization: each weight matrix uniform in
    /// `[-1/sqrt(H), 1/sqrt(H)]`, biases zero. Matrices are filled in
    /// canonical tensor order so a seed pins the full parameter set.
    pub fn init(hidden: usize, input: usize, seed: u64) -> Self {
        let mut params = Self::zeros(hidden, input);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_INIT]));
        let mut fill = |mat: &mut Mat| {
            for v in mat.data_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        };
        for mat in params.layer1.weight_mats_mut() {
            fill(mat);
        }
        for mat in params.layer2.weight_mats_mut() {
            fill(mat);
        }
        fill(&mut params.dense_w);
        params
    }

    pub fn input_size(&self) -> usize {
        self.layer1.input_size()
    }

    /// Flat views of every tensor in canonical order: layer 1, layer 2,
    /// dense weights, dense bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.layer1.tensors();
        t.extend(self.layer2.tensors());
        t.push(self.dense_w.data());
        t.push(&self.dense_b);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.layer1.tensors_mut();
        t.extend(self.layer2.tensors_mut());
        t.push(self.dense_w.data_mut());
        t.push(&mut self.dense_b);
        t
    }

    pub fn check_shape(&self) -> Result<()> {
        let h = self.hidden_units;
        if h == 0 {
            return Err(Error::Format("hidden_units must be at least 1".into()));
        }
        self.layer1.check_shape(h, self.layer1.input_size(), "layer1")?;
        self.layer2.check_shape(h, h, "layer2")?;
        self.dense_w.check_shape(OUTPUT_DIM, h, "dense_w")?;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layer1.is_finite() && self.layer2.is_finite() && self.dense_w.is_finite()
            && self.dense_b.iter().all(|v| v.is_finite())
    }
}

/// Per-sample forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SampleCache {
    pub layer1: Vec<GateCache>,
    pub layer2: Vec<GateCache>,
    pub prediction: [f64; OUTPUT_DIM],
}

/// Full forward pass over one window, returning the prediction and the
/// activations needed for BPTT.
pub fn network_forward_cached(
    params: &NetworkParams,
    window: &[f64],
) -> Result<([f64; OUTPUT_DIM], SampleCache)> {
    let input = params.input_size();
    if input == 0 || window.is_empty() || !window.len().is_multiple_of(input) {
        return Err(Error::argument(format!(
            "window length {} is not a positive multiple of the input width {input}",
            window.len()
        )));
    }
    let steps = window.len() / input;
    let hidden = params.hidden_units;

    let mut state1 = LstmState::zeros(hidden);
    let mut state2 = LstmState::zeros(hidden);
    let mut caches1 = Vec::with_capacity(steps);
    let mut caches2 = Vec::with_capacity(steps);
    for t in 0..steps {
        let x = &window[t * input..(t + 1) * input];
        let (next1, cache1) = cell_forward(&params.layer1, x, &state1)?;
        let (next2, cache2) = cell_forward(&params.layer2, &cache1.h, &state2)?;
        state1 = next1;
        state2 = next2;
        caches1.push(cache1);
        caches2.push(cache2);
    }

    let mut prediction = params.dense_b;
    for (j, out) in prediction.iter_mut().enumerate() {
        for k in 0..hidden {
            *out += params.dense_w.at(j, k) * state2.h[k];
        }
    }
    let cache = SampleCache {
        layer1: caches1,
        layer2: caches2,
        prediction,
    };
    Ok((prediction, cache))
}

/// Forward pass without keeping activations.
pub fn network_forward(params: &NetworkParams, window: &[f64]) -> Result<[f64; OUTPUT_DIM]> {
    network_forward_cached(params, window).map(|(pred, _)| pred)
}

/// Mean squared error with divisor N (the row count): the summed squared
/// component error of each row, averaged over rows.
pub fn mse(y: &[[f64; OUTPUT_DIM]], y_hat: &[[f64; OUTPUT_DIM]]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::argument(format!(
            "shape mismatch: {} vs {} rows",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::argument("mse requires at least one row"));
    }
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
        .sum();
    Ok(total / y.len() as f64)
}

/// BPTT through one layer. `dh_above[t]` is the loss gradient flowing into
/// the layer's hidden output at step `t` from whatever sits above it.
/// Gradients accumulate into `grads`; the return value is the gradient with
/// respect to the layer's input at each step.
fn bptt_cell(
    params: &LstmCellParams,
    caches: &[GateCache],
    dh_above: &[Vec<f64>],
    grads: &mut LstmCellParams,
) -> Vec<Vec<f64>> {
    let hidden = params.hidden_size();
    let input = params.input_size();
    let steps = caches.len();
    let mut dx_all = vec![vec![0.0; input]; steps];
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];

    for t in (0..steps).rev() {
        let cache = &caches[t];

        let mut dh = dh_above[t].clone();
        for (a, b) in dh.iter_mut().zip(&dh_next) {
            *a += b;
        }

        // Cell-state gradient: through h' = tanh(c') ⊗ o plus the carry.
        let mut dc = vec![0.0; hidden];
        for j in 0..hidden {
            dc[j] = dh[j] * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]) + dc_next[j];
        }

        // Pre-activation gate gradients.
        let mut d_f = vec![0.0; hidden];
        let mut d_i = vec![0.0; hidden];
        let mut d_c = vec![0.0; hidden];
        let mut d_o = vec![0.0; hidden];
        for j in 0..hidden {
            d_f[j] = dc[j] * cache.c_prev[j] * cache.f[j] * (1.0 - cache.f[j]);
            d_i[j] = dc[j] * cache.c_tilde[j] * cache.i[j] * (1.0 - cache.i[j]);
            d_c[j] = dc[j] * cache.i[j] * (1.0 - cache.c_tilde[j] * cache.c_tilde[j]);
            d_o[j] = dh[j] * cache.tanh_c[j] * cache.o[j] * (1.0 - cache.o[j]);
        }

        grads.w_h_f.add_outer(&d_f, &cache.h_prev);
        grads.w_h_i.add_outer(&d_i, &cache.h_prev);
        grads.w_h_c.add_outer(&d_c, &cache.h_prev);
        grads.w_h_o.add_outer(&d_o, &cache.h_prev);
        grads.w_i_f.add_outer(&d_f, &cache.x);
        grads.w_i_i.add_outer(&d_i, &cache.x);
        grads.w_i_c.add_outer(&d_c, &cache.x);
        grads.w_i_o.add_outer(&d_o, &cache.x);
        for j in 0..hidden {
            grads.b_f[j] += d_f[j];
            grads.b_i[j] += d_i[j];
            grads.b_c[j] += d_c[j];
            grads.b_o[j] += d_o[j];
        }

        dh_next = vec![0.0; hidden];
        params.w_h_f.matvec_t_add(&d_f, &mut dh_next);
        params.w_h_i.matvec_t_add(&d_i, &mut dh_next);
        params.w_h_c.matvec_t_add(&d_c, &mut dh_next);
        params.w_h_o.matvec_t_add(&d_o, &mut dh_next);

        for j in 0..hidden {
            dc_next[j] = dc[j] * cache.f[j];
        }

        let dx = &mut dx_all[t];
        params.w_i_f.matvec_t_add(&d_f, dx);
        params.w_i_i.matvec_t_add(&d_i, dx);
        params.w_i_c.matvec_t_add(&d_c, dx);
        params.w_i_o.matvec_t_add(&d_o, dx);
    }
    dx_all
}

/// Exact analytic gradients of the batch MSE with respect to every weight
/// and bias, from the caches of a matching forward pass.
pub fn backward(
    params: &NetworkParams,
    caches: &[SampleCache],
    labels: &[[f64; OUTPUT_DIM]],
) -> Result<NetworkParams> {
    if caches.len() != labels.len() || caches.is_empty() {
        return Err(Error::Internal(format!(
            "backward: {} caches vs {} labels",
            caches.len(),
            labels.len()
        )));
    }
    let hidden = params.hidden_units;
    let batch = caches.len() as f64;
    let mut grads = NetworkParams::zeros(hidden, params.input_size());

    for (cache, label) in caches.iter().zip(labels) {
        let steps = cache.layer2.len();
        if steps != cache.layer1.len() || steps == 0 {
            return Err(Error::Internal("backward: cache/param mismatch".into()));
        }
        let h2_final = &cache.layer2[steps - 1].h;
        if h2_final.len() != hidden {
            return Err(Error::Internal("backward: cache/param mismatch".into()));
        }

        // d(batch MSE)/d(prediction) for this sample.
        let dy = [
            2.0 * (cache.prediction[0] - label[0]) / batch,
            2.0 * (cache.prediction[1] - label[1]) / batch,
        ];
        for (j, &dyj) in dy.iter().enumerate() {
            grads.dense_b[j] += dyj;
            for (k, &hk) in h2_final.iter().enumerate() {
                *grads.dense_w.at_mut(j, k) += dyj * hk;
            }
        }

        // Loss reaches layer 2 only through its final hidden state.
        let mut dh2_above = vec![vec![0.0; hidden]; steps];
        for (k, slot) in dh2_above[steps - 1].iter_mut().enumerate() {
            *slot = params.dense_w.at(0, k) * dy[0] + params.dense_w.at(1, k) * dy[1];
        }
        let dx2 = bptt_cell(&params.layer2, &cache.layer2, &dh2_above, &mut grads.layer2);

        // Layer 2's input gradient lands on layer 1's hidden sequence.
        bptt_cell(&params.layer1, &cache.layer1, &dx2, &mut grads.layer1);
    }
    Ok(grads)
}
