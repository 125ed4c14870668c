use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::rng;

/// Per-feature z-score statistics shared by inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Mean and standard deviation of every column of `samples`. Columns with
    /// zero spread get scale 1.
    pub fn fit(samples: ArrayView2<f64>) -> Result<Self> {
        if samples.nrows() == 0 {
            return domain("no samples to fit the normalization on");
        }
        let mean = samples.mean_axis(Axis(0)).expect("non-empty");
        let std = samples.std_axis(Axis(0), 0.0);
        let scale = std.iter().map(|&s| if s > 0.0 && s.is_finite() { s } else { 1.0 }).collect();
        Ok(Self { mean: mean.to_vec(), scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.scale.len() {
            return config("normalization mean and scale lengths differ");
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return config("normalization scales must be positive and finite");
        }
        Ok(())
    }

    pub fn normalize(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn denormalize(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = *v * s + m;
        }
    }
}

/// Offsets of the parameter tensors inside the flat parameter vector.
///
/// Order: `W_x` (4N x in), `W_h` (4N x N), `b` (4N), `W_fc` (out x N),
/// `b_fc` (out), `W_y` (out x out), `b_y` (out). Gate blocks inside `W_x`,
/// `W_h` and `b` are stacked as input, forget, cell candidate, output.
/// Matrices are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Layout {
    pub const TENSORS: [&'static str; 7] = ["W_x", "W_h", "b", "W_fc", "b_fc", "W_y", "b_y"];

    pub fn shapes(&self) -> [(usize, usize); 7] {
        let (n, i, o) = (self.hidden, self.input_dim, self.output_dim);
        [(4 * n, i), (4 * n, n), (4 * n, 1), (o, n), (o, 1), (o, o), (o, 1)]
    }

    pub fn ranges(&self) -> [std::ops::Range<usize>; 7] {
        let mut start = 0;
        self.shapes().map(|(r, c)| {
            let range = start..start + r * c;
            start += r * c;
            range
        })
    }

    pub fn len(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Single LSTM layer followed by a fully connected layer and an affine
/// regression output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub layout: Layout,
    pub params: Vec<f64>,
    pub normalization: Normalization,
}

/// Read-only views of the parameter tensors.
pub struct Weights<'a> {
    pub w_x: ArrayView2<'a, f64>,
    pub w_h: ArrayView2<'a, f64>,
    pub b: ArrayView1<'a, f64>,
    pub w_fc: ArrayView2<'a, f64>,
    pub b_fc: ArrayView1<'a, f64>,
    pub w_y: ArrayView2<'a, f64>,
    pub b_y: ArrayView1<'a, f64>,
}

pub(crate) fn views<'a>(layout: &Layout, p: &'a [f64]) -> Weights<'a> {
    let r = layout.ranges();
    let s = layout.shapes();
    let m = |k: usize| ArrayView2::from_shape(s[k], &p[r[k].clone()]).expect("layout");
    let v = |k: usize| ArrayView1::from(&p[r[k].clone()]);
    Weights { w_x: m(0), w_h: m(1), b: v(2), w_fc: m(3), b_fc: v(4), w_y: m(5), b_y: v(6) }
}

impl LstmModel {
    /// All-zero parameters.
    pub fn zeros(hidden: usize, dim: usize) -> Result<Self> {
        if hidden == 0 || dim == 0 {
            return config("hidden size and feature dimension must be positive");
        }
        let layout = Layout { hidden, input_dim: dim, output_dim: dim };
        Ok(Self { layout, params: vec![0.0; layout.len()], normalization: Normalization::identity(dim) })
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights, zero biases and
    /// forget-gate bias 1. The recurrent layer uses fan-in N.
    pub fn init(hidden: usize, dim: usize, normalization: Normalization, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(hidden, dim)?;
        normalization.validate()?;
        if normalization.dim() != dim {
            return config("normalization dimension does not match the model");
        }
        m.normalization = normalization;
        let mut rng = rng::stream(seed, "lstm-init", 0);
        let r = m.layout.ranges();
        let lstm = 1.0 / (hidden as f64).sqrt();
        let reg = 1.0 / (dim as f64).sqrt();
        for (k, bound) in [(0, lstm), (1, lstm), (3, lstm), (5, reg)] {
            for v in &mut m.params[r[k].clone()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        let b = r[2].start;
        for v in &mut m.params[b + hidden..b + 2 * hidden] {
            *v = 1.0;
        }
        Ok(m)
    }

    pub fn hidden(&self) -> usize {
        self.layout.hidden
    }

    pub fn dim(&self) -> usize {
        self.layout.input_dim
    }

    pub fn weights(&self) -> Weights<'_> {
        views(&self.layout, &self.params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.layout.len() {
            return domain("parameter vector does not match the layout");
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return domain("model has non-finite parameters");
        }
        self.normalization.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(n: usize) -> Self {
        Self { hidden: vec![0.0; n], cell: vec![0.0; n] }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One recurrent step on an already normalized input.
pub fn lstm_cell_forward(x: &[f64], state: &LstmState, model: &LstmModel) -> LstmState {
    let n = model.hidden();
    let w = model.weights();
    let a = w.w_x.dot(&ArrayView1::from(x)) + w.w_h.dot(&ArrayView1::from(&state.hidden)) + w.b;
    let mut hidden = vec![0.0; n];
    let mut cell = vec![0.0; n];
    for j in 0..n {
        let i = sigmoid(a[j]);
        let f = sigmoid(a[n + j]);
        let g = a[2 * n + j].tanh();
        let o = sigmoid(a[3 * n + j]);
        cell[j] = f * state.cell[j] + i * g;
        hidden[j] = o * cell[j].tanh();
    }
    LstmState { hidden, cell }
}

/// Regression output in normalized units for a hidden state.
pub(crate) fn head(h: &[f64], model: &LstmModel) -> Array1<f64> {
    let w = model.weights();
    let fc = w.w_fc.dot(&ArrayView1::from(h)) + w.b_fc;
    w.w_y.dot(&fc) + w.b_y
}

/// Full step: normalize `x`, advance the cell, apply the fully connected and
/// regression layers and denormalize the prediction.
pub fn forward(x: &[f64], state: &LstmState, model: &LstmModel) -> (Vec<f64>, LstmState) {
    let mut xn = x.to_vec();
    model.normalization.normalize(&mut xn);
    let next = lstm_cell_forward(&xn, state, model);
    let mut y = head(&next.hidden, model).to_vec();
    model.normalization.denormalize(&mut y);
    (y, next)
}

/// Batched state: one row per sequence.
#[derive(Debug, Clone)]
pub(crate) struct BatchState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

/// Everything the backward pass needs from one batched step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    /// Activated gates `[i | f | g | o]`, `B x 4N`.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub h: Array2<f64>,
    pub fc: Array2<f64>,
}

/// Batched step in normalized units. Returns the cache and the prediction.
pub(crate) fn batch_step(w: &Weights, x: Array2<f64>, st: &BatchState) -> (StepCache, Array2<f64>) {
    let n = st.h.ncols();
    let mut a = x.dot(&w.w_x.t()) + st.h.dot(&w.w_h.t());
    a += &w.b;
    for mut row in a.rows_mut() {
        for j in 0..n {
            row[j] = sigmoid(row[j]);
            row[n + j] = sigmoid(row[n + j]);
            row[2 * n + j] = row[2 * n + j].tanh();
            row[3 * n + j] = sigmoid(row[3 * n + j]);
        }
    }
    let bsz = x.nrows();
    let mut c = Array2::zeros((bsz, n));
    let mut h = Array2::zeros((bsz, n));
    for r in 0..bsz {
        for j in 0..n {
            let cv = a[[r, n + j]] * st.c[[r, j]] + a[[r, j]] * a[[r, 2 * n + j]];
            c[[r, j]] = cv;
            h[[r, j]] = a[[r, 3 * n + j]] * cv.tanh();
        }
    }
    let fc = h.dot(&w.w_fc.t()) + w.b_fc;
    let y = fc.dot(&w.w_y.t()) + w.b_y;
    let cache = StepCache { x, h_prev: st.h.clone(), c_prev: st.c.clone(), gates: a, c, h, fc };
    (cache, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_model(n: usize, dim: usize, seed: u64) -> LstmModel {
        let mut m = LstmModel::zeros(n, dim).unwrap();
        let mut rng = rng::stream(seed, "test-model", 0);
        for v in &mut m.params {
            *v = rng.random_range(-1.0..1.0);
        }
        m.normalization = Normalization {
            mean: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            scale: (0..dim).map(|_| rng.random_range(0.5..2.0)).collect(),
        };
        m
    }

    /// Independent re-coding of the cell equations with explicit per-gate
    /// matrices and scalar loops.
    fn reference_cell(m: &LstmModel, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = m.hidden();
        let d = m.dim();
        let p = &m.params;
        let wx = |gate: usize, r: usize, k: usize| p[(gate * n + r) * d + k];
        let off_h = 4 * n * d;
        let wh = |gate: usize, r: usize, k: usize| p[off_h + (gate * n + r) * n + k];
        let off_b = off_h + 4 * n * n;
        let b = |gate: usize, r: usize| p[off_b + gate * n + r];
        let pre = |gate: usize, r: usize| {
            let mut s = b(gate, r);
            for k in 0..d {
                s += wx(gate, r, k) * x[k];
            }
            for k in 0..n {
                s += wh(gate, r, k) * h[k];
            }
            s
        };
        let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut c2 = vec![0.0; n];
        let mut h2 = vec![0.0; n];
        for r in 0..n {
            let ig = logistic(pre(0, r));
            let fg = logistic(pre(1, r));
            let cand = pre(2, r).tanh();
            let og = logistic(pre(3, r));
            c2[r] = fg * c[r] + ig * cand;
            h2[r] = og * c2[r].tanh();
        }
        (h2, c2)
    }

    fn reference_head(m: &LstmModel, h: &[f64]) -> Vec<f64> {
        let n = m.hidden();
        let d = m.dim();
        let p = &m.params;
        let off = 4 * n * d + 4 * n * n + 4 * n;
        let mut fc = vec![0.0; d];
        for r in 0..d {
            fc[r] = p[off + d * n + r];
            for k in 0..n {
                fc[r] += p[off + r * n + k] * h[k];
            }
        }
        let off_y = off + d * n + d;
        (0..d)
            .map(|r| {
                let mut s = p[off_y + d * d + r];
                for k in 0..d {
                    s += p[off_y + r * d + k] * fc[k];
                }
                s
            })
            .collect()
    }

    #[test]
    fn zero_model_gates_are_half() {
        let m = LstmModel::zeros(3, 2).unwrap();
        let s = lstm_cell_forward(&[0.7, -2.0], &LstmState::zeros(3), &m);
        assert_eq!(s, LstmState::zeros(3));
    }

    #[test]
    fn zero_model_with_cell_two() {
        let m = LstmModel::zeros(1, 2).unwrap();
        let st = LstmState { hidden: vec![0.0], cell: vec![2.0] };
        let s = lstm_cell_forward(&[0.3, 0.1], &st, &m);
        assert!((s.cell[0] - 1.0).abs() < 1e-15);
        assert!((s.hidden[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((s.hidden[0] - 0.380797).abs() < 1e-6);
    }

    #[test]
    fn zero_model_predicts_mean() {
        let mut m = LstmModel::zeros(4, 2).unwrap();
        m.normalization = Normalization { mean: vec![0.3, -0.2], scale: vec![2.0, 5.0] };
        let (y, _) = forward(&[1.0, 1.0], &LstmState::zeros(4), &m);
        assert_eq!(y, vec![0.3, -0.2]);
    }

    #[test]
    fn identity_regression_passes_fc_through() {
        let mut m = random_model(3, 2, 1);
        let r = m.layout.ranges();
        m.params[r[5].clone()].copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        m.params[r[6].clone()].fill(0.0);
        let st = LstmState::zeros(3);
        let mut xn = vec![0.4, -0.9];
        m.normalization.normalize(&mut xn);
        let s = lstm_cell_forward(&xn, &st, &m);
        let w = m.weights();
        let mut fc = (w.w_fc.dot(&ArrayView1::from(&s.hidden)) + w.b_fc).to_vec();
        m.normalization.denormalize(&mut fc);
        let (y, _) = forward(&[0.4, -0.9], &st, &m);
        for (a, b) in y.iter().zip(&fc) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_reference_evaluation() {
        let m = random_model(3, 2, 7);
        let mut st = LstmState { hidden: vec![0.1, -0.3, 0.5], cell: vec![1.2, -0.4, 0.0] };
        let mut ref_h = st.hidden.clone();
        let mut ref_c = st.cell.clone();
        for t in 0..5 {
            let x = [0.2 * t as f64 - 0.3, 1.0 - 0.1 * t as f64];
            let (y, next) = forward(&x, &st, &m);
            let mut xn = x.to_vec();
            for k in 0..2 {
                xn[k] = (xn[k] - m.normalization.mean[k]) / m.normalization.scale[k];
            }
            let (h2, c2) = reference_cell(&m, &xn, &ref_h, &ref_c);
            let mut y_ref = reference_head(&m, &h2);
            for k in 0..2 {
                y_ref[k] = y_ref[k] * m.normalization.scale[k] + m.normalization.mean[k];
            }
            for (a, b) in next.hidden.iter().zip(&h2).chain(next.cell.iter().zip(&c2)).chain(y.iter().zip(&y_ref)) {
                assert!((a - b).abs() < 1e-12);
            }
            st = next;
            ref_h = h2;
            ref_c = c2;
        }
    }

    #[test]
    fn batch_step_matches_single_step() {
        let m = random_model(5, 2, 3);
        let w = m.weights();
        let x = Array2::from_shape_vec((2, 2), vec![0.1, 0.2, -1.0, 0.5]).unwrap();
        let st = BatchState { h: Array2::from_elem((2, 5), 0.1), c: Array2::from_elem((2, 5), -0.2) };
        let (cache, y) = batch_step(&w, x.clone(), &st);
        for r in 0..2 {
            let single = LstmState { hidden: vec![0.1; 5], cell: vec![-0.2; 5] };
            let s = lstm_cell_forward(x.row(r).as_slice().unwrap(), &single, &m);
            let yr = head(&s.hidden, &m);
            for j in 0..5 {
                assert!((cache.h[[r, j]] - s.hidden[j]).abs() < 1e-14);
            }
            for k in 0..2 {
                assert!((y[[r, k]] - yr[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn init_sets_forget_bias() {
        let m = LstmModel::init(4, 2, Normalization::identity(2), 1).unwrap();
        let b = m.weights().b.to_vec();
        assert_eq!(&b[..4], &[0.0; 4]);
        assert_eq!(&b[4..8], &[1.0; 4]);
        assert!(m.weights().w_h.iter().all(|v| v.abs() < 0.5));
        assert_eq!(m.params.len(), 4 * 4 * 2 + 4 * 4 * 4 + 16 + 2 * 4 + 2 + 4 + 2);
    }

    proptest! {
        #[test]
        fn gates_and_hidden_stay_in_range(seed in any::<u64>(), x in prop::array::uniform2(-50.0f64..50.0)) {
            let m = random_model(4, 2, seed);
            let w = m.weights();
            let st = BatchState { h: Array2::zeros((1, 4)), c: Array2::from_elem((1, 4), 3.0) };
            let (cache, _) = batch_step(&w, Array2::from_shape_vec((1, 2), x.to_vec()).unwrap(), &st);
            for (j, g) in cache.gates.iter().enumerate() {
                // Saturation can round to the closed bounds in f64.
                let lo = if (8..12).contains(&j) { -1.0 } else { 0.0 };
                prop_assert!(*g >= lo && *g <= 1.0);
            }
            for h in cache.h.iter() {
                prop_assert!(h.abs() < 1.0);
            }
        }

        #[test]
        fn normalization_round_trip(v in prop::collection::vec(-1e3f64..1e3, 3), seed in any::<u64>()) {
            let m = random_model(2, 3, seed);
            let mut x = v.clone();
            m.normalization.normalize(&mut x);
            m.normalization.denormalize(&mut x);
            for (a, b) in x.iter().zip(&v) {
                prop_assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
