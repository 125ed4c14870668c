use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lstm::{batch_step, views, BatchState, Layout, LstmModel, StepCache};
use crate::error::{config, domain, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// How the feedback path is differentiated in closed-loop training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackGradient {
    /// Fed-back predictions are treated as constants.
    Detached,
    /// Gradients flow through every fed-back prediction.
    Full,
}

/// Closed-loop training: after `warmup` teacher-forced steps of each
/// window, the model consumes its own previous prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    pub warmup: usize,
    pub gradient: FeedbackGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Truncated BPTT window length.
    pub bptt_len: usize,
    /// Gaussian noise added to the inputs every epoch, in dB below the mean
    /// input power. `None` trains on clean inputs.
    pub input_noise_db: Option<f64>,
    pub feedback: Option<FeedbackConfig>,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            epochs: 125,
            batch_size: 128,
            bptt_len: 50,
            input_noise_db: None,
            feedback: None,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.bptt_len == 0 {
            return config("epochs, batch_size and bptt_len must be positive");
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return config("invalid Adam hyperparameters");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return config("clip_norm must be positive");
            }
        }
        Ok(())
    }
}

/// One training sequence in raw (unnormalized) units; row `t` of `targets`
/// is what the model should output after consuming row `t` of `inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

/// A batch in normalized units: `inputs[t]` and `targets[t]` are `B x dim`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<Array2<f64>>,
    pub targets: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean batch loss of every epoch.
    pub loss_history: Vec<f64>,
}

/// Loss `0.5 * mean((y - target)^2)` over the batch and its gradient with
/// respect to the flat parameter vector, by backpropagation through time.
/// Every window starts from a zero state.
pub fn loss_and_gradient(
    model: &LstmModel,
    batch: &Batch,
    feedback: Option<&FeedbackConfig>,
) -> Result<(f64, Vec<f64>)> {
    let layout = model.layout;
    let steps = batch.inputs.len();
    if steps == 0 || batch.targets.len() != steps {
        return domain("batch inputs and targets must be non-empty and aligned");
    }
    let bsz = batch.inputs[0].nrows();
    let dim = layout.output_dim;
    if feedback.is_some() && layout.input_dim != layout.output_dim {
        return config("feedback training needs matching input and output dimensions");
    }
    let w = views(&layout, &model.params);
    let n = layout.hidden;

    let fed = |t: usize| feedback.is_some_and(|f| t > 0 && t >= f.warmup.max(1));

    let mut st = BatchState { h: Array2::zeros((bsz, n)), c: Array2::zeros((bsz, n)) };
    let mut caches: Vec<StepCache> = Vec::with_capacity(steps);
    let mut preds: Vec<Array2<f64>> = Vec::with_capacity(steps);
    let mut loss = 0.0;
    let norm = 1.0 / (bsz * steps * dim) as f64;
    for t in 0..steps {
        let x = if fed(t) { preds[t - 1].clone() } else { batch.inputs[t].clone() };
        let (cache, y) = batch_step(&w, x, &st);
        st = BatchState { h: cache.h.clone(), c: cache.c.clone() };
        loss += 0.5 * norm * (&y - &batch.targets[t]).mapv(|e| e * e).sum();
        caches.push(cache);
        preds.push(y);
    }

    let shapes = layout.shapes();
    let mut g_wx = Array2::<f64>::zeros(shapes[0]);
    let mut g_wh = Array2::<f64>::zeros(shapes[1]);
    let mut g_b = Array1::<f64>::zeros(4 * n);
    let mut g_wfc = Array2::<f64>::zeros(shapes[3]);
    let mut g_bfc = Array1::<f64>::zeros(dim);
    let mut g_wy = Array2::<f64>::zeros(shapes[5]);
    let mut g_by = Array1::<f64>::zeros(dim);

    let mut dh_next = Array2::<f64>::zeros((bsz, n));
    let mut dc_next = Array2::<f64>::zeros((bsz, n));
    let mut dx_carry: Option<Array2<f64>> = None;
    let full = feedback.is_some_and(|f| f.gradient == FeedbackGradient::Full);

    for t in (0..steps).rev() {
        let c = &caches[t];
        let mut dy = (&preds[t] - &batch.targets[t]) * norm;
        if let Some(dx) = dx_carry.take() {
            dy += &dx;
        }
        g_wy += &dy.t().dot(&c.fc);
        g_by += &dy.sum_axis(Axis(0));
        let dfc = dy.dot(&w.w_y);
        g_wfc += &dfc.t().dot(&c.h);
        g_bfc += &dfc.sum_axis(Axis(0));
        let dh = dfc.dot(&w.w_fc) + &dh_next;

        let mut da = Array2::<f64>::zeros((bsz, 4 * n));
        for r in 0..bsz {
            for j in 0..n {
                let i = c.gates[[r, j]];
                let f = c.gates[[r, n + j]];
                let g = c.gates[[r, 2 * n + j]];
                let o = c.gates[[r, 3 * n + j]];
                let tc = c.c[[r, j]].tanh();
                let dc = dh[[r, j]] * o * (1.0 - tc * tc) + dc_next[[r, j]];
                da[[r, j]] = dc * g * i * (1.0 - i);
                da[[r, n + j]] = dc * c.c_prev[[r, j]] * f * (1.0 - f);
                da[[r, 2 * n + j]] = dc * i * (1.0 - g * g);
                da[[r, 3 * n + j]] = dh[[r, j]] * tc * o * (1.0 - o);
                dc_next[[r, j]] = dc * f;
            }
        }
        g_wx += &da.t().dot(&c.x);
        g_wh += &da.t().dot(&c.h_prev);
        g_b += &da.sum_axis(Axis(0));
        dh_next = da.dot(&w.w_h);
        if full && fed(t) {
            dx_carry = Some(da.dot(&w.w_x));
        }
    }

    let mut grad = Vec::with_capacity(layout.len());
    for part in [
        g_wx.as_standard_layout().as_slice().unwrap(),
        g_wh.as_standard_layout().as_slice().unwrap(),
        g_b.as_slice().unwrap(),
        g_wfc.as_standard_layout().as_slice().unwrap(),
        g_bfc.as_slice().unwrap(),
        g_wy.as_standard_layout().as_slice().unwrap(),
        g_by.as_slice().unwrap(),
    ] {
        grad.extend_from_slice(part);
    }
    debug_assert_eq!(grad.len(), layout.len());
    Ok((loss, grad))
}

struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: AdamConfig, n: usize) -> Self {
        Self { cfg, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
        }
    }
}

fn normalized(model: &LstmModel, a: &Array2<f64>) -> Array2<f64> {
    let nrm = &model.normalization;
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        nrm.normalize(row.as_slice_mut().expect("standard layout"));
    }
    out
}

/// Trains `model` in place with truncated BPTT and Adam.
///
/// Sequences are cut into non-overlapping windows of `bptt_len` steps (or the
/// shortest sequence length, if smaller), shuffled every epoch and grouped
/// into mini-batches.
pub fn train(model: &mut LstmModel, data: &[Sequence], cfg: &TrainConfig, seed: u64) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate()?;
    if data.is_empty() {
        return domain("empty training set");
    }
    let dim = model.dim();
    for s in data {
        if s.inputs.dim() != s.targets.dim() || s.inputs.ncols() != dim || s.inputs.nrows() == 0 {
            return domain("training sequences must be non-empty with matching input/target shapes");
        }
    }
    let min_len = data.iter().map(|s| s.inputs.nrows()).min().expect("non-empty");
    let win = cfg.bptt_len.min(min_len);
    let mut items: Vec<(usize, usize)> = Vec::new();
    for (k, s) in data.iter().enumerate() {
        let mut start = 0;
        while start + win <= s.inputs.nrows() {
            items.push((k, start));
            start += win;
        }
    }

    let targets: Vec<Array2<f64>> = data.iter().map(|s| normalized(model, &s.targets)).collect();
    let clean: Vec<Array2<f64>> = data.iter().map(|s| normalized(model, &s.inputs)).collect();
    let noise_sd: Option<Vec<f64>> = cfg.input_noise_db.map(|db| {
        let count: usize = data.iter().map(|s| s.inputs.nrows()).sum();
        let power: f64 = data.iter().map(|s| s.inputs.mapv(|v| v * v).sum()).sum::<f64>() / count as f64;
        let var = power * 10f64.powf(-db / 10.0) / dim as f64;
        // Noise is drawn in raw units, so scale it into normalized units.
        model.normalization.scale.iter().map(|s| var.sqrt() / s).collect()
    });

    let mut opt = Adam::new(cfg.adam, model.params.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let inputs: Vec<Array2<f64>> = match &noise_sd {
            None => clean.clone(),
            Some(sd) => {
                let mut rng = rng::stream(seed, "augment", epoch as u64);
                clean
                    .iter()
                    .map(|x| {
                        let mut x = x.clone();
                        for mut row in x.rows_mut() {
                            for (v, s) in row.iter_mut().zip(sd) {
                                *v += s * rng.sample::<f64, _>(StandardNormal);
                            }
                        }
                        x
                    })
                    .collect()
            }
        };
        let mut order = items.clone();
        order.shuffle(&mut rng::stream(seed, "shuffle", epoch as u64));

        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather(&inputs, &targets, chunk, win, dim);
            let (loss, mut grad) = loss_and_gradient(model, &batch, cfg.feedback.as_ref())?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!(
                        "loss became {loss} at batch {batches}; learning rate {}, hidden size {}, \
                         initial loss {:?}. Lower the learning rate or set clip_norm",
                        cfg.adam.learning_rate,
                        model.hidden(),
                        history.first()
                    ),
                });
            }
            if let Some(limit) = cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > limit {
                    grad.iter_mut().for_each(|g| *g *= limit / norm);
                }
            }
            opt.step(&mut model.params, &grad);
            total += loss;
            batches += 1;
        }
        history.push(total / batches as f64);
    }
    Ok(TrainReport { loss_history: history })
}

fn gather(
    inputs: &[Array2<f64>],
    targets: &[Array2<f64>],
    chunk: &[(usize, usize)],
    win: usize,
    dim: usize,
) -> Batch {
    let b = chunk.len();
    let mut xs = vec![Array2::zeros((b, dim)); win];
    let mut ys = vec![Array2::zeros((b, dim)); win];
    for (r, &(k, start)) in chunk.iter().enumerate() {
        for t in 0..win {
            xs[t].row_mut(r).assign(&inputs[k].row(start + t));
            ys[t].row_mut(r).assign(&targets[k].row(start + t));
        }
    }
    Batch { inputs: xs, targets: ys }
}

/// Layout-ordered names and index ranges, for diagnostics.
pub fn tensor_ranges(layout: &Layout) -> Vec<(&'static str, std::ops::Range<usize>)> {
    Layout::TENSORS.iter().copied().zip(layout.ranges()).collect()
}
