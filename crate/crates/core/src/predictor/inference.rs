use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lstm::{batch_step, BatchState, LstmModel};
use crate::error::{domain, Result};
use crate::estimation::EstimateMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorMode {
    Interpolation,
    OpenLoop,
    ClosedLoop,
}

impl PredictorMode {
    pub fn tag(self) -> &'static str {
        match self {
            PredictorMode::Interpolation => "interpolation",
            PredictorMode::OpenLoop => "open_loop",
            PredictorMode::ClosedLoop => "closed_loop",
        }
    }
}

impl std::str::FromStr for PredictorMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "interpolation" | "interp" => Ok(PredictorMode::Interpolation),
            "open_loop" | "open" => Ok(PredictorMode::OpenLoop),
            "closed_loop" | "closed" => Ok(PredictorMode::ClosedLoop),
            _ => Err(crate::Error::Config(format!("unknown predictor mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRun {
    pub mode: PredictorMode,
    /// `n_steps x n_subcarriers`.
    pub predictions: Array2<Complex64>,
    pub source_method: Option<EstimateMethod>,
}

/// Batched recurrent runner over subcarriers: row `b` of every input is one
/// subcarrier's (re, im) pair.
struct Runner<'a> {
    model: &'a LstmModel,
    state: BatchState,
}

impl<'a> Runner<'a> {
    fn new(model: &'a LstmModel, batch: usize) -> Result<Self> {
        model.validate()?;
        if model.dim() != 2 {
            return domain("complex prediction needs a model with two features (re, im)");
        }
        let n = model.hidden();
        Ok(Self { model, state: BatchState { h: Array2::zeros((batch, n)), c: Array2::zeros((batch, n)) } })
    }

    /// Feeds one normalized input row per subcarrier, returns the normalized
    /// prediction.
    fn step(&mut self, x: Array2<f64>) -> Array2<f64> {
        let w = self.model.weights();
        let (cache, y) = batch_step(&w, x, &self.state);
        self.state = BatchState { h: cache.h, c: cache.c };
        y
    }

    fn encode(&self, row: ndarray::ArrayView1<Complex64>) -> Array2<f64> {
        let nrm = &self.model.normalization;
        Array2::from_shape_fn((row.len(), 2), |(k, j)| {
            let v = if j == 0 { row[k].re } else { row[k].im };
            (v - nrm.mean[j]) / nrm.scale[j]
        })
    }

    fn decode(&self, y: &Array2<f64>) -> Vec<Complex64> {
        let nrm = &self.model.normalization;
        y.rows()
            .into_iter()
            .map(|r| Complex64::new(r[0] * nrm.scale[0] + nrm.mean[0], r[1] * nrm.scale[1] + nrm.mean[1]))
            .collect()
    }
}

fn to_matrix(rows: Vec<Vec<Complex64>>, cols: usize) -> Array2<Complex64> {
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).expect("rectangular")
}

fn check_finite(a: &Array2<Complex64>) -> Result<()> {
    if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(crate::Error::Numerical("prediction produced non-finite values".into()));
    }
    Ok(())
}

/// Feeds every row of `inputs` (time x subcarrier) and records the
/// prediction made after each step. Row `t` of the result depends only on
/// rows `0..=t` of the input.
pub fn predict_open_loop(model: &LstmModel, inputs: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
    if inputs.nrows() == 0 {
        return domain("open-loop prediction needs at least one input step");
    }
    let mut run = Runner::new(model, inputs.ncols())?;
    let mut out = Vec::with_capacity(inputs.nrows());
    for row in inputs.rows() {
        let x = run.encode(row);
        let y = run.step(x);
        out.push(run.decode(&y));
    }
    let out = to_matrix(out, inputs.ncols());
    check_finite(&out)?;
    Ok(out)
}

/// Warms the state on `warmup` (time x subcarrier), then free-runs for
/// `horizon` steps, feeding each prediction back as the next input. The first
/// horizon step is the prediction made after the last warm-up input.
pub fn predict_closed_loop(
    model: &LstmModel,
    warmup: ArrayView2<Complex64>,
    horizon: usize,
) -> Result<Array2<Complex64>> {
    if warmup.nrows() == 0 || horizon == 0 {
        return domain("closed-loop prediction needs a warm-up sequence and a horizon of at least 1");
    }
    let mut run = Runner::new(model, warmup.ncols())?;
    let mut y = Array2::zeros((warmup.ncols(), 2));
    for row in warmup.rows() {
        let x = run.encode(row);
        y = run.step(x);
    }
    let mut out = Vec::with_capacity(horizon);
    out.push(run.decode(&y));
    for _ in 1..horizon {
        // Normalized output and input share statistics, so feed back as is.
        y = run.step(y);
        out.push(run.decode(&y));
    }
    let out = to_matrix(out, warmup.ncols());
    check_finite(&out)?;
    Ok(out)
}
