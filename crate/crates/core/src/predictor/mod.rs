//! Downlink forecasting: a linear interpolation baseline and a single-layer
//! LSTM with a fully connected layer and an affine regression output.
//!
//! The LSTM sees one subcarrier at a time as the 2-vector (Re H, Im H) and
//! shares its weights across subcarriers. Open-loop inference feeds a fresh
//! estimate every step; closed-loop inference feeds back its own previous
//! prediction.

mod checkpoint;
mod inference;
mod interp;
mod lstm;
mod train;

pub use checkpoint::{load_model, save_model};
pub use inference::{predict_closed_loop, predict_open_loop, PredictionRun, PredictorMode};
pub use interp::{interpolate_dl, linear_at, midpoints, Interpolated};
pub use lstm::{forward, lstm_cell_forward, Layout, LstmModel, LstmState, Normalization, Weights};
pub use train::{
    loss_and_gradient, tensor_ranges, train, AdamConfig, Batch, FeedbackConfig, FeedbackGradient, Sequence,
    TrainConfig, TrainReport,
};

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

/// Splits complex matrices (time x subcarrier) into per-subcarrier real
/// training sequences, taking every `stride`-th subcarrier.
pub fn complex_sequences(
    inputs: ArrayView2<Complex64>,
    targets: ArrayView2<Complex64>,
    stride: usize,
) -> Vec<Sequence> {
    let stride = stride.max(1);
    (0..inputs.ncols())
        .step_by(stride)
        .map(|k| Sequence { inputs: split(inputs.column(k)), targets: split(targets.column(k)) })
        .collect()
}

fn split(col: ndarray::ArrayView1<Complex64>) -> Array2<f64> {
    Array2::from_shape_fn((col.len(), 2), |(t, j)| if j == 0 { col[t].re } else { col[t].im })
}

/// Z-score statistics of the (re, im) parts of `values`.
pub fn complex_normalization(values: ArrayView2<Complex64>) -> crate::Result<Normalization> {
    let flat: Vec<f64> = values.iter().flat_map(|v| [v.re, v.im]).collect();
    let samples = Array2::from_shape_vec((values.len(), 2), flat).expect("pairs");
    Normalization::fit(samples.view())
}
