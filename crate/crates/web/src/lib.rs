//! Browser bindings for three small demos: a DL channel heatmap, LS versus
//! LS-MMSE on one frame, and interpolation NMSE against SSNR.
//!
//! The `*_data` functions are plain Rust so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only flatten their results for JavaScript.

use geocsi::estimation::{build_mmse_context, ls_estimate, mmse_estimate, EstimateMethod};
use geocsi::harness::{estimate, generate_realization, score, ExperimentConfig, RealizationData, TrainedModels};
use geocsi::linksim::{make_pilot_frame, transmit_pilot};
use geocsi::metrics::{from_db, nmse, to_db};
use geocsi::predictor::PredictorMode;
use geocsi::{rng, Complex64};
use wasm_bindgen::prelude::*;

pub const MAX_FRAMES: usize = 2000;
pub const MAX_SUBCARRIERS: usize = 256;

fn demo_config(seed: u64, n_frames: usize, n_subcarriers: usize) -> Result<ExperimentConfig, String> {
    if !(2..=MAX_FRAMES).contains(&n_frames) || !(1..=MAX_SUBCARRIERS).contains(&n_subcarriers) {
        return Err(format!("frames must be in 2..={MAX_FRAMES} and subcarriers in 1..={MAX_SUBCARRIERS}"));
    }
    let mut c = ExperimentConfig::quick();
    c.seed = seed;
    c.n_realizations = 1;
    c.scenario.csi_size = n_frames;
    c.scenario.dft_size = n_subcarriers;
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

fn realization(seed: u64, n_frames: usize, n_subcarriers: usize) -> Result<(ExperimentConfig, RealizationData), String> {
    let cfg = demo_config(seed, n_frames, n_subcarriers)?;
    let data = generate_realization(&cfg, 0).map_err(|e| e.to_string())?;
    Ok((cfg, data))
}

/// DL power in dB, frame-major (`n_frames x n_subcarriers`).
pub fn heatmap_data(seed: u64, n_frames: usize, n_subcarriers: usize) -> Result<Vec<f64>, String> {
    let (_, data) = realization(seed, n_frames, n_subcarriers)?;
    Ok(data.dl.responses.iter().map(|h| to_db(h.norm_sqr().max(1e-30))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateDemo {
    pub truth: Vec<Complex64>,
    pub ls: Vec<Complex64>,
    pub mmse: Vec<Complex64>,
    pub nmse_ls: f64,
    pub nmse_mmse: f64,
}

/// One pilot frame of a fresh realization at `ssnr_db`, estimated both
/// ways. The MMSE filter uses the autocorrelation of the other frames.
pub fn estimate_data(seed: u64, ssnr_db: f64, frame: usize) -> Result<EstimateDemo, String> {
    let n_frames = 200;
    let (cfg, data) = realization(seed, n_frames, 64)?;
    if frame >= n_frames {
        return Err(format!("frame must be below {n_frames}"));
    }
    let ssnr = from_db(ssnr_db);
    let truth: Vec<Complex64> = data.ul.responses.row(frame).to_vec();
    let pilots = make_pilot_frame(truth.len(), cfg.scenario.modulation, rng::derive(seed, "demo-pilots", 0));
    let rx = transmit_pilot(&pilots, &truth, ssnr, rng::derive(seed, "demo-noise", 0)).map_err(|e| e.to_string())?;
    let ls = ls_estimate(&rx, &pilots).map_err(|e| e.to_string())?;
    let others: Vec<Vec<Complex64>> =
        (0..n_frames).filter(|&t| t != frame).map(|t| data.ul.responses.row(t).to_vec()).collect();
    let ctx = build_mmse_context(others.iter().map(|v| v.as_slice()), ssnr, cfg.beta()).map_err(|e| e.to_string())?;
    let mmse = mmse_estimate(&ls, &ctx).map_err(|e| e.to_string())?;
    let row = |v: &[Complex64]| ndarray::Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row");
    let t = row(&truth);
    let score = |v: &[Complex64]| nmse(row(v).view(), t.view()).map(|r| r.nmse_avg).map_err(|e| e.to_string());
    Ok(EstimateDemo { nmse_ls: score(&ls)?, nmse_mmse: score(&mmse)?, truth, ls, mmse })
}

/// Interpolation NMSE on the test frames for LS and LS-MMSE inputs at every
/// SSNR in `ssnr_db`: `[ls_0, mmse_0, ls_1, mmse_1, ...]`.
pub fn interpolation_curve_data(seed: u64, ssnr_db: &[f64]) -> Result<Vec<f64>, String> {
    if ssnr_db.is_empty() || ssnr_db.len() > 64 {
        return Err("give between 1 and 64 SSNR values".into());
    }
    let (cfg, data) = realization(seed, 400, 64)?;
    let none = TrainedModels::default();
    let mut out = Vec::with_capacity(2 * ssnr_db.len());
    for &s in ssnr_db {
        for method in [EstimateMethod::Ls, EstimateMethod::LsMmse] {
            let est = estimate(&cfg, &data, method, s).map_err(|e| e.to_string())?;
            let r = score(&cfg, &data, &est, &none, PredictorMode::Interpolation, s).map_err(|e| e.to_string())?;
            out.push(r.nmse_avg);
        }
    }
    Ok(out)
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub fn channel_heatmap(seed: u32, n_frames: usize, n_subcarriers: usize) -> Result<Vec<f64>, JsValue> {
    heatmap_data(seed as u64, n_frames, n_subcarriers).map_err(js)
}

/// Flattened as `[nmse_ls, nmse_mmse, then |H|, |LS|, |MMSE| per subcarrier]`.
#[wasm_bindgen]
pub fn estimate_frame(seed: u32, ssnr_db: f64, frame: usize) -> Result<Vec<f64>, JsValue> {
    let d = estimate_data(seed as u64, ssnr_db, frame).map_err(js)?;
    let mut out = vec![d.nmse_ls, d.nmse_mmse];
    for v in [&d.truth, &d.ls, &d.mmse] {
        out.extend(v.iter().map(|h| h.norm()));
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn interpolation_curve(seed: u32, ssnr_db: Vec<f64>) -> Result<Vec<f64>, JsValue> {
    interpolation_curve_data(seed as u64, &ssnr_db).map_err(js)
}
