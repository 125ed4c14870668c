//! One realization end to end: channel, pilots, estimates, models, scores.

use ndarray::{s, Array2, ArrayView2, Axis};
use num_complex::Complex64;

use super::config::{AutocorrelationSource, ExperimentConfig};
use crate::channel3d::{ChannelRealization, ChannelTrace};
use crate::error::{Error, Result};
use crate::estimation::{build_mmse_context, estimate_series, EstimateMethod, EstimateSeries};
use crate::linksim::transmit_series;
use crate::metrics::{from_db, nmse, NmseReport};
use crate::predictor::{
    complex_normalization, complex_sequences, interpolate_dl, midpoints, predict_closed_loop, predict_open_loop,
    train, LstmModel, PredictorMode, TrainReport,
};
use crate::rng;

/// True UL and DL responses of one realization.
#[derive(Debug, Clone)]
pub struct RealizationData {
    pub index: usize,
    pub seed: u64,
    pub ul: ChannelTrace,
    pub dl: ChannelTrace,
}

pub fn generate_realization(cfg: &ExperimentConfig, index: usize) -> Result<RealizationData> {
    let seed = cfg.realization_seed(index);
    let link = &cfg.link;
    let real = ChannelRealization::new(
        &cfg.geometry(),
        &cfg.correlation(),
        &cfg.trace_params(),
        seed,
        &[link.ul_offset, link.dl_offset],
    )?;
    Ok(RealizationData { index, seed, ul: real.trace(0)?, dl: real.trace(1)? })
}

/// Pilot transmission and estimation at one SSNR. LS and LS-MMSE share the
/// same pilots and noise.
pub fn estimate(
    cfg: &ExperimentConfig,
    data: &RealizationData,
    method: EstimateMethod,
    ssnr_db: f64,
) -> Result<EstimateSeries> {
    let ssnr = from_db(ssnr_db);
    let pilot_seed = rng::derive(data.seed, "pilots", ssnr_db.to_bits());
    let pilots = transmit_series(&data.ul.responses, cfg.scenario.modulation, ssnr, pilot_seed)?;
    let ctx = match method {
        EstimateMethod::Ls => None,
        EstimateMethod::LsMmse => {
            let (train, _) = cfg.split();
            let rows = match cfg.estimation.autocorrelation {
                AutocorrelationSource::Training => data.ul.responses.slice(s![..train, ..]),
                AutocorrelationSource::Oracle => data.ul.responses.view(),
            };
            let samples: Vec<Vec<Complex64>> = rows.outer_iter().map(|r| r.to_vec()).collect();
            Some(build_mmse_context(samples.iter().map(|v| v.as_slice()), ssnr, cfg.beta())?)
        }
    };
    estimate_series(&pilots, method, ssnr, ctx.as_ref(), cfg.estimation.scalar_mmse)
}

/// A shared model or one model per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSet {
    Shared(LstmModel),
    PerSubcarrier(Vec<LstmModel>),
}

impl ModelSet {
    pub fn models(&self) -> Vec<&LstmModel> {
        match self {
            ModelSet::Shared(m) => vec![m],
            ModelSet::PerSubcarrier(v) => v.iter().collect(),
        }
    }

    fn predict(
        &self,
        inputs: ArrayView2<Complex64>,
        run: impl Fn(&LstmModel, ArrayView2<Complex64>) -> Result<Array2<Complex64>>,
    ) -> Result<Array2<Complex64>> {
        match self {
            ModelSet::Shared(m) => run(m, inputs),
            ModelSet::PerSubcarrier(ms) => {
                if ms.len() != inputs.ncols() {
                    return Err(Error::Domain(format!(
                        "{} per-subcarrier models for {} subcarriers",
                        ms.len(),
                        inputs.ncols()
                    )));
                }
                let cols = ms
                    .iter()
                    .enumerate()
                    .map(|(k, m)| run(m, inputs.slice(s![.., k..k + 1])))
                    .collect::<Result<Vec<_>>>()?;
                let views: Vec<_> = cols.iter().map(|c| c.view()).collect();
                ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Domain(e.to_string()))
            }
        }
    }
}

/// The open-loop and closed-loop predictors of one realization.
#[derive(Debug, Clone, Default)]
pub struct TrainedModels {
    pub open_loop: Option<ModelSet>,
    pub closed_loop: Option<ModelSet>,
    pub loss_histories: Vec<(PredictorMode, Vec<f64>)>,
}

fn column<'a>(v: ArrayView2<'a, Complex64>, k: Option<usize>) -> ArrayView2<'a, Complex64> {
    match k {
        Some(k) => v.slice_move(s![.., k..k + 1]),
        None => v,
    }
}

fn fit(
    cfg: &ExperimentConfig,
    pairs: &[(ArrayView2<Complex64>, ArrayView2<Complex64>)],
    closed_loop: bool,
    seed: u64,
) -> Result<(ModelSet, Vec<f64>)> {
    let p = &cfg.predictor;
    let tc = cfg.train_config(closed_loop);
    let n = cfg.scenario.hidden_neurons;
    let one = |cols: Option<usize>, stride: usize, seed: u64| -> Result<(LstmModel, TrainReport)> {
        let targets: Vec<ArrayView2<Complex64>> = pairs.iter().map(|(_, y)| column(y.view(), cols)).collect();
        let all = ndarray::concatenate(Axis(0), &targets).map_err(|e| Error::Domain(e.to_string()))?;
        let norm = complex_normalization(all.view())?;
        let mut m = LstmModel::init(n, 2, norm, seed)?;
        let seqs: Vec<_> = pairs.iter().flat_map(|(x, y)| complex_sequences(column(x.view(), cols), column(y.view(), cols), stride)).collect();
        let report = train(&mut m, &seqs, &tc, seed)?;
        Ok((m, report))
    };
    let width = pairs.first().map_or(0, |(x, _)| x.ncols());
    if p.per_subcarrier {
        let mut models = Vec::with_capacity(width);
        let mut loss = vec![0.0; tc.epochs];
        for k in 0..width {
            let (m, r) = one(Some(k), 1, rng::derive(seed, "subcarrier", k as u64))?;
            for (a, b) in loss.iter_mut().zip(&r.loss_history) {
                *a += b / width as f64;
            }
            models.push(m);
        }
        Ok((ModelSet::PerSubcarrier(models), loss))
    } else {
        let (m, r) = one(None, p.subcarrier_stride, seed)?;
        Ok((ModelSet::Shared(m), r.loss_history))
    }
}

/// Trains the predictors needed by `modes` on the training frames of every
/// realization in `data`.
///
/// The open-loop model maps the UL response of a frame to the DL response
/// half a frame later. The closed-loop model works on the DL lattice,
/// mapping each DL response to the next one. Both learn from true responses
/// with input noise augmentation, so one pair of models serves every
/// estimator, SSNR and realization.
pub fn train_models(cfg: &ExperimentConfig, data: &[RealizationData], modes: &[PredictorMode]) -> Result<TrainedModels> {
    if data.is_empty() {
        return Err(Error::Domain("no realizations to train on".into()));
    }
    let (n_train, _) = cfg.split();
    let mut out = TrainedModels::default();
    if modes.contains(&PredictorMode::OpenLoop) {
        let pairs: Vec<_> = data
            .iter()
            .map(|d| (d.ul.responses.slice(s![..n_train, ..]), d.dl.responses.slice(s![..n_train, ..])))
            .collect();
        let (m, loss) = fit(cfg, &pairs, false, rng::derive(cfg.seed, "train", 0))?;
        out.open_loop = Some(m);
        out.loss_histories.push((PredictorMode::OpenLoop, loss));
    }
    if modes.contains(&PredictorMode::ClosedLoop) {
        let pairs: Vec<_> = data
            .iter()
            .map(|d| (d.dl.responses.slice(s![..n_train - 1, ..]), d.dl.responses.slice(s![1..n_train, ..])))
            .collect();
        let (m, loss) = fit(cfg, &pairs, true, rng::derive(cfg.seed, "train", 1))?;
        out.closed_loop = Some(m);
        out.loss_histories.push((PredictorMode::ClosedLoop, loss));
    }
    Ok(out)
}

/// DL forecasts for the test frames.
pub fn forecast(
    cfg: &ExperimentConfig,
    est: &EstimateSeries,
    models: &TrainedModels,
    mode: PredictorMode,
) -> Result<Array2<Complex64>> {
    let (n_train, n_test) = cfg.split();
    let e = est.estimates.view();
    let missing = |m: &str| Error::Domain(format!("no trained {m} model"));
    match mode {
        PredictorMode::Interpolation => {
            let r = interpolate_dl(e, &cfg.schedule());
            Ok(r.predictions.slice(s![n_train.., ..]).to_owned())
        }
        PredictorMode::OpenLoop => {
            let set = models.open_loop.as_ref().ok_or_else(|| missing("open-loop"))?;
            let p = set.predict(e, predict_open_loop)?;
            Ok(p.slice(s![n_train.., ..]).to_owned())
        }
        PredictorMode::ClosedLoop => {
            // Warm up on estimates moved to the DL instants, up to the last
            // training frame, then run free across the test frames.
            let set = models.closed_loop.as_ref().ok_or_else(|| missing("closed-loop"))?;
            let mid = midpoints(e, &cfg.schedule());
            set.predict(mid.slice(s![..n_train, ..]), |m, w| predict_closed_loop(m, w, n_test))
        }
    }
}

pub fn score(
    cfg: &ExperimentConfig,
    data: &RealizationData,
    est: &EstimateSeries,
    models: &TrainedModels,
    mode: PredictorMode,
    ssnr_db: f64,
) -> Result<NmseReport> {
    let (n_train, _) = cfg.split();
    let pred = forecast(cfg, est, models, mode)?;
    let truth = data.dl.responses.slice(s![n_train.., ..]);
    Ok(nmse(pred.view(), truth)?.labeled(est.method.tag(), mode.tag(), ssnr_db))
}
