use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{estimate, generate_realization, score, train_models, RealizationData, TrainedModels};
use super::store;
use crate::error::{config, Error, Result};
use crate::estimation::EstimateMethod;
use crate::metrics::{to_db, NmseReport};
use crate::predictor::PredictorMode;

/// Score of one (estimator, mode, SSNR) cell on one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub estimator: EstimateMethod,
    pub mode: PredictorMode,
    pub ssnr_db: f64,
    pub realization: usize,
    pub realization_seed: u64,
    pub report: Option<NmseReport>,
    /// Why the cell has no report, e.g. training diverged.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub config_fingerprint: String,
    pub seed: u64,
}

/// Realization-averaged NMSE of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub estimator: EstimateMethod,
    pub mode: PredictorMode,
    pub ssnr_db: f64,
    pub nmse_real: f64,
    pub nmse_imag: f64,
    pub nmse_avg: f64,
    pub n_realizations: usize,
}

impl AggregateRow {
    pub fn nmse_avg_db(&self) -> f64 {
        to_db(self.nmse_avg)
    }
}

impl SweepResult {
    pub fn failed(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.report.is_none())
    }

    /// Arithmetic mean over realizations of every cell, ordered by estimator
    /// tag, mode tag, then SSNR ascending. Failed realizations are left out
    /// of the mean; a cell with no successes averages to NaN.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        type Key = (&'static str, &'static str, u64);
        let mut groups: BTreeMap<Key, (EstimateMethod, PredictorMode, f64, Vec<&NmseReport>)> = BTreeMap::new();
        for c in &self.cells {
            // Order SSNR numerically with a sortable bit pattern.
            let bits = c.ssnr_db.to_bits();
            let ord = if c.ssnr_db.is_sign_negative() { !bits } else { bits | (1 << 63) };
            let e = groups
                .entry((c.estimator.tag(), c.mode.tag(), ord))
                .or_insert_with(|| (c.estimator, c.mode, c.ssnr_db, Vec::new()));
            if let Some(r) = &c.report {
                e.3.push(r);
            }
        }
        groups
            .into_values()
            .map(|(estimator, mode, ssnr_db, reports)| {
                let n = reports.len();
                let mean = |f: fn(&NmseReport) -> f64| {
                    if n == 0 {
                        f64::NAN
                    } else {
                        reports.iter().map(|r| f(r)).sum::<f64>() / n as f64
                    }
                };
                AggregateRow {
                    estimator,
                    mode,
                    ssnr_db,
                    nmse_real: mean(|r| r.nmse_real),
                    nmse_imag: mean(|r| r.nmse_imag),
                    nmse_avg: mean(|r| r.nmse_avg),
                    n_realizations: n,
                }
            })
            .collect()
    }

    pub fn find(&self, estimator: EstimateMethod, mode: PredictorMode, ssnr_db: f64) -> Option<AggregateRow> {
        self.aggregate()
            .into_iter()
            .find(|r| r.estimator == estimator && r.mode == mode && r.ssnr_db == ssnr_db)
    }
}

pub const CSV_HEADER: &str = "estimator,mode,ssnr_db,nmse_real,nmse_imag,nmse_avg,nmse_avg_db,n_realizations,seed";

pub fn csv_string(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in result.aggregate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.estimator.tag(),
            r.mode.tag(),
            r.ssnr_db,
            r.nmse_real,
            r.nmse_imag,
            r.nmse_avg,
            r.nmse_avg_db(),
            r.n_realizations,
            result.seed
        )
        .expect("write to string");
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    if result.cells.is_empty() {
        return Err(Error::Domain("nothing to write: the sweep result is empty".into()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, csv_string(result))?;
    Ok(())
}

fn models_for(cfg: &ExperimentConfig, data: &[RealizationData]) -> Result<TrainedModels> {
    let modes = &cfg.predictor_modes;
    if cfg.predictor.load_checkpoints {
        store::load_models(cfg, modes)
    } else {
        train_models(cfg, data, modes)
    }
}

/// Every requested cell of one realization. `train_error` marks the
/// learned-mode cells as failed.
pub fn score_realization(
    cfg: &ExperimentConfig,
    data: &RealizationData,
    models: &TrainedModels,
    train_error: Option<&str>,
) -> Result<Vec<CellResult>> {
    let mut cells = Vec::new();
    for &estimator in &cfg.estimators {
        for &ssnr_db in &cfg.ssnr_sweep_db {
            let est = estimate(cfg, data, estimator, ssnr_db)?;
            for &mode in &cfg.predictor_modes {
                let (report, error) = match (train_error, mode) {
                    (Some(e), PredictorMode::OpenLoop | PredictorMode::ClosedLoop) => (None, Some(e.to_string())),
                    _ => match score(cfg, data, &est, models, mode, ssnr_db) {
                        Ok(r) => (Some(r), None),
                        Err(e @ (Error::Numerical(_) | Error::DegenerateNormalizer { .. })) => {
                            (None, Some(e.to_string()))
                        }
                        Err(e) => return Err(e),
                    },
                };
                cells.push(CellResult {
                    estimator,
                    mode,
                    ssnr_db,
                    realization: data.index,
                    realization_seed: data.seed,
                    report,
                    error,
                });
            }
        }
    }
    Ok(cells)
}

/// Generates every realization, trains (or loads) one pair of predictors on
/// their training frames, and scores every cell on the test frames. A
/// diverged training run marks the learned-mode cells as failed instead of
/// aborting the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.predictor_modes.is_empty() {
        return config("no predictor modes selected");
    }
    let data = map_realizations(cfg.n_realizations, |r| generate_realization(cfg, r))?;
    let needs_model = cfg.predictor_modes.iter().any(|m| *m != PredictorMode::Interpolation);
    let (models, train_error) = if needs_model {
        match models_for(cfg, &data) {
            Ok(m) => (m, None),
            Err(e @ Error::Diverged { .. }) => (TrainedModels::default(), Some(e.to_string())),
            Err(e) => return Err(e),
        }
    } else {
        (TrainedModels::default(), None)
    };
    let per = map_realizations(cfg.n_realizations, |r| {
        score_realization(cfg, &data[r], &models, train_error.as_deref())
    })?;
    Ok(SweepResult {
        cells: per.into_iter().flatten().collect(),
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
    })
}

/// Applies `f` to every realization index, keeping index order in the
/// output regardless of scheduling.
pub(crate) fn map_realizations<T: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(v: f64) -> NmseReport {
        NmseReport {
            nmse_real: v,
            nmse_imag: 3.0 * v,
            nmse_avg: 2.0 * v,
            n_predictions: 1,
            n_subcarriers: 1,
            method: String::new(),
            mode: String::new(),
            ssnr_db: 0.0,
        }
    }

    fn cell(e: EstimateMethod, m: PredictorMode, s: f64, r: usize, v: Option<f64>) -> CellResult {
        CellResult {
            estimator: e,
            mode: m,
            ssnr_db: s,
            realization: r,
            realization_seed: r as u64,
            report: v.map(report),
            error: v.is_none().then(|| "diverged".to_string()),
        }
    }

    #[test]
    fn aggregate_orders_and_averages() {
        use EstimateMethod::*;
        use PredictorMode::*;
        let mut cells = Vec::new();
        for r in 0..2 {
            for s in [10.0, -5.0, 0.0] {
                for e in [LsMmse, Ls] {
                    cells.push(cell(e, Interpolation, s, r, Some(0.1 * (r + 1) as f64)));
                }
            }
        }
        cells.push(cell(Ls, OpenLoop, 0.0, 0, None));
        cells.push(cell(Ls, OpenLoop, 0.0, 1, Some(0.4)));
        let res = SweepResult { cells, config_fingerprint: "x".into(), seed: 7 };
        let rows = res.aggregate();
        assert_eq!(rows.len(), 7);
        assert_eq!((rows[0].estimator, rows[0].mode, rows[0].ssnr_db), (Ls, Interpolation, -5.0));
        assert_eq!(rows[2].ssnr_db, 10.0);
        assert_eq!((rows[3].mode, rows[3].n_realizations), (OpenLoop, 1));
        assert_eq!(rows[6].estimator, LsMmse);
        assert!((rows[0].nmse_real - 0.15).abs() < 1e-12);
        assert!((rows[0].nmse_avg - 0.3).abs() < 1e-12);
        assert_eq!(res.failed().count(), 1);

        let csv = csv_string(&res);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 8);
        assert!(lines[1].starts_with("LS,interpolation,-5,"));
        assert!(lines[1].ends_with(",2,7"));
        let db: f64 = lines[1].split(',').nth(6).unwrap().parse().unwrap();
        assert!((db - 10.0 * 0.3f64.log10()).abs() < 1e-12);
        assert_eq!(csv, csv_string(&res));
    }

    #[test]
    fn two_estimators_five_ssnrs_make_ten_rows() {
        use EstimateMethod::*;
        let mut cells = Vec::new();
        for e in [Ls, LsMmse] {
            for s in [0.0, 10.0, 20.0, 30.0, 40.0] {
                cells.push(cell(e, PredictorMode::Interpolation, s, 0, Some(0.2)));
            }
        }
        let res = SweepResult { cells, config_fingerprint: String::new(), seed: 1 };
        assert_eq!(csv_string(&res).lines().count(), 11);
    }

    #[test]
    fn empty_result_is_not_written() {
        let res = SweepResult { cells: vec![], config_fingerprint: String::new(), seed: 1 };
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_csv(&res, &dir.path().join("x.csv")).is_err());
    }
}
