//! On-disk layout under `output_dir`:
//!
//! ```text
//! dataset/r000/ul.trace
//! dataset/r000/dl.trace
//! dataset/r000/est_LS_10dB.trace
//! models/open_loop.ckpt               (closed_loop.ckpt, or *_k003.ckpt per subcarrier)
//! config.toml
//! manifest.json
//! results.csv
//! ```
//!
//! Estimates are stored as traces sampled at the UL instants.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::pipeline::{estimate, generate_realization, train_models, ModelSet, TrainedModels};
use super::sweep::map_realizations;
use crate::channel3d::{write_trace, ChannelTrace, TracePrecision};
use crate::error::{Error, Result};
use crate::estimation::EstimateMethod;
use crate::predictor::{load_model, save_model, LstmModel, PredictorMode};

pub fn realization_dir(root: &Path, kind: &str, r: usize) -> PathBuf {
    root.join(kind).join(format!("r{r:03}"))
}

pub fn estimate_file_name(method: EstimateMethod, ssnr_db: f64) -> String {
    format!("est_{}_{}dB.trace", method.tag(), ssnr_db)
}

pub fn checkpoint_path(root: &Path, mode: PredictorMode, subcarrier: Option<usize>) -> PathBuf {
    let name = match subcarrier {
        Some(k) => format!("{}_k{k:03}.ckpt", mode.tag()),
        None => format!("{}.ckpt", mode.tag()),
    };
    root.join("models").join(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

fn save_trace(path: &Path, trace: &ChannelTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace(&mut w, trace, TracePrecision::Complex128)?;
    w.flush()?;
    Ok(())
}

/// Writes the true UL/DL traces of every realization and the estimates of
/// every configured estimator at every sweep SSNR. Returns the written paths.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let root = &cfg.output_dir;
    let per = map_realizations(cfg.n_realizations, |r| {
        let data = generate_realization(cfg, r)?;
        let dir = realization_dir(root, "dataset", r);
        create_dir(&dir)?;
        let mut files = vec![dir.join("ul.trace"), dir.join("dl.trace")];
        save_trace(&files[0], &data.ul)?;
        save_trace(&files[1], &data.dl)?;
        for &method in &cfg.estimators {
            for &ssnr_db in &cfg.ssnr_sweep_db {
                let est = estimate(cfg, &data, method, ssnr_db)?;
                let trace = ChannelTrace { responses: est.estimates, ..data.ul.clone() };
                let path = dir.join(estimate_file_name(method, ssnr_db));
                save_trace(&path, &trace)?;
                files.push(path);
            }
        }
        Ok(files)
    })?;
    Ok(per.into_iter().flatten().collect())
}

fn save_checkpoint(path: &Path, model: &LstmModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<LstmModel> {
    let f = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("missing checkpoint {}: {e}", path.display())))
    })?;
    load_model(&mut BufReader::new(f))
}

fn save_set(root: &Path, mode: PredictorMode, set: &ModelSet) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    match set {
        ModelSet::Shared(m) => {
            let p = checkpoint_path(root, mode, None);
            save_checkpoint(&p, m)?;
            files.push(p);
        }
        ModelSet::PerSubcarrier(ms) => {
            for (k, m) in ms.iter().enumerate() {
                let p = checkpoint_path(root, mode, Some(k));
                save_checkpoint(&p, m)?;
                files.push(p);
            }
        }
    }
    Ok(files)
}

/// Trains the predictors on every realization and writes their checkpoints.
pub fn train_and_save(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let root = &cfg.output_dir;
    let data = map_realizations(cfg.n_realizations, |r| generate_realization(cfg, r))?;
    let models = train_models(cfg, &data, &cfg.predictor_modes)?;
    create_dir(&root.join("models"))?;
    let mut files = Vec::new();
    if let Some(set) = &models.open_loop {
        files.extend(save_set(root, PredictorMode::OpenLoop, set)?);
    }
    if let Some(set) = &models.closed_loop {
        files.extend(save_set(root, PredictorMode::ClosedLoop, set)?);
    }
    Ok(files)
}

/// Reads the checkpoints written by [`train_and_save`].
pub fn load_models(cfg: &ExperimentConfig, modes: &[PredictorMode]) -> Result<TrainedModels> {
    let root = &cfg.output_dir;
    let load_set = |mode| -> Result<ModelSet> {
        if cfg.predictor.per_subcarrier {
            (0..cfg.scenario.dft_size)
                .map(|k| load_checkpoint(&checkpoint_path(root, mode, Some(k))))
                .collect::<Result<Vec<_>>>()
                .map(ModelSet::PerSubcarrier)
        } else {
            load_checkpoint(&checkpoint_path(root, mode, None)).map(ModelSet::Shared)
        }
    };
    let mut out = TrainedModels::default();
    if modes.contains(&PredictorMode::OpenLoop) {
        out.open_loop = Some(load_set(PredictorMode::OpenLoop)?);
    }
    if modes.contains(&PredictorMode::ClosedLoop) {
        out.closed_loop = Some(load_set(PredictorMode::ClosedLoop)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to `output_dir`, with `/` separators.
    pub path: String,
    pub sha256: String,
}

/// Run record. Contains nothing time-dependent, so reruns reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes `config.toml` and `manifest.json` describing `files`.
pub fn write_manifest(cfg: &ExperimentConfig, command: &str, files: &[PathBuf]) -> Result<Manifest> {
    let root = &cfg.output_dir;
    create_dir(root)?;
    std::fs::write(root.join("config.toml"), cfg.to_toml())?;
    let mut entries = files
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(root).unwrap_or(p);
            let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok(ManifestEntry { path, sha256: file_digest(p)? })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        files: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(root.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel3d::read_trace;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::quick();
        c.scenario.csi_size = 40;
        c.scenario.dft_size = 4;
        c.scenario.hidden_neurons = 3;
        c.predictor.epochs = 1;
        c.predictor.bptt_len = 8;
        c.predictor.subcarrier_stride = 1;
        c.ssnr_sweep_db = vec![0.0, 20.0];
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn dataset_layout_and_idempotence() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = generate_dataset(&tiny(a.path())).unwrap();
        let fb = generate_dataset(&tiny(b.path())).unwrap();
        // 2 realizations x (ul + dl + 2 estimators x 2 SSNRs)
        assert_eq!(fa.len(), 12);
        assert!(a.path().join("dataset/r001/est_LSMMSE_20dB.trace").exists());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let (t, _) = read_trace(&mut File::open(a.path().join("dataset/r000/dl.trace")).unwrap()).unwrap();
        assert_eq!(t.n_frames(), 40);
        let ma = write_manifest(&tiny(a.path()), "generate", &fa).unwrap();
        let mb = write_manifest(&tiny(b.path()), "generate", &fb).unwrap();
        assert_eq!(ma.config_fingerprint, mb.config_fingerprint);
        assert_eq!(ma.files, mb.files);
    }

    #[test]
    fn unwritable_output_dir_is_an_io_error() {
        let a = tempfile::tempdir().unwrap();
        let blocker = a.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = generate_dataset(&tiny(&blocker)).unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err:?}");
    }

    #[test]
    fn checkpoints_round_trip_and_missing_ones_are_reported() {
        let a = tempfile::tempdir().unwrap();
        let mut cfg = tiny(a.path());
        cfg.n_realizations = 1;
        cfg.predictor_modes = vec![PredictorMode::OpenLoop, PredictorMode::ClosedLoop];
        let err = load_models(&cfg, &cfg.predictor_modes).unwrap_err();
        assert!(err.to_string().contains("missing checkpoint"), "{err}");
        let files = train_and_save(&cfg).unwrap();
        assert_eq!(files.len(), 2);
        let loaded = load_models(&cfg, &cfg.predictor_modes).unwrap();
        let data = generate_realization(&cfg, 0).unwrap();
        let trained = train_models(&cfg, &[data], &cfg.predictor_modes).unwrap();
        assert_eq!(loaded.open_loop, trained.open_loop);
        assert_eq!(loaded.closed_loop, trained.closed_loop);
    }
}
