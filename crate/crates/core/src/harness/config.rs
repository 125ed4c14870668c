use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel3d::{CorrelationConfig, Geometry, LogNormalStat, TapDrawConfig, TraceParams, N_LSP};
use crate::error::{config, Error, Result};
use crate::estimation::EstimateMethod;
use crate::linksim::{Modulation, TddSchedule};
use crate::predictor::{AdamConfig, FeedbackConfig, FeedbackGradient, PredictorMode, TrainConfig};

/// Scenario parameters of the reference urban-microcell setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub dft_size: usize,
    pub n_taps: usize,
    pub path_length_m: f64,
    pub speed_mps: f64,
    pub dt_s: f64,
    pub d_dec_m: f64,
    pub kf_mu_db: f64,
    pub kf_sigma_db: f64,
    /// Frames per realization.
    pub csi_size: usize,
    /// Total frames over all realizations; checked against
    /// `csi_size * n_realizations` when set. Absent means unchecked.
    pub dataset_size: Option<usize>,
    pub modulation: Modulation,
    /// LMMSE constellation constant; derived from the modulation when unset.
    pub beta: Option<f64>,
    pub hidden_neurons: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            dft_size: 128,
            n_taps: 5,
            path_length_m: 100.0,
            speed_mps: 10.0,
            dt_s: 5e-3,
            d_dec_m: 5.0,
            kf_mu_db: -3.0,
            kf_sigma_db: 0.5,
            csi_size: 2000,
            dataset_size: None,
            modulation: Modulation::Qam16,
            beta: None,
            hidden_neurons: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub carrier_frequency_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub shadow_fading_db: f64,
    pub tx_position: [f64; 3],
    pub rx_path_start: [f64; 3],
    pub rx_direction: [f64; 3],
    /// Mixing matrix applied to the large-scale deviates; identity if unset.
    pub cross_correlation: Option<[[f64; N_LSP]; N_LSP]>,
    pub delay_spread: LogNormalStat,
    pub delay_scaling: f64,
    pub tap_shadowing_db: f64,
    pub azimuth_departure_spread: LogNormalStat,
    pub zenith_departure_spread: LogNormalStat,
    pub azimuth_arrival_spread: LogNormalStat,
    pub zenith_arrival_spread: LogNormalStat,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let g = Geometry::default();
        let t = TapDrawConfig::default();
        Self {
            carrier_frequency_hz: g.carrier_frequency,
            subcarrier_spacing_hz: 30e3,
            shadow_fading_db: 4.0,
            tx_position: g.tx_position,
            rx_path_start: g.rx_path_start,
            rx_direction: g.rx_direction,
            cross_correlation: None,
            delay_spread: t.delay_spread,
            delay_scaling: t.delay_scaling,
            tap_shadowing_db: t.tap_shadowing_db,
            azimuth_departure_spread: t.azimuth_departure_spread,
            zenith_departure_spread: t.zenith_departure_spread,
            azimuth_arrival_spread: t.azimuth_arrival_spread,
            zenith_arrival_spread: t.zenith_arrival_spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub ul_offset: f64,
    pub dl_offset: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        let s = TddSchedule::default();
        Self { ul_offset: s.ul_offset, dl_offset: s.dl_offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutocorrelationSource {
    /// Sample average over the true UL responses of the training frames.
    Training,
    /// Sample average over every true UL response of the realization.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    pub autocorrelation: AutocorrelationSource,
    /// Per-subcarrier scalar shrinkage instead of the full matrix filter.
    pub scalar_mmse: bool,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self { autocorrelation: AutocorrelationSource::Training, scalar_mmse: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub bptt_len: usize,
    /// Input noise during training, in dB below the mean input power.
    /// `inf` disables it.
    pub input_noise_db: f64,
    /// Teacher-forced steps at the start of each closed-loop training window.
    pub closed_loop_warmup: usize,
    pub feedback_gradient: FeedbackGradient,
    /// Train on every n-th subcarrier only.
    pub subcarrier_stride: usize,
    /// One model per subcarrier instead of one shared model.
    pub per_subcarrier: bool,
    pub clip_norm: Option<f64>,
    /// Fail instead of training when a checkpoint is missing.
    pub load_checkpoints: bool,
}

impl Default for PredictorSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        let t = TrainConfig::default();
        Self {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            epochs: t.epochs,
            batch_size: t.batch_size,
            bptt_len: t.bptt_len,
            input_noise_db: 25.0,
            closed_loop_warmup: 10,
            feedback_gradient: FeedbackGradient::Detached,
            subcarrier_stride: 1,
            per_subcarrier: false,
            clip_norm: None,
            load_checkpoints: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_realizations: usize,
    pub train_fraction: f64,
    pub ssnr_sweep_db: Vec<f64>,
    pub estimators: Vec<EstimateMethod>,
    pub predictor_modes: Vec<PredictorMode>,
    pub output_dir: PathBuf,
    pub scenario: Scenario,
    pub channel: ChannelSection,
    pub link: LinkSection,
    pub estimation: EstimationSection,
    pub predictor: PredictorSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_realizations: 10,
            train_fraction: 0.8,
            ssnr_sweep_db: (0..=8).map(|i| 5.0 * i as f64).collect(),
            estimators: vec![EstimateMethod::Ls, EstimateMethod::LsMmse],
            predictor_modes: vec![PredictorMode::Interpolation, PredictorMode::OpenLoop, PredictorMode::ClosedLoop],
            output_dir: PathBuf::from("out"),
            scenario: Scenario::default(),
            channel: ChannelSection::default(),
            link: LinkSection::default(),
            estimation: EstimationSection::default(),
            predictor: PredictorSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Full-size setup: 10 realizations of 2000 frames, 200 hidden units.
    pub fn paper() -> Self {
        let mut c = Self::default();
        c.scenario.dataset_size = Some(20_000);
        c
    }

    /// Small, fast profile: 2 realizations of 400 frames, 32 hidden units,
    /// 20 epochs, training on every fourth subcarrier.
    pub fn quick() -> Self {
        let mut c = Self::default();
        c.n_realizations = 2;
        c.scenario.csi_size = 400;
        c.scenario.hidden_neurons = 32;
        c.predictor.epochs = 20;
        c.predictor.learning_rate = 1e-2;
        c.predictor.batch_size = 32;
        c.predictor.subcarrier_stride = 4;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return config(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.ssnr_sweep_db.is_empty() || self.ssnr_sweep_db.iter().any(|v| !v.is_finite()) {
            return config("ssnr_sweep_db must be a non-empty list of finite values");
        }
        if self.estimators.is_empty() {
            return config("no estimators selected");
        }
        if self.predictor_modes.is_empty() {
            return config("no predictor modes selected");
        }
        if self.n_realizations == 0 {
            return config("n_realizations must be positive");
        }
        for (name, v) in [
            ("dft_size", s.dft_size),
            ("n_taps", s.n_taps),
            ("csi_size", s.csi_size),
            ("hidden_neurons", s.hidden_neurons),
        ] {
            if v == 0 {
                return config(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("path_length_m", s.path_length_m),
            ("speed_mps", s.speed_mps),
            ("dt_s", s.dt_s),
            ("d_dec_m", s.d_dec_m),
            ("carrier_frequency_hz", self.channel.carrier_frequency_hz),
            ("subcarrier_spacing_hz", self.channel.subcarrier_spacing_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return config(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(total) = s.dataset_size {
            let implied = s.csi_size * self.n_realizations;
            if total != implied {
                return config(format!(
                    "dataset_size {total} does not equal csi_size {} x n_realizations {} = {implied}",
                    s.csi_size, self.n_realizations
                ));
            }
        }
        if let Some(b) = s.beta {
            if !(b >= 0.0) {
                return config("beta must be non-negative");
            }
        }
        let (train, test) = self.split();
        if train < 2 || test < 1 {
            return config(format!("split {train}/{test} leaves too few frames"));
        }
        if self.predictor.input_noise_db.is_nan() {
            return config("input_noise_db must be a number or inf");
        }
        if self.predictor.subcarrier_stride == 0 {
            return config("subcarrier_stride must be positive");
        }
        self.schedule().validate()?;
        self.geometry().validate()?;
        self.correlation().validate()?;
        self.train_config(false).validate()?;
        Ok(())
    }

    /// Training and test frame counts per realization.
    pub fn split(&self) -> (usize, usize) {
        let n = self.scenario.csi_size;
        let train = ((n as f64) * self.train_fraction).round() as usize;
        let train = train.min(n);
        (train, n - train)
    }

    pub fn beta(&self) -> f64 {
        self.scenario.beta.unwrap_or_else(|| self.scenario.modulation.beta())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            tx_position: self.channel.tx_position,
            rx_path_start: self.channel.rx_path_start,
            rx_direction: self.channel.rx_direction,
            rx_speed: self.scenario.speed_mps,
            path_length: self.scenario.path_length_m,
            carrier_frequency: self.channel.carrier_frequency_hz,
        }
    }

    pub fn correlation(&self) -> CorrelationConfig {
        let mut c = CorrelationConfig::new(self.scenario.d_dec_m);
        if let Some(m) = self.channel.cross_correlation {
            c.cross_correlation = m;
        }
        c
    }

    pub fn trace_params(&self) -> TraceParams {
        let ch = &self.channel;
        TraceParams {
            n_frames: self.scenario.csi_size,
            frame_interval: self.scenario.dt_s,
            n_subcarriers: self.scenario.dft_size,
            subcarrier_spacing: ch.subcarrier_spacing_hz,
            taps: TapDrawConfig {
                n_taps: self.scenario.n_taps,
                k_factor_mu_db: self.scenario.kf_mu_db,
                k_factor_sigma_db: self.scenario.kf_sigma_db,
                delay_spread: ch.delay_spread,
                delay_scaling: ch.delay_scaling,
                tap_shadowing_db: ch.tap_shadowing_db,
                azimuth_departure_spread: ch.azimuth_departure_spread,
                zenith_departure_spread: ch.zenith_departure_spread,
                azimuth_arrival_spread: ch.azimuth_arrival_spread,
                zenith_arrival_spread: ch.zenith_arrival_spread,
            },
            shadow_fading_db: ch.shadow_fading_db,
        }
    }

    pub fn schedule(&self) -> TddSchedule {
        TddSchedule {
            frame_interval: self.scenario.dt_s,
            ul_offset: self.link.ul_offset,
            dl_offset: self.link.dl_offset,
        }
    }

    pub fn train_config(&self, closed_loop: bool) -> TrainConfig {
        let p = &self.predictor;
        TrainConfig {
            adam: AdamConfig { learning_rate: p.learning_rate, beta1: p.beta1, beta2: p.beta2, epsilon: p.epsilon },
            epochs: p.epochs,
            batch_size: p.batch_size,
            bptt_len: p.bptt_len,
            input_noise_db: p.input_noise_db.is_finite().then_some(p.input_noise_db),
            feedback: closed_loop.then_some(FeedbackConfig { warmup: p.closed_loop_warmup, gradient: p.feedback_gradient }),
            clip_norm: p.clip_norm,
        }
    }

    /// Seed of realization `r`.
    pub fn realization_seed(&self, r: usize) -> u64 {
        crate::rng::derive(self.seed, "realization", r as u64)
    }

    /// SHA-256 of the canonical JSON form of the configuration, excluding
    /// the output directory.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_profile_dataset_arithmetic() {
        let c = ExperimentConfig::paper();
        c.validate().unwrap();
        assert_eq!(c.scenario.csi_size * c.n_realizations, 20_000);
        assert_eq!(c.split(), (1600, 400));
        assert_eq!(c.split().0 * c.n_realizations, 16_000);
        assert_eq!(c.split().1 * c.n_realizations, 4_000);
    }

    #[test]
    fn inconsistent_dataset_size_is_rejected() {
        let mut c = ExperimentConfig::paper();
        c.n_realizations = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn quick_profile_is_valid() {
        let c = ExperimentConfig::quick();
        c.validate().unwrap();
        assert_eq!(c.scenario.csi_size, 400);
        assert_eq!(c.n_realizations, 2);
        assert_eq!(c.scenario.hidden_neurons, 32);
        assert_eq!(c.predictor.epochs, 20);
    }

    #[test]
    fn empty_modes_rejected() {
        let mut c = ExperimentConfig::quick();
        c.predictor_modes.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = ExperimentConfig::quick();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fingerprint(), c.fingerprint());

        let partial = "seed = 9\nestimators = [\"LS\"]\npredictor_modes = [\"interpolation\"]\n[scenario]\ncsi_size = 500\ndataset_size = 5000\n";
        let p = ExperimentConfig::from_toml(partial).unwrap();
        assert_eq!(p.seed, 9);
        assert_eq!(p.scenario.csi_size, 500);
        assert_eq!(p.scenario.modulation, Modulation::Qam16);
        p.validate().unwrap();
        assert!(ExperimentConfig::from_toml("bogus_key = 1").is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = ExperimentConfig::quick();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
