use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::response::{accumulate_response, phase_term};
use super::{
    draw_large_scale_field, generate_taps, CorrelationConfig, LargeScaleParams, LosBearing,
    TapDrawConfig, TapSet, SPEED_OF_LIGHT,
};
use crate::error::{config, domain, Result};
use crate::rng;

/// Transmitter position and the straight receiver path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub tx_position: [f64; 3],
    pub rx_path_start: [f64; 3],
    /// Direction of travel; normalized internally.
    pub rx_direction: [f64; 3],
    pub rx_speed: f64,
    pub path_length: f64,
    pub carrier_frequency: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            tx_position: [0.0, 0.0, 10.0],
            rx_path_start: [-50.0, 20.0, 1.5],
            rx_direction: [1.0, 0.0, 0.0],
            rx_speed: 10.0,
            path_length: 100.0,
            carrier_frequency: 1.0e9,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.rx_speed > 0.0 && self.rx_speed.is_finite()) {
            return config(format!("rx_speed must be positive, got {}", self.rx_speed));
        }
        if !(self.path_length > 0.0 && self.path_length.is_finite()) {
            return config(format!("path_length must be positive, got {}", self.path_length));
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return config(format!(
                "carrier_frequency must be positive, got {}",
                self.carrier_frequency
            ));
        }
        if norm(&self.rx_direction) == 0.0 {
            return config("rx_direction must be non-zero");
        }
        Ok(())
    }

    fn unit_direction(&self) -> [f64; 3] {
        let n = norm(&self.rx_direction);
        self.rx_direction.map(|v| v / n)
    }

    /// Receiver position after travelling `s` meters.
    pub fn position_at_distance(&self, s: f64) -> [f64; 3] {
        let u = self.unit_direction();
        [
            self.rx_path_start[0] + s * u[0],
            self.rx_path_start[1] + s * u[1],
            self.rx_path_start[2] + s * u[2],
        ]
    }

    pub fn position_at(&self, t: f64) -> [f64; 3] {
        self.position_at_distance(self.rx_speed * t)
    }

    pub fn los_bearing(&self, rx: &[f64; 3]) -> LosBearing {
        let d = sub(rx, &self.tx_position);
        let (az, zen) = angles(&d);
        let (az_a, zen_a) = angles(&d.map(|v| -v));
        LosBearing { departure: (az, zen), arrival: (az_a, zen_a) }
    }
}

/// Sampling and spectral parameters of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceParams {
    pub n_frames: usize,
    pub frame_interval: f64,
    pub n_subcarriers: usize,
    pub subcarrier_spacing: f64,
    pub taps: TapDrawConfig,
    /// Log-normal shadow fading standard deviation in dB, driven by the SF
    /// deviate of the large-scale field.
    pub shadow_fading_db: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            n_frames: 2000,
            frame_interval: 5e-3,
            n_subcarriers: 128,
            subcarrier_spacing: 30e3,
            taps: TapDrawConfig::default(),
            shadow_fading_db: 4.0,
        }
    }
}

/// True frequency responses of one realization sampled once per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    /// `n_frames x n_subcarriers`.
    pub responses: Array2<Complex64>,
    pub frame_interval: f64,
    /// Sampling instant of frame `n` is `n * frame_interval + time_offset`.
    pub time_offset: f64,
    pub realization_seed: u64,
}

impl ChannelTrace {
    pub fn n_frames(&self) -> usize {
        self.responses.nrows()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.responses.ncols()
    }

    pub fn time_of(&self, frame: usize) -> f64 {
        frame as f64 * self.frame_interval + self.time_offset
    }

    /// Frames `start..end` as a new trace with shifted time origin.
    pub fn frames(&self, start: usize, end: usize) -> ChannelTrace {
        ChannelTrace {
            responses: self.responses.slice(s![start..end, ..]).to_owned(),
            frame_interval: self.frame_interval,
            time_offset: self.time_of(start),
            realization_seed: self.realization_seed,
        }
    }
}

#[derive(Debug, Clone)]
struct Segment {
    start: [f64; 3],
    los_distance: f64,
    taps: TapSet,
    /// Unit vectors pointing from the receiver toward each tap's arrival.
    arrival_dirs: Vec<[f64; 3]>,
}

/// A channel realization: one tap set per decorrelation-distance segment of
/// the path, plus the shadow-fading deviate at every sampling instant.
///
/// The large-scale field is drawn jointly over the segment starts and all
/// sample positions of every requested time offset, so traces taken at
/// different offsets (for example uplink and downlink slots) see one
/// consistent channel.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    geometry: Geometry,
    params: TraceParams,
    seed: u64,
    segment_length: f64,
    segments: Vec<Segment>,
    segment_lsp: Vec<LargeScaleParams>,
    offsets: Vec<f64>,
    /// `[offset][frame]` shadow-fading deviate.
    sf_x: Vec<Vec<f64>>,
}

impl ChannelRealization {
    /// `time_offsets` are fractions of the frame interval, each in `[0, 1]`.
    pub fn new(
        geometry: &Geometry,
        correlation: &CorrelationConfig,
        params: &TraceParams,
        seed: u64,
        time_offsets: &[f64],
    ) -> Result<Self> {
        geometry.validate()?;
        correlation.validate()?;
        if !(params.frame_interval > 0.0 && params.frame_interval.is_finite()) {
            return config(format!("frame interval must be positive, got {}", params.frame_interval));
        }
        if params.n_frames == 0 {
            return domain("a trace needs at least one frame");
        }
        if params.n_subcarriers == 0 {
            return config("n_subcarriers must be at least 1");
        }
        if time_offsets.is_empty() || time_offsets.iter().any(|o| !(0.0..=1.0).contains(o)) {
            return config("time offsets must be fractions of the frame interval in [0, 1]");
        }
        let duration = params.n_frames as f64 * params.frame_interval;
        let reach = geometry.rx_speed * duration;
        if geometry.path_length / geometry.rx_speed < duration * (1.0 - 1e-12) {
            return domain(format!(
                "path of {} m at {} m/s is too short for {} frames of {} s ({reach} m needed)",
                geometry.path_length, geometry.rx_speed, params.n_frames, params.frame_interval
            ));
        }

        let d_dec = correlation.decorrelation_distance;
        let n_segments = (reach / d_dec).floor() as usize + 1;
        let mut positions: Vec<[f64; 3]> =
            (0..n_segments).map(|i| geometry.position_at_distance(i as f64 * d_dec)).collect();
        for &off in time_offsets {
            for n in 0..params.n_frames {
                positions.push(geometry.position_at((n as f64 + off) * params.frame_interval));
            }
        }
        let field = draw_large_scale_field(&positions, correlation, seed)?;

        let mut segments = Vec::with_capacity(n_segments);
        for (i, lsp) in field[..n_segments].iter().enumerate() {
            let start = positions[i];
            let bearing = geometry.los_bearing(&start);
            let taps =
                generate_taps(lsp, &params.taps, &bearing, rng::derive(seed, "segment", i as u64))?;
            let arrival_dirs = taps.taps.iter().map(|t| unit(t.arrival_angles)).collect();
            segments.push(Segment {
                start,
                los_distance: norm(&sub(&geometry.tx_position, &start)),
                taps,
                arrival_dirs,
            });
        }
        let sf_x = field[n_segments..]
            .chunks(params.n_frames)
            .map(|c| c.iter().map(|p| p.shadow_fading_x).collect())
            .collect();

        Ok(Self {
            geometry: geometry.clone(),
            params: params.clone(),
            seed,
            segment_length: d_dec,
            segments,
            segment_lsp: field[..n_segments].to_vec(),
            offsets: time_offsets.to_vec(),
            sf_x,
        })
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segment_taps(&self, i: usize) -> &TapSet {
        &self.segments[i].taps
    }

    pub fn segment_lsp(&self, i: usize) -> &LargeScaleParams {
        &self.segment_lsp[i]
    }

    /// Shadow-fading deviates at every frame of offset `j`.
    pub fn shadow_fading_x(&self, j: usize) -> &[f64] {
        &self.sf_x[j]
    }

    /// Per-tap complex gains at time `t`, excluding shadow fading.
    fn tap_gains(&self, seg: &Segment, rx: &[f64; 3]) -> Vec<Complex64> {
        let f = self.geometry.carrier_frequency;
        let moved = sub(rx, &seg.start);
        seg.taps
            .taps
            .iter()
            .zip(&seg.arrival_dirs)
            .map(|(tap, u)| {
                let d = if tap.is_los {
                    norm(&sub(&self.geometry.tx_position, rx))
                } else {
                    // Plane-wave approximation around the segment start.
                    seg.los_distance + SPEED_OF_LIGHT * tap.delay - dot(u, &moved)
                };
                phase_term(f * d / SPEED_OF_LIGHT) * tap.power.sqrt()
            })
            .collect()
    }

    /// Trace sampled at the `j`-th requested time offset.
    pub fn trace(&self, j: usize) -> Result<ChannelTrace> {
        if j >= self.offsets.len() {
            return domain(format!("offset index {j} out of range ({})", self.offsets.len()));
        }
        let p = &self.params;
        let dt = p.frame_interval;
        let mut responses = Array2::zeros((p.n_frames, p.n_subcarriers));
        for (n, mut row) in responses.outer_iter_mut().enumerate() {
            let t = (n as f64 + self.offsets[j]) * dt;
            let s = self.geometry.rx_speed * t;
            let i = ((s / self.segment_length).floor() as usize).min(self.segments.len() - 1);
            let seg = &self.segments[i];
            let rx = self.geometry.position_at(t);
            let sf = 10f64.powf(p.shadow_fading_db * self.sf_x[j][n] / 20.0);
            let gains: Vec<Complex64> =
                self.tap_gains(seg, &rx).into_iter().map(|g| g * sf).collect();
            let out = row.as_slice_mut().expect("row-major trace");
            accumulate_response(&seg.taps, &gains, p.subcarrier_spacing, out)?;
        }
        if responses.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(crate::Error::Numerical("non-finite channel response".into()));
        }
        Ok(ChannelTrace {
            responses,
            frame_interval: dt,
            time_offset: self.offsets[j] * dt,
            realization_seed: self.seed,
        })
    }

    pub fn traces(&self) -> Result<Vec<ChannelTrace>> {
        (0..self.offsets.len()).map(|j| self.trace(j)).collect()
    }
}

/// Generates the true channel trace sampled at `n * frame_interval`.
pub fn trace_channel(
    geometry: &Geometry,
    correlation: &CorrelationConfig,
    params: &TraceParams,
    seed: u64,
) -> Result<ChannelTrace> {
    ChannelRealization::new(geometry, correlation, params, seed, &[0.0])?.trace(0)
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// (azimuth, zenith) of a vector.
fn angles(v: &[f64; 3]) -> (f64, f64) {
    let r = norm(v);
    (v[1].atan2(v[0]), (v[2] / r).clamp(-1.0, 1.0).acos())
}

fn unit((az, zen): (f64, f64)) -> [f64; 3] {
    [zen.sin() * az.cos(), zen.sin() * az.sin(), zen.cos()]
}
