//! Framed TDD pilot exchange: unit-energy QAM pilots on every subcarrier,
//! an additive complex Gaussian receiver, and the UL/DL slot timing.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::rng;

/// Square QAM constellations normalized to unit average energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Modulation {
    Qam4,
    Qam16,
    Qam64,
}

impl Modulation {
    pub fn from_order(order: u32) -> Result<Self> {
        match order {
            4 => Ok(Modulation::Qam4),
            16 => Ok(Modulation::Qam16),
            64 => Ok(Modulation::Qam64),
            o => config(format!("unsupported constellation {o}-QAM (use 4, 16 or 64)")),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Modulation::Qam4 => 4,
            Modulation::Qam16 => 16,
            Modulation::Qam64 => 64,
        }
    }

    fn side(self) -> u32 {
        match self {
            Modulation::Qam4 => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 8,
        }
    }

    /// All constellation points.
    pub fn points(self) -> Vec<Complex64> {
        let m = self.side();
        let levels: Vec<f64> = (0..m).map(|i| (2 * i) as f64 - (m - 1) as f64).collect();
        // Average energy of the unnormalized grid is 2(M-1)/3.
        let scale = (2.0 * (self.order() as f64 - 1.0) / 3.0).sqrt();
        let mut pts = Vec::with_capacity(self.order() as usize);
        for &re in &levels {
            for &im in &levels {
                pts.push(Complex64::new(re, im) / scale);
            }
        }
        pts
    }

    /// `E{|P|^2} * E{1/|P|^2}` over the constellation, the constant that
    /// scales the noise term of the LMMSE filter. 17/9 for 16-QAM.
    pub fn beta(self) -> f64 {
        let pts = self.points();
        let n = pts.len() as f64;
        let e: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / n;
        let inv: f64 = pts.iter().map(|p| 1.0 / p.norm_sqr()).sum::<f64>() / n;
        e * inv
    }
}

impl TryFrom<u32> for Modulation {
    type Error = crate::Error;
    fn try_from(v: u32) -> Result<Self> {
        Modulation::from_order(v)
    }
}

impl From<Modulation> for u32 {
    fn from(m: Modulation) -> u32 {
        m.order()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotFrame {
    pub symbols: Vec<Complex64>,
    pub frame_index: usize,
    pub slot_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedPilot {
    pub symbols: Vec<Complex64>,
    pub noise_variance: f64,
    pub frame_index: usize,
}

/// Draws a pilot frame uniformly from the constellation.
pub fn make_pilot_frame(n_subcarriers: usize, modulation: Modulation, seed: u64) -> PilotFrame {
    let pts = modulation.points();
    let mut rng = rng::stream(seed, "pilot", 0);
    let symbols = (0..n_subcarriers).map(|_| pts[rng.random_range(0..pts.len())]).collect();
    PilotFrame { symbols, frame_index: 0, slot_time: 0.0 }
}

/// `P_r(k) = P(k) H(k) + n(k)` with `n ~ CN(0, 1/ssnr)`. An infinite SSNR
/// disables the noise.
pub fn transmit_pilot(
    frame: &PilotFrame,
    h: &[Complex64],
    ssnr: f64,
    seed: u64,
) -> Result<ReceivedPilot> {
    if h.len() != frame.symbols.len() {
        return domain(format!(
            "channel has {} subcarriers, pilot frame {}",
            h.len(),
            frame.symbols.len()
        ));
    }
    if !(ssnr > 0.0) {
        return domain(format!("ssnr must be positive, got {ssnr}"));
    }
    let noise_variance = if ssnr.is_infinite() { 0.0 } else { 1.0 / ssnr };
    let sd = (noise_variance / 2.0).sqrt();
    let mut rng = rng::stream(seed, "pilot-noise", frame.frame_index as u64);
    let symbols = frame
        .symbols
        .iter()
        .zip(h)
        .map(|(p, h)| {
            let clean = p * h;
            if noise_variance == 0.0 {
                clean
            } else {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                clean + Complex64::new(re, im) * sd
            }
        })
        .collect();
    Ok(ReceivedPilot { symbols, noise_variance, frame_index: frame.frame_index })
}

/// UL and DL instants within each frame, as fractions of the frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TddSchedule {
    pub frame_interval: f64,
    pub ul_offset: f64,
    pub dl_offset: f64,
}

impl Default for TddSchedule {
    fn default() -> Self {
        Self { frame_interval: 5e-3, ul_offset: 0.0, dl_offset: 0.5 }
    }
}

impl TddSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_interval > 0.0 && self.frame_interval.is_finite()) {
            return config(format!("frame interval must be positive, got {}", self.frame_interval));
        }
        if !(0.0 <= self.ul_offset && self.ul_offset < self.dl_offset && self.dl_offset <= 1.0) {
            return config(format!(
                "need 0 <= ul_offset < dl_offset <= 1, got {} and {}",
                self.ul_offset, self.dl_offset
            ));
        }
        Ok(())
    }

    pub fn ul_time(&self, n: usize) -> f64 {
        (n as f64 + self.ul_offset) * self.frame_interval
    }

    pub fn dl_time(&self, n: usize) -> f64 {
        (n as f64 + self.dl_offset) * self.frame_interval
    }
}

/// `(ul_time, dl_time)` for frames `0..n_frames`.
pub fn schedule_slots(schedule: &TddSchedule, n_frames: usize) -> Vec<(f64, f64)> {
    (0..n_frames).map(|n| (schedule.ul_time(n), schedule.dl_time(n))).collect()
}

/// Sends one pilot frame per trace row and returns the received pilots.
/// Frame `n` uses a pilot drawn from `(seed, n)` and independent noise.
pub fn transmit_series(
    ul: &ndarray::Array2<Complex64>,
    modulation: Modulation,
    ssnr: f64,
    seed: u64,
) -> Result<Vec<(PilotFrame, ReceivedPilot)>> {
    ul.outer_iter()
        .enumerate()
        .map(|(n, h)| {
            let mut frame = make_pilot_frame(h.len(), modulation, rng::derive(seed, "frame", n as u64));
            frame.frame_index = n;
            let h: Vec<Complex64> = h.to_vec();
            let rx = transmit_pilot(&frame, &h, ssnr, seed)?;
            Ok((frame, rx))
        })
        .collect()
}
