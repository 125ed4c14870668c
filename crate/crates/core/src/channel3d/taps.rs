use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LargeScaleParams;
use crate::error::{domain, Result};
use crate::rng;

/// One resolvable multipath component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    /// Linear power, normalized over the tap set.
    pub power: f64,
    /// Excess delay in seconds.
    pub delay: f64,
    /// (azimuth, zenith) in radians.
    pub departure_angles: (f64, f64),
    /// (azimuth, zenith) in radians.
    pub arrival_angles: (f64, f64),
    pub is_los: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapSet {
    pub taps: Vec<Tap>,
}

impl TapSet {
    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.power).sum()
    }

    pub fn los(&self) -> Option<&Tap> {
        self.taps.iter().find(|t| t.is_los)
    }

    /// LoS-to-scattered power ratio in dB, `None` without a LoS tap or
    /// without scattered power.
    pub fn k_factor_db(&self) -> Option<f64> {
        let los = self.los()?.power;
        let nlos: f64 = self.taps.iter().filter(|t| !t.is_los).map(|t| t.power).sum();
        (nlos > 0.0).then(|| 10.0 * (los / nlos).log10())
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// A log-normal statistic: `value = 10^(mu + sigma * x)` for deviate `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalStat {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalStat {
    pub const fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }

    pub fn value(&self, deviate: f64) -> f64 {
        10f64.powf(self.mu + self.sigma * deviate)
    }
}

/// Distribution parameters for drawing a tap set from large-scale deviates.
/// Defaults follow urban-microcell LoS conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TapDrawConfig {
    pub n_taps: usize,
    /// Ricean K-factor statistics in dB: `K_dB = mu + sigma * X_KF`.
    pub k_factor_mu_db: f64,
    pub k_factor_sigma_db: f64,
    /// log10 of the RMS delay spread in seconds.
    pub delay_spread: LogNormalStat,
    /// Delay scaling between the drawn exponential delays and the RMS spread.
    pub delay_scaling: f64,
    /// Per-tap power perturbation in dB.
    pub tap_shadowing_db: f64,
    /// log10 of the angle spreads in degrees.
    pub azimuth_departure_spread: LogNormalStat,
    pub zenith_departure_spread: LogNormalStat,
    pub azimuth_arrival_spread: LogNormalStat,
    pub zenith_arrival_spread: LogNormalStat,
}

impl Default for TapDrawConfig {
    fn default() -> Self {
        Self {
            n_taps: 5,
            k_factor_mu_db: -3.0,
            k_factor_sigma_db: 0.5,
            delay_spread: LogNormalStat::new(-7.14, 0.38),
            delay_scaling: 3.0,
            tap_shadowing_db: 3.0,
            azimuth_departure_spread: LogNormalStat::new(1.21, 0.41),
            zenith_departure_spread: LogNormalStat::new(0.6, 0.4),
            azimuth_arrival_spread: LogNormalStat::new(1.73, 0.28),
            zenith_arrival_spread: LogNormalStat::new(0.73, 0.34),
        }
    }
}

/// Direction of the direct path at the point where taps are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosBearing {
    /// (azimuth, zenith) of the receiver as seen from the transmitter.
    pub departure: (f64, f64),
    /// (azimuth, zenith) of the transmitter as seen from the receiver.
    pub arrival: (f64, f64),
}

impl Default for LosBearing {
    fn default() -> Self {
        Self { departure: (0.0, PI / 2.0), arrival: (PI, PI / 2.0) }
    }
}

fn wrap_azimuth(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

fn fold_zenith(z: f64) -> f64 {
    // Reflect into [0, pi].
    let w = z.rem_euclid(2.0 * PI);
    if w > PI {
        2.0 * PI - w
    } else {
        w
    }
}

/// Draws `n_taps` taps: one LoS tap at zero delay carrying `K/(K+1)` of the
/// power, and `n_taps - 1` scattered taps with an exponential power delay
/// profile set by the delay-spread deviate.
pub fn generate_taps(
    lsp: &LargeScaleParams,
    cfg: &TapDrawConfig,
    bearing: &LosBearing,
    seed: u64,
) -> Result<TapSet> {
    if cfg.n_taps == 0 {
        return domain("a tap set needs at least one tap");
    }
    if cfg.n_taps == 1 {
        return Ok(TapSet {
            taps: vec![Tap {
                power: 1.0,
                delay: 0.0,
                departure_angles: bearing.departure,
                arrival_angles: bearing.arrival,
                is_los: true,
            }],
        });
    }

    let mut rng = rng::stream(seed, "taps", 0);
    let k_db = cfg.k_factor_mu_db + cfg.k_factor_sigma_db * lsp.k_factor_x;
    let k = 10f64.powf(k_db / 10.0);
    let ds = cfg.delay_spread.value(lsp.delay_spread_x);
    let n_scatter = cfg.n_taps - 1;

    let mut delays: Vec<f64> = (0..n_scatter)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
            -cfg.delay_scaling * ds * u.ln()
        })
        .collect();
    delays.sort_by(f64::total_cmp);

    let decay = (cfg.delay_scaling - 1.0) / (cfg.delay_scaling * ds);
    let raw: Vec<f64> = delays
        .iter()
        .map(|&tau| {
            let z: f64 = rng.sample(StandardNormal);
            (-tau * decay).exp() * 10f64.powf(-cfg.tap_shadowing_db * z / 10.0)
        })
        .collect();
    let raw_sum: f64 = raw.iter().sum();

    let deg = PI / 180.0;
    let asd = cfg.azimuth_departure_spread.value(lsp.azimuth_departure_x) * deg;
    let zsd = cfg.zenith_departure_spread.value(lsp.zenith_departure_x) * deg;
    let asa = cfg.azimuth_arrival_spread.value(lsp.azimuth_arrival_x) * deg;
    let zsa = cfg.zenith_arrival_spread.value(lsp.zenith_arrival_x) * deg;

    let mut taps = Vec::with_capacity(cfg.n_taps);
    taps.push(Tap {
        power: k / (k + 1.0),
        delay: 0.0,
        departure_angles: bearing.departure,
        arrival_angles: bearing.arrival,
        is_los: true,
    });
    for (tau, p) in delays.into_iter().zip(raw) {
        let mut g = || rng.sample::<f64, _>(StandardNormal);
        let departure = (
            wrap_azimuth(bearing.departure.0 + asd * g()),
            fold_zenith(bearing.departure.1 + zsd * g()),
        );
        let arrival = (
            wrap_azimuth(bearing.arrival.0 + asa * g()),
            fold_zenith(bearing.arrival.1 + zsa * g()),
        );
        taps.push(Tap {
            power: p / raw_sum / (k + 1.0),
            delay: tau,
            departure_angles: departure,
            arrival_angles: arrival,
            is_los: false,
        });
    }
    Ok(TapSet { taps })
}
