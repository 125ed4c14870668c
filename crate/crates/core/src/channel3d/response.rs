use std::f64::consts::PI;

use num_complex::Complex64;

use super::{TapSet, SPEED_OF_LIGHT};
use crate::error::{domain, Result};

/// Complex gain of one tap at a given propagation distance.
///
/// With isotropic single-polarized antennas the antenna and coupling terms
/// collapse to 1, leaving `sqrt(P) * exp(-j 2 pi f d / c)`.
pub fn tap_response(power: f64, carrier_frequency: f64, distance: f64) -> Result<Complex64> {
    if !(distance > 0.0) {
        return domain(format!("tap distance must be positive, got {distance}"));
    }
    if power < 0.0 {
        return domain(format!("tap power must be non-negative, got {power}"));
    }
    Ok(phase_term(carrier_frequency * distance / SPEED_OF_LIGHT) * power.sqrt())
}

/// `exp(-j 2 pi cycles)`, with the integer part of `cycles` removed first so
/// that large electrical lengths keep full phase precision.
pub(crate) fn phase_term(cycles: f64) -> Complex64 {
    let frac = cycles - cycles.round();
    Complex64::from_polar(1.0, -2.0 * PI * frac)
}

/// `H(k) = sum_l g_l exp(-j 2 pi k df tau_l)` for `k = 0..n_subcarriers`.
pub fn frequency_response(
    taps: &TapSet,
    gains: &[Complex64],
    n_subcarriers: usize,
    subcarrier_spacing: f64,
) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); n_subcarriers];
    accumulate_response(taps, gains, subcarrier_spacing, &mut out)?;
    Ok(out)
}

pub(crate) fn accumulate_response(
    taps: &TapSet,
    gains: &[Complex64],
    subcarrier_spacing: f64,
    out: &mut [Complex64],
) -> Result<()> {
    if out.is_empty() {
        return domain("n_subcarriers must be at least 1");
    }
    if gains.len() != taps.len() {
        return domain(format!("{} gains for {} taps", gains.len(), taps.len()));
    }
    out.iter_mut().for_each(|h| *h = Complex64::new(0.0, 0.0));
    for (tap, &g) in taps.taps.iter().zip(gains) {
        // Step the phasor across subcarriers, re-anchoring periodically to
        // stop rounding drift.
        let step = phase_term(subcarrier_spacing * tap.delay);
        let mut rot = Complex64::new(1.0, 0.0);
        for (k, h) in out.iter_mut().enumerate() {
            if k % 16 == 0 {
                rot = phase_term(k as f64 * subcarrier_spacing * tap.delay);
            }
            *h += g * rot;
            rot *= step;
        }
    }
    Ok(())
}
