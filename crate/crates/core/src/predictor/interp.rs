use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::linksim::TddSchedule;

/// Value at `t` of the line through `(t0, v0)` and `(t1, v1)`.
pub fn linear_at(t0: f64, v0: Complex64, t1: f64, v1: Complex64, t: f64) -> Complex64 {
    v1 + (v1 - v0) * ((t - t1) / (t1 - t0))
}

/// Baseline DL forecast from UL estimates (time x subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub predictions: Array2<Complex64>,
    /// Set when fewer than two estimates were available and every frame fell
    /// back to holding the last value.
    pub held: bool,
}

/// For each frame, extrapolates the two most recent UL estimates to the DL
/// instant. Frame 0 has only one estimate and holds it.
pub fn interpolate_dl(estimates: ArrayView2<Complex64>, schedule: &TddSchedule) -> Interpolated {
    let n = estimates.nrows();
    let mut out = estimates.to_owned();
    if n < 2 {
        return Interpolated { predictions: out, held: true };
    }
    for t in 1..n {
        let (t0, t1, tdl) = (schedule.ul_time(t - 1), schedule.ul_time(t), schedule.dl_time(t));
        for k in 0..estimates.ncols() {
            out[[t, k]] = linear_at(t0, estimates[[t - 1, k]], t1, estimates[[t, k]], tdl);
        }
    }
    Interpolated { predictions: out, held: false }
}

/// Linear interpolation of UL estimates to the DL instant between frames
/// `t` and `t + 1`; the last frame is extrapolated. Used to put estimates on
/// the DL time lattice.
pub fn midpoints(estimates: ArrayView2<Complex64>, schedule: &TddSchedule) -> Array2<Complex64> {
    let n = estimates.nrows();
    let mut out = estimates.to_owned();
    for t in 0..n {
        let (a, b) = if t + 1 < n { (t, t + 1) } else if t > 0 { (t - 1, t) } else { continue };
        let (ta, tb, tdl) = (schedule.ul_time(a), schedule.ul_time(b), schedule.dl_time(t));
        for k in 0..estimates.ncols() {
            out[[t, k]] = linear_at(ta, estimates[[a, k]], tb, estimates[[b, k]], tdl);
        }
    }
    out
}
