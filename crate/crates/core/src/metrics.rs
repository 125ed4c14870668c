//! Prediction accuracy and SNR bookkeeping.

use ndarray::ArrayView2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Normalized MSE of a prediction block. `method`, `mode` and `ssnr_db`
/// are labels filled in by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseReport {
    pub nmse_real: f64,
    pub nmse_imag: f64,
    pub nmse_avg: f64,
    pub n_predictions: usize,
    pub n_subcarriers: usize,
    pub method: String,
    pub mode: String,
    pub ssnr_db: f64,
}

impl NmseReport {
    pub fn nmse_avg_db(&self) -> f64 {
        to_db(self.nmse_avg)
    }

    pub fn labeled(mut self, method: &str, mode: &str, ssnr_db: f64) -> Self {
        self.method = method.to_string();
        self.mode = mode.to_string();
        self.ssnr_db = ssnr_db;
        self
    }
}

/// Per-element normalized squared error of the real and imaginary parts:
/// `mean(((pred - truth).re / |truth|)^2)` and likewise for `.im`.
pub fn nmse(predicted: ArrayView2<Complex64>, truth: ArrayView2<Complex64>) -> Result<NmseReport> {
    if predicted.dim() != truth.dim() {
        return domain(format!("shape {:?} vs {:?}", predicted.dim(), truth.dim()));
    }
    let (n, m) = truth.dim();
    if n == 0 || m == 0 {
        return domain("empty prediction block");
    }
    let (mut sr, mut si) = (0.0, 0.0);
    for ((idx, h), p) in truth.indexed_iter().zip(predicted.iter()) {
        let mag = h.norm();
        if !(mag >= 1e-12) {
            return Err(Error::DegenerateNormalizer { frame: idx.0, subcarrier: idx.1 });
        }
        let e = (p - h) / mag;
        sr += e.re * e.re;
        si += e.im * e.im;
    }
    let count = (n * m) as f64;
    let (nmse_real, nmse_imag) = (sr / count, si / count);
    Ok(NmseReport {
        nmse_real,
        nmse_imag,
        nmse_avg: 0.5 * (nmse_real + nmse_imag),
        n_predictions: n,
        n_subcarriers: m,
        method: String::new(),
        mode: String::new(),
        ssnr_db: f64::NAN,
    })
}

/// Instantaneous SNR: SSNR scaled by the channel gain `|h|^2`.
pub fn snr(ssnr: f64, h: Complex64) -> f64 {
    ssnr * h.norm_sqr()
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let h = Array2::from_shape_fn((3, 5), |(i, k)| c(1.0 + i as f64, k as f64));
        let r = nmse(h.view(), h.view()).unwrap();
        assert_eq!(r.nmse_avg, 0.0);
    }

    #[test]
    fn single_element() {
        let r = nmse(array![[c(1.1, 0.0)]].view(), array![[c(1.0, 0.0)]].view()).unwrap();
        assert!((r.nmse_real - 0.01).abs() < 1e-12);
        assert_eq!(r.nmse_imag, 0.0);
        assert!((r.nmse_avg - 0.005).abs() < 1e-12);
    }

    #[test]
    fn predicting_zero_scores_one_half() {
        let h = Array2::from_shape_fn((4, 4), |(i, k)| c(i as f64 + 0.5, -(k as f64)));
        let z = Array2::zeros((4, 4));
        assert!((nmse(z.view(), h.view()).unwrap().nmse_avg - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_normalizer_reports_index() {
        let mut h = Array2::from_elem((2, 3), c(1.0, 0.0));
        h[[1, 2]] = c(0.0, 1e-13);
        match nmse(h.view(), h.view()) {
            Err(Error::DegenerateNormalizer { frame, subcarrier }) => assert_eq!((frame, subcarrier), (1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn snr_and_db() {
        assert!((snr(10.0, c(0.5f64.sqrt(), 0.0)) - 5.0).abs() < 1e-12);
        assert_eq!(snr(10.0, c(0.0, 0.0)), 0.0);
        assert!((from_db(20.0) - 100.0).abs() < 1e-12);
        assert!((to_db(from_db(20.0)) - 20.0).abs() < 1e-12);
    }

    fn block(seed: u64, n: usize, m: usize) -> (Array2<Complex64>, Array2<Complex64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = Array2::from_shape_fn((n, m), |_| c(rng.random_range(0.1..2.0), rng.random_range(-2.0..2.0)));
        let p = Array2::from_shape_fn((n, m), |_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
        (p, t)
    }

    proptest! {
        #[test]
        fn average_is_mean_of_parts(seed in any::<u64>(), n in 1usize..20, m in 1usize..20) {
            let (p, t) = block(seed, n, m);
            let r = nmse(p.view(), t.view()).unwrap();
            prop_assert!(r.nmse_real >= 0.0 && r.nmse_imag >= 0.0);
            prop_assert!((r.nmse_avg - 0.5 * (r.nmse_real + r.nmse_imag)).abs() < 1e-12);
        }

        #[test]
        fn positive_scaling_invariance(seed in any::<u64>(), a in 0.01f64..100.0) {
            let (p, t) = block(seed, 4, 6);
            let r0 = nmse(p.view(), t.view()).unwrap();
            let s = c(a, 0.0);
            let r1 = nmse(p.mapv(|v| v * s).view(), t.mapv(|v| v * s).view()).unwrap();
            prop_assert!((r0.nmse_avg - r1.nmse_avg).abs() < 1e-10 * r0.nmse_avg.max(1.0));
        }

        #[test]
        fn equal_blocks_average(seed in any::<u64>(), n in 1usize..10, m in 1usize..10) {
            let (p1, t1) = block(seed, n, m);
            let (p2, t2) = block(seed ^ 0xABCD, n, m);
            let a = nmse(p1.view(), t1.view()).unwrap().nmse_avg;
            let b = nmse(p2.view(), t2.view()).unwrap().nmse_avg;
            let p = ndarray::concatenate![ndarray::Axis(0), p1, p2];
            let t = ndarray::concatenate![ndarray::Axis(0), t1, t2];
            let both = nmse(p.view(), t.view()).unwrap().nmse_avg;
            prop_assert!((both - 0.5 * (a + b)).abs() < 1e-12 * both.max(1.0));
        }
    }
}
