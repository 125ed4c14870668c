//! Uplink channel estimation from received pilots.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linksim::{PilotFrame, ReceivedPilot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimateMethod {
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "LSMMSE")]
    LsMmse,
}

impl EstimateMethod {
    pub fn tag(self) -> &'static str {
        match self {
            EstimateMethod::Ls => "LS",
            EstimateMethod::LsMmse => "LSMMSE",
        }
    }
}

impl std::str::FromStr for EstimateMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "LS" => Ok(EstimateMethod::Ls),
            "LSMMSE" | "MMSE" => Ok(EstimateMethod::LsMmse),
            _ => Err(Error::Config(format!("unknown estimator '{s}'"))),
        }
    }
}

/// Per-frame UL estimates, `n_frames x n_subcarriers`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub estimates: Array2<Complex64>,
    pub method: EstimateMethod,
    pub ssnr: f64,
}

/// `H_LS(k) = P_r(k) / P(k)`.
pub fn ls_estimate(received: &ReceivedPilot, frame: &PilotFrame) -> Result<Vec<Complex64>> {
    if received.symbols.len() != frame.symbols.len() {
        return domain("received and transmitted pilot lengths differ");
    }
    received
        .symbols
        .iter()
        .zip(&frame.symbols)
        .enumerate()
        .map(|(k, (r, p))| {
            if *p == Complex64::new(0.0, 0.0) {
                domain(format!("pilot symbol at subcarrier {k} is zero"))
            } else {
                Ok(r / p)
            }
        })
        .collect()
}

/// Channel autocorrelation and noise scaling for the LMMSE filter.
#[derive(Debug, Clone)]
pub struct MmseContext {
    pub autocorrelation: DMatrix<Complex64>,
    /// `W = beta * sigma_n^2 / E{|P|^2}` with unit pilot energy.
    pub noise_scale: f64,
    pub beta: f64,
}

impl MmseContext {
    pub fn new(autocorrelation: DMatrix<Complex64>, ssnr: f64, beta: f64) -> Result<Self> {
        if !autocorrelation.is_square() || autocorrelation.nrows() == 0 {
            return domain("autocorrelation must be a non-empty square matrix");
        }
        if !(ssnr > 0.0) || !(beta >= 0.0) {
            return domain(format!("need ssnr > 0 and beta >= 0, got {ssnr} and {beta}"));
        }
        let noise_scale = if ssnr.is_infinite() { 0.0 } else { beta / ssnr };
        let r = &autocorrelation;
        let herm = (r + r.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(Self { autocorrelation: herm, noise_scale, beta })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.autocorrelation.nrows()
    }

    /// Same autocorrelation at a different SSNR.
    pub fn with_ssnr(&self, ssnr: f64) -> Result<Self> {
        MmseContext::new(self.autocorrelation.clone(), ssnr, self.beta)
    }

    /// Precomputes `R (R + W I)^{-1}` so a whole series can be filtered with
    /// one matrix product per frame.
    pub fn filter(&self) -> Result<DMatrix<Complex64>> {
        let n = self.n_subcarriers();
        let a = self.system_matrix();
        let chol = Cholesky::new(a).ok_or_else(|| singular(self.noise_scale))?;
        // (R + W I) is Hermitian, so R (R + W I)^{-1} = ((R + W I)^{-1} R)^H.
        let x = chol.solve(&self.autocorrelation);
        let f = x.adjoint();
        debug_assert_eq!(f.nrows(), n);
        Ok(f)
    }

    fn system_matrix(&self) -> DMatrix<Complex64> {
        let n = self.n_subcarriers();
        &self.autocorrelation + DMatrix::<Complex64>::identity(n, n) * Complex64::new(self.noise_scale, 0.0)
    }
}

fn singular(w: f64) -> Error {
    Error::Numerical(format!(
        "R_hh + W I is not positive definite (W = {w}); the autocorrelation is rank deficient"
    ))
}

/// Sample autocorrelation `mean(H H^H)` over the given frequency responses,
/// made exactly Hermitian.
pub fn build_mmse_context<'a, I>(channel_samples: I, ssnr: f64, beta: f64) -> Result<MmseContext>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let mut acc: Option<DMatrix<Complex64>> = None;
    let mut count = 0usize;
    for h in channel_samples {
        let v = DVector::from_column_slice(h);
        let outer = &v * v.adjoint();
        match acc.as_mut() {
            None => acc = Some(outer),
            Some(a) => {
                if a.nrows() != v.len() {
                    return domain("channel samples have different lengths");
                }
                *a += outer;
            }
        }
        count += 1;
    }
    let Some(sum) = acc else {
        return domain("no channel samples for the autocorrelation");
    };
    MmseContext::new(sum / Complex64::new(count as f64, 0.0), ssnr, beta)
}

/// `R (R + W I)^{-1} H_LS`, via a Cholesky solve of the Hermitian system.
pub fn mmse_estimate(h_ls: &[Complex64], ctx: &MmseContext) -> Result<Vec<Complex64>> {
    if h_ls.len() != ctx.n_subcarriers() {
        return domain(format!(
            "estimate has {} subcarriers, context {}",
            h_ls.len(),
            ctx.n_subcarriers()
        ));
    }
    let chol = Cholesky::new(ctx.system_matrix()).ok_or_else(|| singular(ctx.noise_scale))?;
    let x = chol.solve(&DVector::from_column_slice(h_ls));
    Ok((&ctx.autocorrelation * x).iter().copied().collect())
}

/// Per-subcarrier scalar shrinkage `r_kk / (r_kk + W)`, using only the
/// diagonal of the autocorrelation.
pub fn mmse_estimate_scalar(h_ls: &[Complex64], ctx: &MmseContext) -> Result<Vec<Complex64>> {
    if h_ls.len() != ctx.n_subcarriers() {
        return domain("estimate and context sizes differ");
    }
    h_ls.iter()
        .enumerate()
        .map(|(k, h)| {
            let r = ctx.autocorrelation[(k, k)].re;
            let d = r + ctx.noise_scale;
            if d <= 0.0 {
                Err(singular(ctx.noise_scale))
            } else {
                Ok(h * (r / d))
            }
        })
        .collect()
}

/// Applies LS to every row, then optionally the LMMSE filter.
pub fn estimate_series(
    pilots: &[(PilotFrame, ReceivedPilot)],
    method: EstimateMethod,
    ssnr: f64,
    ctx: Option<&MmseContext>,
    scalar_mmse: bool,
) -> Result<EstimateSeries> {
    let n = pilots.len();
    if n == 0 {
        return domain("no pilots to estimate from");
    }
    let m = pilots[0].0.symbols.len();
    let mut out = Array2::zeros((n, m));
    let filter = match (method, ctx, scalar_mmse) {
        (EstimateMethod::LsMmse, Some(c), false) => Some(c.filter()?),
        (EstimateMethod::LsMmse, None, _) => return domain("LS-MMSE needs an autocorrelation context"),
        _ => None,
    };
    for (t, (frame, rx)) in pilots.iter().enumerate() {
        let ls = ls_estimate(rx, frame)?;
        let row: Vec<Complex64> = match (method, &filter) {
            (EstimateMethod::Ls, _) => ls,
            (EstimateMethod::LsMmse, Some(f)) => (f * DVector::from_vec(ls)).iter().copied().collect(),
            (EstimateMethod::LsMmse, None) => mmse_estimate_scalar(&ls, ctx.expect("checked above"))?,
        };
        if row.len() != m {
            return domain("pilot frames have different lengths");
        }
        for (k, v) in row.into_iter().enumerate() {
            out[[t, k]] = v;
        }
    }
    Ok(EstimateSeries { estimates: out, method, ssnr })
}
