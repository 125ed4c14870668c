use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::rng;

/// Number of large-scale parameters.
pub const N_LSP: usize = 7;

/// Standard-normal deviates driving the large-scale behaviour at one
/// position. Order of the array form: DS, ASD, ZSD, ASA, ZSA, SF, KF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleParams {
    pub delay_spread_x: f64,
    pub azimuth_departure_x: f64,
    pub zenith_departure_x: f64,
    pub azimuth_arrival_x: f64,
    pub zenith_arrival_x: f64,
    pub shadow_fading_x: f64,
    pub k_factor_x: f64,
}

impl LargeScaleParams {
    pub fn from_array(x: [f64; N_LSP]) -> Self {
        Self {
            delay_spread_x: x[0],
            azimuth_departure_x: x[1],
            zenith_departure_x: x[2],
            azimuth_arrival_x: x[3],
            zenith_arrival_x: x[4],
            shadow_fading_x: x[5],
            k_factor_x: x[6],
        }
    }

    pub fn to_array(&self) -> [f64; N_LSP] {
        [
            self.delay_spread_x,
            self.azimuth_departure_x,
            self.zenith_departure_x,
            self.azimuth_arrival_x,
            self.zenith_arrival_x,
            self.shadow_fading_x,
            self.k_factor_x,
        ]
    }

    /// All deviates zero: every parameter sits at its median.
    pub fn median() -> Self {
        Self::from_array([0.0; N_LSP])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Distance in meters over which the field correlation drops to 1/e.
    pub decorrelation_distance: f64,
    /// Mixing matrix `M`; the correlated deviates are `M * X`.
    pub cross_correlation: [[f64; N_LSP]; N_LSP],
}

impl CorrelationConfig {
    pub fn new(decorrelation_distance: f64) -> Self {
        let mut m = [[0.0; N_LSP]; N_LSP];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { decorrelation_distance, cross_correlation: m }
    }

    /// Builds the mixing matrix as the Cholesky factor of a target
    /// cross-correlation (covariance) matrix.
    pub fn from_covariance(
        decorrelation_distance: f64,
        covariance: [[f64; N_LSP]; N_LSP],
    ) -> Result<Self> {
        let c = DMatrix::from_fn(N_LSP, N_LSP, |i, j| covariance[i][j]);
        check_covariance(&c)?;
        let chol = c.clone().cholesky().ok_or_else(|| {
            Error::Config("cross-correlation matrix is not positive definite".into())
        })?;
        let l = chol.l();
        let mut m = [[0.0; N_LSP]; N_LSP];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = l[(i, j)];
            }
        }
        let cfg = Self { decorrelation_distance, cross_correlation: m };
        cfg.validate()?;
        Ok(cfg)
    }

    fn mixing(&self) -> DMatrix<f64> {
        DMatrix::from_fn(N_LSP, N_LSP, |i, j| self.cross_correlation[i][j])
    }

    /// `M * M^T`, the covariance of the correlated deviates.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mixing();
        &m * m.transpose()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decorrelation_distance > 0.0 && self.decorrelation_distance.is_finite()) {
            return config(format!(
                "decorrelation distance must be positive, got {}",
                self.decorrelation_distance
            ));
        }
        if self.cross_correlation.iter().flatten().any(|v| !v.is_finite()) {
            return config("cross-correlation matrix has non-finite entries");
        }
        check_covariance(&self.covariance())
    }

    /// Applies `M` to one vector of independent deviates.
    pub fn mix(&self, x: &[f64; N_LSP]) -> [f64; N_LSP] {
        let mut out = [0.0; N_LSP];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cross_correlation[i].iter().zip(x).map(|(m, v)| m * v).sum();
        }
        out
    }
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self::new(5.0)
    }
}

fn check_covariance(c: &DMatrix<f64>) -> Result<()> {
    let n = c.nrows();
    for i in 0..n {
        if (c[(i, i)] - 1.0).abs() > 1e-9 {
            return config(format!("cross-correlation diagonal {i} is {} (want 1)", c[(i, i)]));
        }
        for j in 0..i {
            if (c[(i, j)] - c[(j, i)]).abs() > 1e-9 {
                return config("cross-correlation matrix is not symmetric");
            }
        }
    }
    let eig = SymmetricEigen::new(c.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return config(format!("cross-correlation matrix is not PSD (min eigenvalue {min:.3e})"));
    }
    Ok(())
}

/// Draws the seven large-scale deviates at every position.
///
/// Each parameter is an independent zero-mean, unit-variance Gaussian field
/// with correlation `exp(-|p_i - p_j| / d_dec)`; the cross-correlation
/// matrix is applied pointwise afterwards.
pub fn draw_large_scale_field(
    positions: &[[f64; 3]],
    config: &CorrelationConfig,
    seed: u64,
) -> Result<Vec<LargeScaleParams>> {
    if positions.is_empty() {
        return domain("no positions to draw large-scale parameters for");
    }
    config.validate()?;
    if positions.iter().flatten().any(|v| !v.is_finite()) {
        return domain("non-finite position");
    }

    let mut raw = vec![[0.0; N_LSP]; positions.len()];
    match line_coordinates(positions) {
        Some(s) => {
            for p in 0..N_LSP {
                let field = markov_field(&s, config.decorrelation_distance, seed, p);
                for (r, v) in raw.iter_mut().zip(field) {
                    r[p] = v;
                }
            }
        }
        None => {
            for p in 0..N_LSP {
                let field = dense_field(positions, config.decorrelation_distance, seed, p)?;
                for (r, v) in raw.iter_mut().zip(field) {
                    r[p] = v;
                }
            }
        }
    }
    Ok(raw.iter().map(|x| LargeScaleParams::from_array(config.mix(x))).collect())
}

/// Coordinates along a common line when all positions are collinear.
fn line_coordinates(positions: &[[f64; 3]]) -> Option<Vec<f64>> {
    let origin = positions[0];
    let far = positions
        .iter()
        .max_by(|a, b| dist(a, &origin).total_cmp(&dist(b, &origin)))
        .copied()?;
    let span = dist(&far, &origin);
    if span == 0.0 {
        return Some(vec![0.0; positions.len()]);
    }
    let dir = [
        (far[0] - origin[0]) / span,
        (far[1] - origin[1]) / span,
        (far[2] - origin[2]) / span,
    ];
    let mut s = Vec::with_capacity(positions.len());
    for p in positions {
        let d = [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]];
        let along = d[0] * dir[0] + d[1] * dir[1] + d[2] * dir[2];
        let off = [d[0] - along * dir[0], d[1] - along * dir[1], d[2] - along * dir[2]];
        if (off[0] * off[0] + off[1] * off[1] + off[2] * off[2]).sqrt() > 1e-9 * span.max(1.0) {
            return None;
        }
        s.push(along);
    }
    Some(s)
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// On a line the exponential kernel is Markov, so sorting by coordinate and
/// running an AR(1) recursion samples the field exactly.
fn markov_field(s: &[f64], d_dec: f64, seed: u64, param: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
    let mut rng = rng::stream(seed, "lsp-field", param as u64);
    let mut out = vec![0.0; s.len()];
    let mut prev: Option<(f64, f64)> = None;
    for &i in &order {
        let z: f64 = rng.sample(StandardNormal);
        let v = match prev {
            None => z,
            Some((s_prev, v_prev)) => {
                let rho = (-(s[i] - s_prev) / d_dec).exp();
                rho * v_prev + (1.0 - rho * rho).max(0.0).sqrt() * z
            }
        };
        out[i] = v;
        prev = Some((s[i], v));
    }
    out
}

fn dense_field(positions: &[[f64; 3]], d_dec: f64, seed: u64, param: usize) -> Result<Vec<f64>> {
    // Exact duplicates share one sample; the kernel matrix would be singular.
    let mut unique: Vec<[f64; 3]> = Vec::new();
    let mut index = Vec::with_capacity(positions.len());
    for p in positions {
        match unique.iter().position(|u| u == p) {
            Some(k) => index.push(k),
            None => {
                index.push(unique.len());
                unique.push(*p);
            }
        }
    }
    let n = unique.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| (-dist(&unique[i], &unique[j]) / d_dec).exp());
    let mut jitter = 0.0;
    let l = loop {
        if let Some(ch) = k.clone().cholesky() {
            break ch.l();
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
        if jitter > 1e-6 {
            return Err(Error::Numerical("field covariance is not positive definite".into()));
        }
        for i in 0..n {
            k[(i, i)] += jitter;
        }
    };
    let mut rng = rng::stream(seed, "lsp-field", param as u64);
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = l * z;
    Ok(index.into_iter().map(|k| x[k]).collect())
}
