//! Prediction and surface-recovery metrics.

use crate::error::{GdsError, Result};

/// Default magnitude below which a surface value counts as zero.
pub const ZERO_THRESHOLD: f64 = 1e-8;

/// True and estimated surface on a common grid with quadrature weights.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePair<'a> {
    pub truth: &'a [f64],
    pub estimate: &'a [f64],
    pub weights: &'a [f64],
}

impl<'a> SurfacePair<'a> {
    pub fn new(truth: &'a [f64], estimate: &'a [f64], weights: &'a [f64]) -> Result<Self> {
        if truth.len() != estimate.len() || truth.len() != weights.len() {
            return Err(GdsError::dim("surface, estimate and weights differ in length"));
        }
        Ok(SurfacePair {
            truth,
            estimate,
            weights,
        })
    }

    fn zip(&self) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
        let (t, e, w) = (self.truth, self.estimate, self.weights);
        t.iter()
            .zip(e)
            .zip(w)
            .map(|((&t, &e), &w)| (t, e, w))
    }
}

fn check_pair(y_hat: &[f64], y: &[f64]) -> Result<()> {
    if y_hat.len() != y.len() {
        return Err(GdsError::dim("prediction and response lengths differ"));
    }
    if y.is_empty() {
        return Err(GdsError::arg("metrics need at least one sample"));
    }
    Ok(())
}

pub fn mse(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(y_hat, y)?;
    Ok(y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// `(rmse, mae)`.
pub fn rmse_mae(y_hat: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let m = mse(y_hat, y)?;
    let mae = y_hat.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
    Ok((m.sqrt(), mae))
}

/// Relative integrated squared error.
pub fn rise(pair: &SurfacePair) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (t, e, w) in pair.zip() {
        num += w * (e - t) * (e - t);
        den += w * t * t;
    }
    if den <= 0.0 {
        return Err(GdsError::Degenerate(
            "true surface has zero integrated square".into(),
        ));
    }
    Ok(num / den)
}

/// Weighted share of the true zero region that the estimate also sets to
/// zero.
pub fn zero_recovery_r1(pair: &SurfacePair, threshold: f64) -> Result<f64> {
    let (mut hit, mut area) = (0.0, 0.0);
    for (t, e, w) in pair.zip() {
        if t.abs() <= threshold {
            area += w;
            if e.abs() <= threshold {
                hit += w;
            }
        }
    }
    if area <= 0.0 {
        return Err(GdsError::Degenerate("true surface has no zero region".into()));
    }
    Ok(hit / area)
}

/// Weighted share of the true nonzero region that the estimate keeps
/// nonzero.
pub fn nonzero_recovery_r2(pair: &SurfacePair, threshold: f64) -> Result<f64> {
    let (mut hit, mut area) = (0.0, 0.0);
    for (t, e, w) in pair.zip() {
        if t.abs() > threshold {
            area += w;
            if e.abs() > threshold {
                hit += w;
            }
        }
    }
    if area <= 0.0 {
        return Err(GdsError::Degenerate("true surface is identically zero".into()));
    }
    Ok(hit / area)
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// `Var(f) / sigma^2`.
pub fn snr(f_values: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(GdsError::arg("noise level must be positive"));
    }
    if f_values.len() < 2 {
        return Err(GdsError::arg("signal variance needs at least two samples"));
    }
    if f_values.iter().any(|v| !v.is_finite()) {
        return Err(GdsError::Degenerate("non-finite signal values".into()));
    }
    Ok(sample_variance(f_values) / (sigma * sigma))
}
