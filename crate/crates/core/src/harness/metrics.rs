//! Error norms and summary statistics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `||Z_ref - Z_hat||_F / ||Z_ref||_F`.
pub fn error_epsilon(z_ref: &DMatrix<f64>, z_hat: &DMatrix<f64>) -> Result<f64> {
    check_shapes(z_ref, z_hat)?;
    let den = z_ref.norm();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((z_ref - z_hat).norm() / den)
}

/// Like [`error_epsilon`] but normalized by the variation of each reference
/// mode about its temporal mean, so constant offsets are not hidden by a
/// large mean.
pub fn error_offset_normalized(z_ref: &DMatrix<f64>, z_hat: &DMatrix<f64>) -> Result<f64> {
    check_shapes(z_ref, z_hat)?;
    let mut var = 0.0;
    for row in z_ref.row_iter() {
        let m = row.mean();
        var += row.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    if var == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((z_ref - z_hat).norm() / var.sqrt())
}

/// Mean and population standard deviation. Empty input gives `(NaN, NaN)`.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData("linear fit needs two or more paired points".into()));
    }
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
