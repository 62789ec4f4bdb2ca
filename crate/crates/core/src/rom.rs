//! Linear reduced-order model of the mode coefficients:
//! `z_{k+1} = F z_k + v_k`, `y_k = C z_k + w_k`, with diagonal noise
//! covariances fitted from the training residuals.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pod::ModeSeries;

/// Relative singular-value cutoff of the pseudoinverse used in the fit.
pub const PINV_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRom {
    /// System matrix, `r x r`.
    pub f: DMatrix<f64>,
    /// System-noise variances, length `r`.
    pub q: DVector<f64>,
    /// Observation-noise variances, length `2p` (empty until sensors are chosen).
    pub r_obs: DVector<f64>,
}

impl LinearRom {
    pub fn new(f: DMatrix<f64>, q: DVector<f64>, r_obs: DVector<f64>) -> Result<Self> {
        if !f.is_square() || q.len() != f.nrows() {
            return Err(Error::Dimension("F must be r x r and Q of length r".into()));
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("F must be finite".into()));
        }
        if q.iter().chain(r_obs.iter()).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument("noise variances must be finite and >= 0".into()));
        }
        Ok(Self { f, q, r_obs })
    }

    pub fn r(&self) -> usize {
        self.f.nrows()
    }

    pub fn p(&self) -> usize {
        self.r_obs.len() / 2
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.f)
    }

    /// CSV of eigenvalue moduli of `F`, sorted descending.
    pub fn write_eigen_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut m = linalg::eigen_moduli(&self.f);
        m.sort_by(|a, b| b.total_cmp(a));
        writeln!(w, "index,modulus")?;
        for (i, v) in m.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, v)?;
        }
        Ok(())
    }
}

/// Least-squares one-step map `F = Z_m (Z_{m-1})^+`.
///
/// With fewer than `r + 1` snapshots the fit is underdetermined; the
/// pseudoinverse then returns the minimum-norm `F`.
pub fn fit_system_matrix(z: &ModeSeries) -> Result<DMatrix<f64>> {
    let n = z.len();
    if n < 2 {
        return Err(Error::TooFewSnapshots { needed: 2, got: n });
    }
    let prev = z.z.columns(0, n - 1).into_owned();
    let next = z.z.columns(1, n - 1);
    Ok(next * linalg::pinv(&prev, PINV_CUTOFF))
}

/// `F` and the system-noise variances from several disjoint stretches of one
/// time series. Only transitions inside a segment are used.
pub fn fit_segments(segments: &[ModeSeries]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let r = segments.first().map(|s| s.r()).unwrap_or(0);
    if segments.iter().any(|s| s.r() != r) {
        return Err(Error::Dimension("segments differ in mode count".into()));
    }
    let pairs: usize = segments.iter().map(|s| s.len().saturating_sub(1)).sum();
    if pairs == 0 {
        return Err(Error::TooFewSnapshots { needed: 2, got: pairs });
    }
    let mut prev = DMatrix::zeros(r, pairs);
    let mut next = DMatrix::zeros(r, pairs);
    let mut col = 0;
    for s in segments.iter().filter(|s| s.len() >= 2) {
        let n = s.len() - 1;
        prev.columns_mut(col, n).copy_from(&s.z.columns(0, n));
        next.columns_mut(col, n).copy_from(&s.z.columns(1, n));
        col += n;
    }
    let f = &next * linalg::pinv(&prev, PINV_CUTOFF);
    let resid = next - &f * prev;
    let q = DVector::from_fn(r, |i, _| resid.row(i).norm_squared() / pairs as f64);
    Ok((f, q))
}

/// Diagonal noise variances from the one-step and observation residuals.
///
/// `Q_ii` averages over the `m - 1` transitions, `R_ii` over the `m`
/// observations.
pub fn estimate_noise(
    z: &ModeSeries,
    y: &DMatrix<f64>,
    f: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let r = z.r();
    let m = z.len();
    if f.shape() != (r, r) {
        return Err(Error::Dimension(format!("F is {:?}, expected {r}x{r}", f.shape())));
    }
    if c.ncols() != r || y.nrows() != c.nrows() || y.ncols() != m {
        return Err(Error::Dimension(format!(
            "C is {:?}, Y is {:?}, Z is {r}x{m}",
            c.shape(),
            y.shape()
        )));
    }
    if m < 2 {
        return Err(Error::TooFewSnapshots { needed: 2, got: m });
    }
    let mut q = DVector::zeros(r);
    let pred = f * z.z.columns(0, m - 1);
    for k in 0..m - 1 {
        for i in 0..r {
            let v = z.z[(i, k + 1)] - pred[(i, k)];
            q[i] += v * v;
        }
    }
    q /= (m - 1) as f64;

    Ok((q, observation_noise(z, y, c)))
}

/// `R_ii`: mean squared observation residual `y - C z` over all `m` samples.
pub fn observation_noise(z: &ModeSeries, y: &DMatrix<f64>, c: &DMatrix<f64>) -> DVector<f64> {
    let rows = c.nrows();
    let m = z.len();
    let mut r_obs = DVector::zeros(rows);
    let obs = c * &z.z;
    for k in 0..m {
        for i in 0..rows {
            let w = y[(i, k)] - obs[(i, k)];
            r_obs[i] += w * w;
        }
    }
    if m > 0 {
        r_obs /= m as f64;
    }
    r_obs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    fn trajectory(f: &DMatrix<f64>, z0: &[f64], steps: usize) -> ModeSeries {
        let r = f.nrows();
        let mut z = DMatrix::zeros(r, steps);
        z.set_column(0, &DVector::from_column_slice(z0));
        for k in 1..steps {
            let next = f * z.column(k - 1);
            z.set_column(k, &next);
        }
        ModeSeries { z, dt: 1.0 }
    }

    #[test]
    fn recovers_rotation() {
        let f0 = rotation(0.1);
        let z = trajectory(&f0, &[1.0, 0.0], 50);
        let f = fit_system_matrix(&z).unwrap();
        assert!((f - f0).amax() < 1e-8);
    }

    #[test]
    fn constant_series_is_fixed_point() {
        let col = DVector::from_vec(vec![0.5, -1.5, 2.0]);
        let z = ModeSeries {
            z: DMatrix::from_fn(3, 10, |i, _| col[i]),
            dt: 1.0,
        };
        let f = fit_system_matrix(&z).unwrap();
        assert!((&f * &col - &col).amax() < 1e-12);
    }

    #[test]
    fn single_snapshot_is_rejected() {
        let z = ModeSeries {
            z: DMatrix::zeros(2, 1),
            dt: 1.0,
        };
        assert!(matches!(fit_system_matrix(&z), Err(Error::TooFewSnapshots { .. })));
    }

    #[test]
    fn exact_model_has_zero_noise() {
        let f0 = rotation(0.2);
        let z = trajectory(&f0, &[0.3, 1.0], 30);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 1.0]);
        let y = &c * &z.z;
        let f = fit_system_matrix(&z).unwrap();
        let (q, r) = estimate_noise(&z, &y, &f, &c).unwrap();
        assert!(q.amax() < 1e-24);
        assert!(r.amax() < 1e-24);
    }

    #[test]
    fn alternating_observation_residual() {
        let sigma = 0.7;
        let z = ModeSeries {
            z: DMatrix::zeros(1, 8),
            dt: 1.0,
        };
        let c = DMatrix::from_element(2, 1, 1.0);
        let y = DMatrix::from_fn(2, 8, |i, k| if i == 1 { if k % 2 == 0 { sigma } else { -sigma } } else { 0.0 });
        let f = DMatrix::identity(1, 1);
        let (_, r) = estimate_noise(&z, &y, &f, &c).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r[1] - sigma * sigma).abs() < 1e-15);
    }

    #[test]
    fn noise_dimension_mismatch() {
        let z = ModeSeries {
            z: DMatrix::zeros(2, 5),
            dt: 1.0,
        };
        let c = DMatrix::zeros(4, 3);
        let y = DMatrix::zeros(4, 5);
        let f = DMatrix::identity(2, 2);
        assert!(matches!(estimate_noise(&z, &y, &f, &c), Err(Error::Dimension(_))));
    }

    #[test]
    fn segments_skip_the_seam() {
        let f0 = rotation(0.3);
        let a = trajectory(&f0, &[1.0, 0.0], 20);
        let b = trajectory(&f0, &[-0.2, 0.7], 15);
        let (f, q) = fit_segments(&[a.clone(), b]).unwrap();
        assert!((f - &f0).amax() < 1e-10);
        assert!(q.amax() < 1e-20);
        let single = fit_system_matrix(&a).unwrap();
        let (seg, _) = fit_segments(&[a]).unwrap();
        assert!((single - seg).amax() < 1e-12);
    }

    #[test]
    fn rejects_negative_variance() {
        let f = DMatrix::identity(1, 1);
        assert!(LinearRom::new(f, DVector::from_element(1, -1.0), DVector::zeros(0)).is_err());
    }
}
