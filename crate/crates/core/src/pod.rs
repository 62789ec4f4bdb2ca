//! Proper orthogonal decomposition of a snapshot matrix.
//!
//! The basis comes from an economy SVD of the mean-removed snapshots,
//! `X ~ U_r Z` with `Z = Sigma_r V_r^T`. Each spatial mode is sign-normalized
//! so that its entry of largest magnitude is positive.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flowdata::{Grid, SnapshotMatrix, VelocityField};

/// Truncated spatial basis plus the energy bookkeeping needed for
/// reconstruction ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: DMatrix<f64>,
    sigma: Vec<f64>,
    sigma_full_sq_sum: f64,
    grid: Arc<Grid>,
    mean: VelocityField,
}

/// Mode-coefficient time series, one column per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSeries {
    pub z: DMatrix<f64>,
    pub dt: f64,
}

impl ModeSeries {
    pub fn r(&self) -> usize {
        self.z.nrows()
    }

    pub fn len(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.z.ncols() == 0
    }
}

/// Economy SVD of `x`, truncated to `r` modes.
pub fn compute_pod(x: &SnapshotMatrix, r: usize) -> Result<(PodBasis, ModeSeries)> {
    let data = x.data();
    let (rows, cols) = data.shape();
    let max = rows.min(cols);
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { r, max });
    }
    let energy = data.norm_squared();
    if energy == 0.0 {
        return Err(Error::Degenerate("snapshot matrix is identically zero (rank 0)".into()));
    }

    let (u, s) = left_singular_pairs(data);
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut modes = DMatrix::zeros(rows, r);
    let mut sigma = Vec::with_capacity(r);
    for (k, &idx) in order.iter().take(r).enumerate() {
        let mut col = u.column(idx).into_owned();
        let mut imax = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[imax].abs() {
                imax = i;
            }
        }
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        modes.set_column(k, &col);
        sigma.push(s[idx].max(0.0));
    }

    let z = modes.transpose() * data;
    let basis = PodBasis {
        modes,
        sigma,
        sigma_full_sq_sum: energy,
        grid: x.grid().clone(),
        mean: x.mean_field().clone(),
    };
    Ok((basis, ModeSeries { z, dt: x.dt() }))
}

// The SVD routine is applied to whichever orientation is cheaper; the left
// singular vectors of X are recovered from V when X is transposed.
fn left_singular_pairs(data: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (rows, cols) = data.shape();
    if rows >= cols {
        let svd = data.clone().svd(true, false);
        let s = svd.singular_values.iter().copied().collect();
        (svd.u.expect("u requested"), s)
    } else {
        let svd = data.transpose().svd(false, true);
        let s = svd.singular_values.iter().copied().collect();
        (svd.v_t.expect("v_t requested").transpose(), s)
    }
}

impl PodBasis {
    /// Assembles a basis from stored parts (used by the container reader).
    pub fn from_parts(
        modes: DMatrix<f64>,
        sigma: Vec<f64>,
        sigma_full_sq_sum: f64,
        grid: Arc<Grid>,
        mean: VelocityField,
    ) -> Result<Self> {
        if modes.nrows() != 2 * grid.n_active() || modes.ncols() != sigma.len() {
            return Err(Error::Dimension("basis parts are inconsistent".into()));
        }
        if **mean.grid() != *grid {
            return Err(Error::GridMismatch("mean field grid differs".into()));
        }
        Ok(Self {
            modes,
            sigma,
            sigma_full_sq_sum,
            grid,
            mean,
        })
    }

    pub fn r(&self) -> usize {
        self.sigma.len()
    }

    /// `U_r`, `2 n_active x r`.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_full_sq_sum(&self) -> f64 {
        self.sigma_full_sq_sum
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn mean_field(&self) -> &VelocityField {
        &self.mean
    }

    /// Leading `r` modes of this basis.
    pub fn truncate(&self, r: usize) -> Result<PodBasis> {
        if r == 0 || r > self.r() {
            return Err(Error::RankOutOfRange { r, max: self.r() });
        }
        Ok(PodBasis {
            modes: self.modes.columns(0, r).into_owned(),
            sigma: self.sigma[..r].to_vec(),
            sigma_full_sq_sum: self.sigma_full_sq_sum,
            grid: self.grid.clone(),
            mean: self.mean.clone(),
        })
    }

    /// Field `U_r z`, optionally with the training mean added.
    pub fn reconstruct(&self, z: &[f64], with_mean: bool) -> Result<VelocityField> {
        if z.len() != self.r() {
            return Err(Error::Dimension(format!(
                "coefficient vector has length {}, basis has {} modes",
                z.len(),
                self.r()
            )));
        }
        let stacked = &self.modes * DVector::from_column_slice(z);
        let mut field = VelocityField::from_stacked(self.grid.clone(), stacked.as_slice())?;
        if with_mean {
            for (a, m) in field.u.iter_mut().zip(&self.mean.u) {
                *a += m;
            }
            for (a, m) in field.v.iter_mut().zip(&self.mean.v) {
                *a += m;
            }
        }
        Ok(field)
    }

    /// `Z_ref = U_r^T X` for snapshots already centered on the training mean.
    pub fn project(&self, x: &SnapshotMatrix) -> Result<ModeSeries> {
        if **x.grid() != *self.grid {
            return Err(Error::GridMismatch("snapshots and basis use different grids".into()));
        }
        Ok(ModeSeries {
            z: self.modes.transpose() * x.data(),
            dt: x.dt(),
        })
    }

    /// Fraction of total energy carried by the leading `r` modes.
    pub fn energy_ratio(&self, r: usize) -> Result<f64> {
        if r == 0 || r > self.r() {
            return Err(Error::RankOutOfRange { r, max: self.r() });
        }
        let kept: f64 = self.sigma[..r].iter().map(|s| s * s).sum();
        Ok((kept / self.sigma_full_sq_sum).min(1.0))
    }

    /// CSV of mode index, singular value and cumulative energy ratio.
    pub fn write_spectrum_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mode,sigma,energy,cumulative_energy_ratio")?;
        let mut acc = 0.0;
        for (k, s) in self.sigma.iter().enumerate() {
            acc += s * s;
            writeln!(
                w,
                "{},{},{},{}",
                k + 1,
                s,
                s * s / self.sigma_full_sq_sum,
                acc / self.sigma_full_sq_sum
            )?;
        }
        Ok(())
    }
}
