//! Velocity-field snapshots, the vector grid they live on, and the stacked
//! fluctuation matrix used by every data-driven step.
//!
//! Row layout of a stacked snapshot column: the u component of every active
//! (unmasked) grid point in row-major grid order, followed by the v component
//! in the same order.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Regular vector grid with an optional exclusion mask (`true` = excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    mask: Vec<bool>,
    active: Vec<usize>,
    active_of: Vec<Option<usize>>,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        Self::with_mask(nx, ny, dx, dy, vec![false; nx * ny])
    }

    pub fn with_mask(nx: usize, ny: usize, dx: f64, dy: f64, mask: Vec<bool>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("grid must have nx*ny > 0".into()));
        }
        if mask.len() != nx * ny {
            return Err(Error::Dimension(format!(
                "mask has {} entries, grid has {}",
                mask.len(),
                nx * ny
            )));
        }
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidArgument("grid spacing must be finite".into()));
        }
        let mut active = Vec::new();
        let mut active_of = vec![None; nx * ny];
        for (g, &masked) in mask.iter().enumerate() {
            if !masked {
                active_of[g] = Some(active.len());
                active.push(g);
            }
        }
        if active.is_empty() {
            return Err(Error::InvalidArgument("grid has no active points".into()));
        }
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            mask,
            active,
            active_of,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Grid indices of the active points, in stacking order.
    pub fn active_indices(&self) -> &[usize] {
        &self.active
    }

    /// Active (row) index of a grid index, `None` when masked or out of range.
    pub fn active_index(&self, grid_index: usize) -> Option<usize> {
        self.active_of.get(grid_index).copied().flatten()
    }

    pub fn coords(&self, grid_index: usize) -> (usize, usize) {
        (grid_index % self.nx, grid_index / self.nx)
    }

    /// Position of a grid point relative to grid point (0, 0).
    pub fn position(&self, grid_index: usize) -> (f64, f64) {
        let (ix, iy) = self.coords(grid_index);
        (ix as f64 * self.dx, iy as f64 * self.dy)
    }
}

/// One velocity field: u and v at each active grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: Arc<Grid>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VelocityField {
    pub fn new(grid: Arc<Grid>, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = grid.n_active();
        if u.len() != n || v.len() != n {
            return Err(Error::Dimension(format!(
                "field has {}/{} components, grid has {} active points",
                u.len(),
                v.len(),
                n
            )));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("velocity field must be finite".into()));
        }
        Ok(Self { grid, u, v })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_active();
        Self {
            grid,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Unstack a `2 * n_active` column (u block over v block).
    pub fn from_stacked(grid: Arc<Grid>, stacked: &[f64]) -> Result<Self> {
        let n = grid.n_active();
        if stacked.len() != 2 * n {
            return Err(Error::Dimension(format!(
                "stacked vector has length {}, expected {}",
                stacked.len(),
                2 * n
            )));
        }
        Self::new(grid, stacked[..n].to_vec(), stacked[n..].to_vec())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.u.len(),
            self.u.iter().chain(self.v.iter()).copied(),
        )
    }

    /// CSV with columns x,y,u,v, one row per active point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,u,v")?;
        for (a, &g) in self.grid.active_indices().iter().enumerate() {
            let (x, y) = self.grid.position(g);
            writeln!(w, "{},{},{},{}", x, y, self.u[a], self.v[a])?;
        }
        Ok(())
    }
}

/// Mean-removed snapshot ensemble, one stacked field per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    grid: Arc<Grid>,
    data: DMatrix<f64>,
    mean: VelocityField,
    dt: f64,
}

impl SnapshotMatrix {
    /// Subtracts the temporal mean of `fields` and stores it.
    pub fn assemble(fields: &[VelocityField], dt: f64) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::TooFewSnapshots {
                needed: 2,
                got: fields.len(),
            });
        }
        let grid = fields[0].grid.clone();
        check_same_grid(&grid, fields)?;
        let n = grid.n_active();
        let count = fields.len() as f64;
        let mut mean_u = vec![0.0; n];
        let mut mean_v = vec![0.0; n];
        for f in fields {
            for i in 0..n {
                mean_u[i] += f.u[i];
                mean_v[i] += f.v[i];
            }
        }
        mean_u.iter_mut().for_each(|m| *m /= count);
        mean_v.iter_mut().for_each(|m| *m /= count);
        let mean = VelocityField::new(grid.clone(), mean_u, mean_v)?;
        Self::center_on(fields, mean, dt)
    }

    /// Stacks `fields` after subtracting an externally supplied mean, e.g. a
    /// training mean applied to test data.
    pub fn center_on(fields: &[VelocityField], mean: VelocityField, dt: f64) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::TooFewSnapshots { needed: 1, got: 0 });
        }
        let grid = mean.grid.clone();
        check_same_grid(&grid, fields)?;
        let n = grid.n_active();
        let mut data = DMatrix::zeros(2 * n, fields.len());
        for (j, f) in fields.iter().enumerate() {
            let mut col = data.column_mut(j);
            for i in 0..n {
                col[i] = f.u[i] - mean.u[i];
                col[n + i] = f.v[i] - mean.v[i];
            }
        }
        Ok(Self {
            grid,
            data,
            mean,
            dt,
        })
    }

    pub fn from_parts(grid: Arc<Grid>, data: DMatrix<f64>, mean: VelocityField, dt: f64) -> Result<Self> {
        if *mean.grid != *grid {
            return Err(Error::GridMismatch("mean field grid differs".into()));
        }
        if data.nrows() != 2 * grid.n_active() {
            return Err(Error::Dimension(format!(
                "data has {} rows, expected {}",
                data.nrows(),
                2 * grid.n_active()
            )));
        }
        Ok(Self {
            grid,
            data,
            mean,
            dt,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn mean_field(&self) -> &VelocityField {
        &self.mean
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// u block and v block, each `n_active x N`.
    pub fn split_components(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.grid.n_active();
        (
            self.data.rows(0, n).into_owned(),
            self.data.rows(n, n).into_owned(),
        )
    }

    /// Full field of column `j` with the stored mean added back.
    pub fn field(&self, j: usize) -> VelocityField {
        let n = self.grid.n_active();
        let col = self.data.column(j);
        VelocityField {
            grid: self.grid.clone(),
            u: (0..n).map(|i| col[i] + self.mean.u[i]).collect(),
            v: (0..n).map(|i| col[n + i] + self.mean.v[i]).collect(),
        }
    }

    /// Contiguous column range as a new matrix sharing grid and mean.
    pub fn columns(&self, start: usize, count: usize) -> SnapshotMatrix {
        Self {
            grid: self.grid.clone(),
            data: self.data.columns(start, count).into_owned(),
            mean: self.mean.clone(),
            dt: self.dt,
        }
    }
}

/// Vertical restacking of the two component blocks.
pub fn restack(u_block: &DMatrix<f64>, v_block: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u_block.shape() != v_block.shape() {
        return Err(Error::Dimension("u and v blocks differ in shape".into()));
    }
    let (n, cols) = u_block.shape();
    let mut out = DMatrix::zeros(2 * n, cols);
    out.rows_mut(0, n).copy_from(u_block);
    out.rows_mut(n, n).copy_from(v_block);
    Ok(out)
}

fn check_same_grid(grid: &Grid, fields: &[VelocityField]) -> Result<()> {
    for (j, f) in fields.iter().enumerate() {
        if *f.grid != *grid {
            return Err(Error::GridMismatch(format!("field {j} is on a different grid")));
        }
    }
    Ok(())
}
