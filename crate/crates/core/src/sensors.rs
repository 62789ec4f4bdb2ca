//! Greedy D-optimal placement of vector processing points.
//!
//! Each point contributes two observation rows (u then v), so a candidate is a
//! `2 x r` block `W_i` of the spatial basis. While the selected rows do not
//! exceed the mode count the greedy step maximizes
//! `det(W_i (I - C^T (C C^T)^-1 C) W_i^T)`; afterwards it maximizes
//! `det(I + W_i (C^T C)^-1 W_i^T)`.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::flowdata::Grid;
use crate::linalg;
use crate::pod::PodBasis;

/// Components observed per point (u and v).
pub const COMPONENTS: usize = 2;

/// Relative ridge added to a singular Gram matrix before inversion.
pub const GRAM_RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    indices: Vec<usize>,
    objective: Vec<f64>,
    c: DMatrix<f64>,
    grid: Arc<Grid>,
}

impl SensorSet {
    /// Builds a set from grid indices in the given order.
    pub fn from_indices(indices: Vec<usize>, basis: &PodBasis) -> Result<Self> {
        let c = build_observation_matrix(&indices, basis.modes(), basis.grid())?;
        let objective = (1..=indices.len())
            .map(|k| fisher_objective(&c.rows(0, COMPONENTS * k).into_owned(), basis.r()))
            .collect();
        Ok(Self {
            indices,
            objective,
            c,
            grid: basis.grid().clone(),
        })
    }

    /// Grid indices in selection order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn p(&self) -> usize {
        self.indices.len()
    }

    /// Fisher objective of the set after each selection step.
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective
    }

    /// Observation matrix, `2p x r`, rows interleaved per point.
    pub fn observation_matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// CSV with columns step, grid_index, x, y, objective_value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,grid_index,x,y,objective_value")?;
        for (k, (&g, obj)) in self.indices.iter().zip(&self.objective).enumerate() {
            let (x, y) = self.grid.position(g);
            writeln!(w, "{},{},{},{},{}", k + 1, g, x, y, obj)?;
        }
        Ok(())
    }

    /// Reads the grid indices back from [`SensorSet::write_csv`] output.
    pub fn read_csv_indices<R: BufRead>(r: R) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let field = line
                .split(',')
                .nth(1)
                .ok_or_else(|| Error::InvalidArgument(format!("sensor csv line {}: missing grid_index", n + 1)))?;
            out.push(
                field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("sensor csv line {}: bad grid_index", n + 1)))?,
            );
        }
        Ok(out)
    }
}

/// The `2 x r` block of `U_r` belonging to grid point `grid_index`.
pub fn candidate_block(modes: &DMatrix<f64>, grid: &Grid, grid_index: usize) -> Result<DMatrix<f64>> {
    let n = grid.n_active();
    if modes.nrows() != 2 * n {
        return Err(Error::Dimension("basis rows do not match grid".into()));
    }
    let a = grid.active_index(grid_index).ok_or(Error::BadIndex(grid_index))?;
    let mut w = DMatrix::zeros(COMPONENTS, modes.ncols());
    w.row_mut(0).copy_from(&modes.row(a));
    w.row_mut(1).copy_from(&modes.row(n + a));
    Ok(w)
}

/// Stacks the candidate blocks of `indices` in order.
pub fn build_observation_matrix(indices: &[usize], modes: &DMatrix<f64>, grid: &Grid) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(COMPONENTS * indices.len(), modes.ncols());
    for (j, &g) in indices.iter().enumerate() {
        let w = candidate_block(modes, grid, g)?;
        c.rows_mut(COMPONENTS * j, COMPONENTS).copy_from(&w);
    }
    Ok(c)
}

/// `det(C C^T)` while `2p <= r`, else `det(C^T C)`. Singular gives 0.
pub fn fisher_objective(c: &DMatrix<f64>, r: usize) -> f64 {
    if c.nrows() == 0 {
        return 0.0;
    }
    let gram = if c.nrows() <= r {
        c * c.transpose()
    } else {
        c.transpose() * c
    };
    gram.determinant().max(0.0)
}

/// Inverse of a symmetric PSD Gram matrix, ridged when singular.
fn gram_inverse(gram: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let n = gram.nrows();
    let mut f = gram.clone();
    if !linalg::cholesky_in_place(&mut f, n) {
        f = gram.clone();
        let ridge = GRAM_RIDGE * linalg::trace(gram).max(f64::MIN_POSITIVE) / r as f64;
        for i in 0..n {
            f[(i, i)] += ridge;
        }
        if !linalg::cholesky_in_place(&mut f, n) {
            return linalg::pinv(gram, 1e-14);
        }
    }
    let mut inv = DMatrix::identity(n, n);
    linalg::cholesky_solve_in_place(&f, n, &mut inv);
    inv
}

/// Per-step scoring matrix: candidates score `det(W M W^T)` (`additive ==
/// false`) or `det(I + W M W^T)` (`additive == true`).
struct StepScore {
    m: DMatrix<f64>,
    additive: bool,
}

impl StepScore {
    fn new(c: &DMatrix<f64>, r: usize, step: usize) -> Self {
        let k_prev = step - 1;
        if k_prev == 0 {
            return Self {
                m: DMatrix::identity(r, r),
                additive: false,
            };
        }
        if COMPONENTS * step <= r {
            let g_inv = gram_inverse(&(c * c.transpose()), r);
            let m = DMatrix::identity(r, r) - c.transpose() * g_inv * c;
            Self { m, additive: false }
        } else {
            Self {
                m: gram_inverse(&(c.transpose() * c), r),
                additive: true,
            }
        }
    }

    fn eval(&self, modes: &DMatrix<f64>, row_u: usize, row_v: usize) -> f64 {
        let r = self.m.nrows();
        let wu = modes.row(row_u);
        let wv = modes.row(row_v);
        // a = M w_u, b = M w_v (M symmetric)
        let (mut uu, mut uv, mut vv) = (0.0, 0.0, 0.0);
        for i in 0..r {
            let mut a = 0.0;
            let mut b = 0.0;
            for j in 0..r {
                let mij = self.m[(i, j)];
                a += mij * wu[j];
                b += mij * wv[j];
            }
            uu += wu[i] * a;
            uv += wu[i] * b;
            vv += wv[i] * b;
        }
        let mut g = Matrix2::new(uu, uv, uv, vv);
        if self.additive {
            g += Matrix2::identity();
        }
        g.determinant()
    }
}

/// Greedy selection of `p` points; ties go to the lowest grid index.
pub fn greedy_select(basis: &PodBasis, p: usize) -> Result<SensorSet> {
    let modes = basis.modes();
    let grid = basis.grid();
    let n = grid.n_active();
    let r = modes.ncols();
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!("p = {p} out of range 1..={n}")));
    }
    let mut chosen = vec![false; n];
    let mut indices = Vec::with_capacity(p);
    let mut c = DMatrix::zeros(0, r);
    let mut objective = Vec::with_capacity(p);
    for step in 1..=p {
        let score = StepScore::new(&c, r, step);
        let mut best: Option<(usize, f64)> = None;
        for (a, &g) in grid.active_indices().iter().enumerate() {
            if chosen[a] {
                continue;
            }
            let val = score.eval(modes, a, n + a);
            let val = if val.is_nan() { f64::NEG_INFINITY } else { val };
            if best.is_none_or(|(_, b)| val > b) {
                best = Some((g, val));
            }
        }
        let (g, _) = best.expect("at least one candidate remains");
        let a = grid.active_index(g).expect("active");
        chosen[a] = true;
        indices.push(g);
        let w = candidate_block(modes, grid, g)?;
        let mut next = DMatrix::zeros(c.nrows() + COMPONENTS, r);
        next.rows_mut(0, c.nrows()).copy_from(&c);
        next.rows_mut(c.nrows(), COMPONENTS).copy_from(&w);
        c = next;
        objective.push(fisher_objective(&c, r));
    }
    Ok(SensorSet {
        indices,
        objective,
        c,
        grid: grid.clone(),
    })
}

/// Uniform random selection, used as a placement baseline.
pub fn random_select<R: Rng + ?Sized>(basis: &PodBasis, p: usize, rng: &mut R) -> Result<SensorSet> {
    let grid = basis.grid();
    let n = grid.n_active();
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!("p = {p} out of range 1..={n}")));
    }
    let indices = sample(rng, n, p)
        .into_iter()
        .map(|a| grid.active_indices()[a])
        .collect();
    SensorSet::from_indices(indices, basis)
}
