//! Small dense helpers shared by the model-fitting and estimation code.

use nalgebra::DMatrix;

/// Moore-Penrose pseudoinverse through an SVD, discarding singular values
/// below `rel_cutoff * sigma_max`.
pub fn pinv(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = rel_cutoff * smax;
    let mut out = DMatrix::zeros(n, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_k * u_k^T / s
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out.ger(1.0 / s, &vk, &uk, 1.0);
        }
    }
    out
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

/// In-place Cholesky factorization `A = R^T R` of the leading `n x n` block
/// of a symmetric matrix. Only the upper triangle is read, and `R` overwrites
/// it. Returns `false` if a non-positive pivot is met.
pub fn cholesky_in_place(a: &mut DMatrix<f64>, n: usize) -> bool {
    let ld = a.nrows();
    let s = a.as_mut_slice();
    for j in 0..n {
        let cj = j * ld;
        for i in 0..j {
            let ci = i * ld;
            let acc = s[cj + i] - dot(&s[ci..ci + i], &s[cj..cj + i]);
            s[cj + i] = acc / s[ci + i];
        }
        let col = &s[cj..cj + j];
        let d = s[cj + j] - dot(col, col);
        if !(d > 0.0 && d.is_finite()) {
            return false;
        }
        s[cj + j] = d.sqrt();
    }
    true
}

/// Solves `R^T R X = B` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve_in_place(r: &DMatrix<f64>, n: usize, b: &mut DMatrix<f64>) {
    let ld = r.nrows();
    let rs = r.as_slice();
    let bl = b.nrows();
    let cols = b.ncols();
    let bs = b.as_mut_slice();
    for c in 0..cols {
        let x = &mut bs[c * bl..c * bl + n];
        // R^T y = b
        for i in 0..n {
            let ci = i * ld;
            let acc = x[i] - dot(&rs[ci..ci + i], &x[..i]);
            x[i] = acc / rs[ci + i];
        }
        // R x = y
        for i in (0..n).rev() {
            let ci = i * ld;
            let xi = x[i] / rs[ci + i];
            x[i] = xi;
            for k in 0..i {
                x[k] -= rs[ci + k] * xi;
            }
        }
    }
}

pub fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = m;
            p[(j, i)] = m;
        }
    }
}

pub fn trace(a: &DMatrix<f64>) -> f64 {
    a.diagonal().sum()
}

/// Spectral radius via the real Schur form eigenvalues.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigen_moduli(a).into_iter().fold(0.0, f64::max)
}

pub fn eigen_moduli(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .collect()
}
