//! Streaming estimation of mode coefficients from sparse observations.
//!
//! [`KalmanFilter`] runs the predict/filter recursion every step.
//! [`SteadyStateKalman`] precomputes the converged gain. [`PinvEstimator`]
//! inverts the observation equation snapshot by snapshot.
//!
//! After construction none of the `step` paths allocate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rom::LinearRom;

/// Relative ridge for a numerically singular innovation covariance.
pub const INNOVATION_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub z_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub step_count: u64,
}

/// Zero estimate with identity covariance.
pub fn kf_init(r: usize) -> KalmanState {
    KalmanState {
        z_hat: DVector::zeros(r),
        p: DMatrix::identity(r, r),
        step_count: 0,
    }
}

/// Common interface of the streaming estimators.
pub trait StateEstimator {
    fn r(&self) -> usize;

    /// Consumes one observation vector (length `2p`) and returns the estimate.
    fn step(&mut self, y: &[f64]) -> Result<&DVector<f64>>;

    /// Advances without an observation; estimators without dynamics hold.
    fn predict_only(&mut self) -> Result<&DVector<f64>>;

    fn estimate(&self) -> &DVector<f64>;

    fn reset(&mut self);
}

/// How [`KalmanFilter::update`] folds in an observation vector.
///
/// Both forms give the same posterior for a diagonal `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    /// One scalar update per observation entry, `O(p r^2)`.
    #[default]
    Sequential,
    /// Cholesky solve with the full `2p x 2p` innovation covariance.
    Joint,
}

/// Kalman filter over a fixed linear model and observation matrix.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    form: UpdateForm,
    f: DMatrix<f64>,
    f_t: DMatrix<f64>,
    q: DVector<f64>,
    c: DMatrix<f64>,
    c_t: DMatrix<f64>,
    r_obs: DVector<f64>,
    state: KalmanState,
    // workspace
    z_tmp: DVector<f64>,
    p_tmp: DMatrix<f64>,
    cp: DMatrix<f64>,
    s: DMatrix<f64>,
    chol: DMatrix<f64>,
    gain_t: DMatrix<f64>,
    innov: DVector<f64>,
    pc: Vec<f64>,
    regularized: u64,
}

impl KalmanFilter {
    pub fn new(rom: &LinearRom, c: &DMatrix<f64>) -> Result<Self> {
        Self::with_form(rom, c, UpdateForm::default())
    }

    pub fn with_form(rom: &LinearRom, c: &DMatrix<f64>, form: UpdateForm) -> Result<Self> {
        let r = rom.r();
        let m = c.nrows();
        if c.ncols() != r {
            return Err(Error::Dimension(format!("C has {} columns, model has {r} modes", c.ncols())));
        }
        if rom.r_obs.len() != m {
            return Err(Error::Dimension(format!(
                "R has {} entries, C has {m} rows",
                rom.r_obs.len()
            )));
        }
        // the joint workspace is only needed by the joint form
        let (mj, rj) = match form {
            UpdateForm::Joint => (m, r),
            UpdateForm::Sequential => (0, 0),
        };
        Ok(Self {
            form,
            f: rom.f.clone(),
            f_t: rom.f.transpose(),
            q: rom.q.clone(),
            c: c.clone(),
            c_t: c.transpose(),
            r_obs: rom.r_obs.clone(),
            state: kf_init(r),
            z_tmp: DVector::zeros(r),
            p_tmp: DMatrix::zeros(r, r),
            cp: DMatrix::zeros(mj, rj),
            s: DMatrix::zeros(mj, mj),
            chol: DMatrix::zeros(mj, mj),
            gain_t: DMatrix::zeros(mj, rj),
            innov: DVector::zeros(mj),
            pc: vec![0.0; r],
            regularized: 0,
        })
    }

    pub fn form(&self) -> UpdateForm {
        self.form
    }

    pub fn state(&self) -> &KalmanState {
        &self.state
    }

    pub fn set_state(&mut self, state: KalmanState) -> Result<()> {
        if state.z_hat.len() != self.f.nrows() || state.p.shape() != self.f.shape() {
            return Err(Error::Dimension("state does not match model".into()));
        }
        self.state = state;
        Ok(())
    }

    /// Number of updates whose innovation covariance needed the ridge (per
    /// scalar update in the sequential form).
    pub fn regularized_updates(&self) -> u64 {
        self.regularized
    }

    /// `z <- F z`, `P <- F P F^T + Q`.
    pub fn predict(&mut self) -> Result<()> {
        let st = &mut self.state;
        self.z_tmp.gemv(1.0, &self.f, &st.z_hat, 0.0);
        std::mem::swap(&mut st.z_hat, &mut self.z_tmp);
        self.p_tmp.gemm(1.0, &self.f, &st.p, 0.0);
        st.p.gemm(1.0, &self.p_tmp, &self.f_t, 0.0);
        for i in 0..self.q.len() {
            st.p[(i, i)] += self.q[i];
        }
        linalg::symmetrize(&mut st.p);
        check_finite(st)
    }

    /// Gain `K = P C^T (C P C^T + R)^-1`, then `z <- z + K (y - C z)` and
    /// `P <- P - K C P`, re-symmetrized.
    pub fn update(&mut self, y: &[f64]) -> Result<()> {
        let m = self.c.nrows();
        if y.len() != m {
            return Err(Error::Dimension(format!("observation has length {}, expected {m}", y.len())));
        }
        match self.form {
            UpdateForm::Sequential => self.update_sequential(y),
            UpdateForm::Joint => self.update_joint(y),
        }
    }

    fn update_sequential(&mut self, y: &[f64]) -> Result<()> {
        let r = self.f.nrows();
        let st = &mut self.state;
        let prior_trace = linalg::trace(&st.p).abs();
        let p = st.p.as_mut_slice();
        let z = st.z_hat.as_mut_slice();
        let pc = &mut self.pc;
        for (i, &yi) in y.iter().enumerate() {
            let ci = self.c_t.column(i);
            let ci = ci.as_slice();
            for (j, out) in pc.iter_mut().enumerate() {
                *out = linalg::dot(&p[j * r..(j + 1) * r], ci);
            }
            let s = linalg::dot(ci, pc) + self.r_obs[i];
            if !(s > INNOVATION_RIDGE * (prior_trace + self.r_obs[i].abs())) {
                // the earlier rows already pin this one down
                self.regularized += 1;
                continue;
            }
            let gain = (yi - linalg::dot(ci, z)) / s;
            for (zj, &g) in z.iter_mut().zip(pc.iter()) {
                *zj += g * gain;
            }
            for (j, col) in p.chunks_exact_mut(r).enumerate() {
                let a = pc[j] / s;
                for (pk, &b) in col.iter_mut().zip(pc.iter()) {
                    *pk -= a * b;
                }
            }
        }
        linalg::symmetrize(&mut st.p);
        st.step_count += 1;
        check_finite(st)
    }

    fn update_joint(&mut self, y: &[f64]) -> Result<()> {
        let m = self.c.nrows();
        let st = &mut self.state;
        self.cp.gemm(1.0, &self.c, &st.p, 0.0);
        self.s.gemm(1.0, &self.cp, &self.c_t, 0.0);
        for i in 0..m {
            self.s[(i, i)] += self.r_obs[i];
        }
        self.chol.copy_from(&self.s);
        if !linalg::cholesky_in_place(&mut self.chol, m) {
            self.regularized += 1;
            let ridge = INNOVATION_RIDGE * linalg::trace(&self.s).abs().max(f64::MIN_POSITIVE);
            self.chol.copy_from(&self.s);
            for i in 0..m {
                self.chol[(i, i)] += ridge;
            }
            if !linalg::cholesky_in_place(&mut self.chol, m) {
                return Err(Error::NonFiniteState);
            }
        }
        // gain_t = S^-1 C P = K^T
        self.gain_t.copy_from(&self.cp);
        linalg::cholesky_solve_in_place(&self.chol, m, &mut self.gain_t);

        self.innov.copy_from_slice(y);
        self.innov.gemv(-1.0, &self.c, &st.z_hat, 1.0);
        st.z_hat.gemv_tr(1.0, &self.gain_t, &self.innov, 1.0);
        st.p.gemm_tr(-1.0, &self.cp, &self.gain_t, 1.0);
        linalg::symmetrize(&mut st.p);
        st.step_count += 1;
        check_finite(st)
    }
}

fn check_finite(st: &KalmanState) -> Result<()> {
    if st.z_hat.iter().all(|v| v.is_finite()) && st.p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState)
    }
}

impl StateEstimator for KalmanFilter {
    fn r(&self) -> usize {
        self.f.nrows()
    }

    fn step(&mut self, y: &[f64]) -> Result<&DVector<f64>> {
        self.predict()?;
        self.update(y)?;
        Ok(&self.state.z_hat)
    }

    fn predict_only(&mut self) -> Result<&DVector<f64>> {
        self.predict()?;
        Ok(&self.state.z_hat)
    }

    fn estimate(&self) -> &DVector<f64> {
        &self.state.z_hat
    }

    fn reset(&mut self) {
        self.state = kf_init(self.f.nrows());
        self.regularized = 0;
    }
}

/// Kalman filter with the gain frozen at its converged value.
#[derive(Debug, Clone)]
pub struct SteadyStateKalman {
    f: DMatrix<f64>,
    c: DMatrix<f64>,
    gain: DMatrix<f64>,
    z: DVector<f64>,
    z_tmp: DVector<f64>,
    innov: DVector<f64>,
    iterations: usize,
}

impl SteadyStateKalman {
    /// Iterates the covariance recursion from `P = I` until the largest change
    /// in `P` falls below `tol * max(1, |P|_max)`.
    pub fn new(rom: &LinearRom, c: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<Self> {
        let mut kf = KalmanFilter::new(rom, c)?;
        let mut prev = kf.state.p.clone();
        let mut iterations = 0;
        for it in 1..=max_iter {
            kf.predict()?;
            let zero = vec![0.0; c.nrows()];
            kf.update(&zero)?;
            iterations = it;
            let delta = (&kf.state.p - &prev).amax();
            let scale = kf.state.p.amax().max(1.0);
            if delta <= tol * scale {
                break;
            }
            prev.copy_from(&kf.state.p);
        }
        // Gain from the converged prior covariance.
        kf.predict()?;
        let prior = kf.state.p.clone();
        let m = c.nrows();
        let mut s = c * &prior * c.transpose();
        for i in 0..m {
            s[(i, i)] += rom.r_obs[i];
        }
        let mut chol = s.clone();
        if !linalg::cholesky_in_place(&mut chol, m) {
            let ridge = INNOVATION_RIDGE * linalg::trace(&s).abs().max(f64::MIN_POSITIVE);
            chol = s.clone();
            for i in 0..m {
                chol[(i, i)] += ridge;
            }
            if !linalg::cholesky_in_place(&mut chol, m) {
                return Err(Error::NonFiniteState);
            }
        }
        let mut gain_t = c * &prior;
        linalg::cholesky_solve_in_place(&chol, m, &mut gain_t);
        let r = rom.r();
        Ok(Self {
            f: rom.f.clone(),
            c: c.clone(),
            gain: gain_t.transpose(),
            z: DVector::zeros(r),
            z_tmp: DVector::zeros(r),
            innov: DVector::zeros(m),
            iterations,
        })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

impl StateEstimator for SteadyStateKalman {
    fn r(&self) -> usize {
        self.f.nrows()
    }

    fn step(&mut self, y: &[f64]) -> Result<&DVector<f64>> {
        if y.len() != self.c.nrows() {
            return Err(Error::Dimension("observation length".into()));
        }
        self.z_tmp.gemv(1.0, &self.f, &self.z, 0.0);
        std::mem::swap(&mut self.z, &mut self.z_tmp);
        self.innov.copy_from_slice(y);
        self.innov.gemv(-1.0, &self.c, &self.z, 1.0);
        self.z.gemv(1.0, &self.gain, &self.innov, 1.0);
        if self.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok(&self.z)
    }

    fn predict_only(&mut self) -> Result<&DVector<f64>> {
        self.z_tmp.gemv(1.0, &self.f, &self.z, 0.0);
        std::mem::swap(&mut self.z, &mut self.z_tmp);
        Ok(&self.z)
    }

    fn estimate(&self) -> &DVector<f64> {
        &self.z
    }

    fn reset(&mut self) {
        self.z.fill(0.0);
    }
}

/// Least-squares (minimum-norm when underdetermined) estimate `z = C^+ y`.
pub fn pinv_estimate(c: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    if y.len() != c.nrows() {
        return Err(Error::Dimension("observation length".into()));
    }
    Ok(linalg::pinv(c, crate::rom::PINV_CUTOFF) * DVector::from_column_slice(y))
}

/// Snapshot-by-snapshot estimator with a precomputed pseudoinverse.
#[derive(Debug, Clone)]
pub struct PinvEstimator {
    c_pinv: DMatrix<f64>,
    z: DVector<f64>,
}

impl PinvEstimator {
    pub fn new(c: &DMatrix<f64>) -> Self {
        let c_pinv = linalg::pinv(c, crate::rom::PINV_CUTOFF);
        Self {
            z: DVector::zeros(c.ncols()),
            c_pinv,
        }
    }
}

impl StateEstimator for PinvEstimator {
    fn r(&self) -> usize {
        self.c_pinv.nrows()
    }

    fn step(&mut self, y: &[f64]) -> Result<&DVector<f64>> {
        if y.len() != self.c_pinv.ncols() {
            return Err(Error::Dimension("observation length".into()));
        }
        let yv = nalgebra::DVectorView::from_slice(y, y.len());
        self.z.gemv(1.0, &self.c_pinv, &yv, 0.0);
        Ok(&self.z)
    }

    fn predict_only(&mut self) -> Result<&DVector<f64>> {
        Ok(&self.z)
    }

    fn estimate(&self) -> &DVector<f64> {
        &self.z
    }

    fn reset(&mut self) {
        self.z.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rom(f: DMatrix<f64>, q: Vec<f64>, r: Vec<f64>) -> LinearRom {
        LinearRom::new(f, DVector::from_vec(q), DVector::from_vec(r)).unwrap()
    }

    #[test]
    fn init_is_zero_and_identity() {
        let s = kf_init(3);
        assert_eq!(s.z_hat, DVector::zeros(3));
        assert_eq!(s.p, DMatrix::identity(3, 3));
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn identity_model_predict_is_noop() {
        let mut kf = KalmanFilter::new(&rom(DMatrix::identity(2, 2), vec![0.0; 2], vec![1.0; 2]), &DMatrix::identity(2, 2)).unwrap();
        let st = KalmanState {
            z_hat: DVector::from_vec(vec![1.0, -2.0]),
            p: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            step_count: 0,
        };
        kf.set_state(st.clone()).unwrap();
        kf.predict().unwrap();
        assert_eq!(kf.state(), &st);
    }

    #[test]
    fn zero_model_predict_gives_q() {
        let mut kf = KalmanFilter::new(&rom(DMatrix::zeros(2, 2), vec![0.3, 0.7], vec![1.0; 2]), &DMatrix::identity(2, 2)).unwrap();
        kf.predict().unwrap();
        assert_eq!(kf.state().z_hat, DVector::zeros(2));
        assert_eq!(kf.state().p, DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7])));
        let z = kf.predict_only().unwrap();
        assert_eq!(z, &DVector::zeros(2));
    }

    #[test]
    fn huge_r_means_no_trust() {
        let mut kf = KalmanFilter::new(&rom(DMatrix::identity(2, 2), vec![0.0; 2], vec![1e12; 2]), &DMatrix::identity(2, 2)).unwrap();
        kf.update(&[5.0, -3.0]).unwrap();
        assert!(kf.state().z_hat.amax() < 1e-10);
        assert!((&kf.state().p - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn zero_r_means_full_trust() {
        let mut kf = KalmanFilter::new(&rom(DMatrix::identity(2, 2), vec![0.0; 2], vec![0.0; 2]), &DMatrix::identity(2, 2)).unwrap();
        kf.update(&[5.0, -3.0]).unwrap();
        assert!((kf.state().z_hat[0] - 5.0).abs() < 1e-12);
        assert!((kf.state().z_hat[1] + 3.0).abs() < 1e-12);
        assert!(kf.state().p.amax() < 1e-12);
    }

    #[test]
    fn singular_innovation_is_regularized() {
        // Two identical rows, R = 0: C P C^T is rank one.
        let c = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        for form in [UpdateForm::Sequential, UpdateForm::Joint] {
            let mut kf = KalmanFilter::with_form(&rom(DMatrix::identity(1, 1), vec![0.0], vec![0.0, 0.0]), &c, form).unwrap();
            kf.update(&[2.0, 2.0]).unwrap();
            assert_eq!(kf.regularized_updates(), 1);
            assert!((kf.state().z_hat[0] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sequential_and_joint_updates_agree() {
        let (s, c) = 0.3f64.sin_cos();
        let f = DMatrix::from_row_slice(3, 3, &[0.9 * c, -0.9 * s, 0.0, 0.9 * s, 0.9 * c, 0.0, 0.1, 0.0, 0.8]);
        let model = rom(f, vec![0.1, 0.2, 0.05], vec![0.5, 0.4, 0.3, 0.2, 0.01]);
        let cm = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin());
        let mut seq = KalmanFilter::with_form(&model, &cm, UpdateForm::Sequential).unwrap();
        let mut joint = KalmanFilter::with_form(&model, &cm, UpdateForm::Joint).unwrap();
        for k in 0..200 {
            let y: Vec<f64> = (0..5).map(|i| ((k * 5 + i) as f64 * 0.37).cos()).collect();
            let a = seq.step(&y).unwrap().clone();
            let b = joint.step(&y).unwrap();
            assert!((a - b).amax() < 1e-10);
        }
        assert!((&seq.state().p - &joint.state().p).amax() < 1e-12);
    }

    #[test]
    fn observation_length_checked() {
        let mut kf = KalmanFilter::new(&rom(DMatrix::identity(1, 1), vec![0.0], vec![1.0]), &DMatrix::identity(1, 1)).unwrap();
        assert!(matches!(kf.update(&[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn pinv_square_and_consistent() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let z = pinv_estimate(&c, &[4.0, 6.0]).unwrap();
        let direct = c.clone().try_inverse().unwrap() * DVector::from_vec(vec![4.0, 6.0]);
        assert!((z - direct).amax() < 1e-12);
    }

    #[test]
    fn steady_gain_matches_converged_filter() {
        let (s, c) = 0.2f64.sin_cos();
        let f = DMatrix::from_row_slice(2, 2, &[0.95 * c, -0.95 * s, 0.95 * s, 0.95 * c]);
        let model = rom(f, vec![0.1, 0.2], vec![0.5, 0.4, 0.3]);
        let cm = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.3, 1.0, 0.5, 0.5]);
        let ss = SteadyStateKalman::new(&model, &cm, 1e-14, 10_000).unwrap();
        let mut kf = KalmanFilter::new(&model, &cm).unwrap();
        let mut ss_run = ss.clone();
        let ys = [[1.0, 0.5, -0.2], [0.3, -0.1, 0.8]];
        for k in 0..2000 {
            let y = &ys[k % 2];
            kf.step(y).unwrap();
            ss_run.step(y).unwrap();
        }
        assert!((kf.estimate() - ss_run.estimate()).amax() < 1e-9);
    }
}
