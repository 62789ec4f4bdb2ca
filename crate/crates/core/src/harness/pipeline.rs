//! Train, select, observe and estimate: the offline SPPIV chain.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;

use super::config::EstimatorKind;
use super::metrics::{error_epsilon, error_offset_normalized, mean_std};
use crate::error::{Error, Result};
use crate::estimator::{KalmanFilter, PinvEstimator, StateEstimator, SteadyStateKalman};
use crate::flowdata::{SnapshotMatrix, VelocityField};
use crate::pod::{compute_pod, ModeSeries, PodBasis};
use crate::rom::{fit_segments, observation_noise, LinearRom};
use crate::sensors::SensorSet;

/// Steady-state Riccati iteration limits.
const STEADY_TOL: f64 = 1e-12;
const STEADY_MAX_ITER: usize = 100_000;

/// Basis and dynamics fitted on training data, before sensors are chosen.
#[derive(Debug, Clone)]
pub struct Training {
    pub basis: PodBasis,
    /// `F` and `Q`; `R` is empty.
    pub rom: LinearRom,
    /// Training snapshots centered on their mean.
    pub x: SnapshotMatrix,
    pub z: ModeSeries,
}

/// Everything the streaming estimator needs.
#[derive(Debug, Clone)]
pub struct Model {
    pub basis: PodBasis,
    pub rom: LinearRom,
    pub sensors: SensorSet,
}

/// POD and linear dynamics from one or more contiguous training segments.
pub fn train(segments: &[&[VelocityField]], dt: f64, r: usize) -> Result<Training> {
    let all: Vec<VelocityField> = segments.iter().flat_map(|s| s.iter().cloned()).collect();
    let x = SnapshotMatrix::assemble(&all, dt)?;
    let (basis, z) = compute_pod(&x, r)?;
    let mut pieces = Vec::with_capacity(segments.len());
    let mut col = 0;
    for s in segments {
        pieces.push(ModeSeries {
            z: z.z.columns(col, s.len()).into_owned(),
            dt,
        });
        col += s.len();
    }
    let (f, q) = fit_segments(&pieces)?;
    let rom = LinearRom::new(f, q, Default::default())?;
    Ok(Training { basis, rom, x, z })
}

/// Rows of centered snapshots at the sensors, in observation-matrix order.
pub fn observe(x: &SnapshotMatrix, sensors: &SensorSet) -> Result<DMatrix<f64>> {
    let grid = x.grid();
    if **grid != **sensors.grid() {
        return Err(Error::GridMismatch("sensors and snapshots use different grids".into()));
    }
    let n = grid.n_active();
    let data = x.data();
    let mut y = DMatrix::zeros(2 * sensors.p(), data.ncols());
    for (k, &g) in sensors.indices().iter().enumerate() {
        let a = grid.active_index(g).ok_or(Error::BadIndex(g))?;
        y.row_mut(2 * k).copy_from(&data.row(a));
        y.row_mut(2 * k + 1).copy_from(&data.row(n + a));
    }
    Ok(y)
}

/// Training mean at the sensors, `[u_1, v_1, ...]`.
pub fn sensor_mean(basis: &PodBasis, sensors: &SensorSet) -> Result<Vec<f64>> {
    let grid = basis.grid();
    let mean = basis.mean_field();
    let mut out = Vec::with_capacity(2 * sensors.p());
    for &g in sensors.indices() {
        let a = grid.active_index(g).ok_or(Error::BadIndex(g))?;
        out.push(mean.u[a]);
        out.push(mean.v[a]);
    }
    Ok(out)
}

impl Training {
    /// Attaches a sensor set and fits its observation noise.
    pub fn with_sensors(&self, sensors: SensorSet) -> Result<Model> {
        let y = observe(&self.x, &sensors)?;
        let r_obs = observation_noise(&self.z, &y, sensors.observation_matrix());
        let rom = LinearRom::new(self.rom.f.clone(), self.rom.q.clone(), r_obs)?;
        Ok(Model {
            basis: self.basis.clone(),
            rom,
            sensors,
        })
    }
}

pub fn build_estimator(kind: EstimatorKind, model: &Model) -> Result<Box<dyn StateEstimator + Send>> {
    let c = model.sensors.observation_matrix();
    Ok(match kind {
        EstimatorKind::Kalman => Box::new(KalmanFilter::new(&model.rom, c)?),
        EstimatorKind::KalmanSteady => Box::new(SteadyStateKalman::new(&model.rom, c, STEADY_TOL, STEADY_MAX_ITER)?),
        EstimatorKind::Pinv => Box::new(PinvEstimator::new(c)),
    })
}

/// Estimated coefficients and wall time of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub z_hat: DMatrix<f64>,
    pub step_ns: Vec<u64>,
}

/// Runs `est` over the observation columns of `y`.
pub fn run_estimator(est: &mut dyn StateEstimator, y: &DMatrix<f64>) -> Result<Estimate> {
    let mut z_hat = DMatrix::zeros(est.r(), y.ncols());
    let mut step_ns = Vec::with_capacity(y.ncols());
    for (k, col) in y.column_iter().enumerate() {
        let obs = col.as_slice();
        let start = Instant::now();
        let z = est.step(obs)?;
        step_ns.push(start.elapsed().as_nanos() as u64);
        z_hat.set_column(k, z);
    }
    Ok(Estimate { z_hat, step_ns })
}

/// Scores of one estimator on one test segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub epsilon: f64,
    pub epsilon_offset: f64,
    /// Temporal mean of the first estimated coefficient.
    pub mode1_mean: f64,
    /// Temporal mean of the first reference coefficient.
    pub mode1_ref_mean: f64,
    pub z_ref: DMatrix<f64>,
    pub estimate: Estimate,
}

impl Evaluation {
    pub fn time_mean_std_ns(&self) -> (f64, f64) {
        let t: Vec<f64> = self.estimate.step_ns.iter().map(|&n| n as f64).collect();
        mean_std(&t)
    }
}

/// Estimates `test` from its sensor rows and scores it against the projection
/// of the full test fields onto the training basis.
pub fn evaluate(model: &Model, kind: EstimatorKind, test: &[VelocityField], dt: f64) -> Result<Evaluation> {
    let x = SnapshotMatrix::center_on(test, model.basis.mean_field().clone(), dt)?;
    let z_ref = model.basis.project(&x)?.z;
    let y = observe(&x, &model.sensors)?;
    let mut est = build_estimator(kind, model)?;
    let estimate = run_estimator(est.as_mut(), &y)?;
    score(z_ref, estimate)
}

pub fn score(z_ref: DMatrix<f64>, estimate: Estimate) -> Result<Evaluation> {
    Ok(Evaluation {
        epsilon: error_epsilon(&z_ref, &estimate.z_hat)?,
        epsilon_offset: error_offset_normalized(&z_ref, &estimate.z_hat)?,
        mode1_mean: estimate.z_hat.row(0).mean(),
        mode1_ref_mean: z_ref.row(0).mean(),
        z_ref,
        estimate,
    })
}

/// Per-step stream record: step, t, z_1..z_r, step_time_ns, deadline_missed.
pub fn write_stream_csv<W: Write>(
    mut w: W,
    times: &[f64],
    z_hat: &DMatrix<f64>,
    step_ns: &[u64],
    missed: &[bool],
) -> Result<()> {
    let r = z_hat.nrows();
    let n = z_hat.ncols();
    if times.len() != n || step_ns.len() != n || missed.len() != n {
        return Err(Error::Dimension("stream columns differ in length".into()));
    }
    write!(w, "step,t")?;
    for i in 1..=r {
        write!(w, ",z_{i}")?;
    }
    writeln!(w, ",step_time_ns,deadline_missed")?;
    for k in 0..n {
        write!(w, "{},{}", k, times[k])?;
        for i in 0..r {
            write!(w, ",{}", z_hat[(i, k)])?;
        }
        writeln!(w, ",{},{}", step_ns[k], u8::from(missed[k]))?;
    }
    Ok(())
}
