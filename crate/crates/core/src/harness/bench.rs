//! Per-step timing of sparse PIV plus estimation as a function of `p`.

use std::io::Write;
use std::time::Instant;

use super::config::{EstimatorKind, RunConfig};
use super::dataset::{derive_seed, measured_fields, render_pairs};
use super::metrics::{linear_fit, mean_std, LinearFit};
use super::pipeline::{build_estimator, sensor_mean, train, Training};
use crate::error::{Error, Result};
use crate::estimator::StateEstimator;
use crate::piv::{ImagePair, PivLayout, SparsePiv};
use crate::sensors::{greedy_select, SensorSet};

const WARMUP_STEPS: usize = 50;
const PAIR_STREAM: u64 = 7;

/// Model and images shared by all benchmark points.
pub struct BenchSetup {
    pub layout: PivLayout,
    pub training: Training,
    /// Greedy order up to the largest requested `p`.
    pub greedy: SensorSet,
    pub pairs: Vec<ImagePair>,
}

pub fn prepare_bench(cfg: &RunConfig) -> Result<BenchSetup> {
    let b = &cfg.bench;
    if b.pairs == 0 || b.steps == 0 || b.repeats == 0 || b.p.is_empty() {
        return Err(Error::Config("bench needs pairs, steps, repeats and p values".into()));
    }
    let layout = cfg.layout()?;
    let fields = measured_fields(cfg, cfg.theta, 0, b.train_snapshots, super::experiments::TRAIN_STREAM)?;
    let training = train(&[&fields], 1.0 / cfg.dataset.sampling_rate, cfg.r)?;
    let p_max = b.p.iter().copied().max().unwrap_or(1);
    let greedy = greedy_select(&training.basis, p_max)?;
    let flow = cfg.flow_at(cfg.theta);
    let pairs = render_pairs(cfg, &flow, b.train_snapshots, b.pairs, derive_seed(cfg.seed, cfg.theta, PAIR_STREAM))?;
    Ok(BenchSetup {
        layout,
        training,
        greedy,
        pairs,
    })
}

/// Timings at one `p`. Means are per step; `step_std_ns` is the spread of
/// the per-repeat means.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPoint {
    pub p: usize,
    pub step_mean_ns: f64,
    pub step_std_ns: f64,
    pub piv_mean_ns: f64,
    pub estimator_mean_ns: f64,
    pub steady_estimator_mean_ns: f64,
}

/// Streaming state for one `p`.
struct PointRunner<'a> {
    setup: &'a BenchSetup,
    p: usize,
    mean: Vec<f64>,
    piv: SparsePiv,
    kf: Box<dyn StateEstimator + Send>,
    steady: Box<dyn StateEstimator + Send>,
    y: Vec<f64>,
    next: usize,
    totals: [u64; 3],
    rep_means: Vec<f64>,
}

impl<'a> PointRunner<'a> {
    fn new(setup: &'a BenchSetup, p: usize) -> Result<Self> {
        if p > setup.greedy.p() {
            return Err(Error::InvalidArgument(format!("p = {p} exceeds prepared sensors")));
        }
        let sensors = SensorSet::from_indices(setup.greedy.indices()[..p].to_vec(), &setup.training.basis)?;
        let model = setup.training.with_sensors(sensors)?;
        Ok(Self {
            setup,
            p,
            mean: sensor_mean(&model.basis, &model.sensors)?,
            piv: SparsePiv::new(setup.layout.clone(), model.sensors.indices())?,
            kf: build_estimator(EstimatorKind::Kalman, &model)?,
            steady: build_estimator(EstimatorKind::KalmanSteady, &model)?,
            y: vec![0.0; 2 * p],
            next: 0,
            totals: [0; 3],
            rep_means: Vec::new(),
        })
    }

    fn step(&mut self, clock: &mut [u64; 3]) -> Result<()> {
        let pair = &self.setup.pairs[self.next % self.setup.pairs.len()];
        self.next += 1;
        let t0 = Instant::now();
        self.piv.process(pair, &mut self.y)?;
        for (yi, m) in self.y.iter_mut().zip(&self.mean) {
            *yi -= m;
        }
        let t1 = Instant::now();
        self.kf.step(&self.y)?;
        let t2 = Instant::now();
        self.steady.step(&self.y)?;
        let t3 = Instant::now();
        clock[0] += (t1 - t0).as_nanos() as u64;
        clock[1] += (t2 - t1).as_nanos() as u64;
        clock[2] += (t3 - t2).as_nanos() as u64;
        Ok(())
    }

    fn warm_up(&mut self) -> Result<()> {
        let mut scratch = [0u64; 3];
        for _ in 0..WARMUP_STEPS {
            self.step(&mut scratch)?;
        }
        Ok(())
    }

    fn repeat(&mut self, steps: usize) -> Result<()> {
        let mut clock = [0u64; 3];
        for _ in 0..steps {
            self.step(&mut clock)?;
        }
        self.rep_means.push((clock[0] + clock[1]) as f64 / steps as f64);
        for (t, c) in self.totals.iter_mut().zip(clock) {
            *t += c;
        }
        Ok(())
    }

    fn finish(self) -> BenchPoint {
        let (step_mean_ns, step_std_ns) = mean_std(&self.rep_means);
        let n = (self.next - WARMUP_STEPS) as f64;
        BenchPoint {
            p: self.p,
            step_mean_ns,
            step_std_ns,
            piv_mean_ns: self.totals[0] as f64 / n,
            estimator_mean_ns: self.totals[1] as f64 / n,
            steady_estimator_mean_ns: self.totals[2] as f64 / n,
        }
    }
}

/// Times every `p` in `ps`. Repeats are interleaved across `p` so slow
/// phases of the host spread over all points.
pub fn bench_points(setup: &BenchSetup, ps: &[usize], steps: usize, repeats: usize) -> Result<Vec<BenchPoint>> {
    if steps == 0 || repeats == 0 {
        return Err(Error::Config("bench needs steps and repeats".into()));
    }
    let mut runners = ps.iter().map(|&p| PointRunner::new(setup, p)).collect::<Result<Vec<_>>>()?;
    for r in &mut runners {
        r.warm_up()?;
    }
    for _ in 0..repeats {
        for r in &mut runners {
            r.repeat(steps)?;
        }
    }
    Ok(runners.into_iter().map(PointRunner::finish).collect())
}

pub fn bench_point(setup: &BenchSetup, p: usize, steps: usize, repeats: usize) -> Result<BenchPoint> {
    Ok(bench_points(setup, &[p], steps, repeats)?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub r: usize,
    pub points: Vec<BenchPoint>,
    /// Step time against `p`.
    pub fit: LinearFit,
}

pub fn bench_step_time(cfg: &RunConfig) -> Result<BenchReport> {
    let setup = prepare_bench(cfg)?;
    let points = bench_points(&setup, &cfg.bench.p, cfg.bench.steps, cfg.bench.repeats)?;
    let x: Vec<f64> = points.iter().map(|b| b.p as f64).collect();
    let y: Vec<f64> = points.iter().map(|b| b.step_mean_ns).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(BenchReport { r: cfg.r, points, fit })
}

pub fn write_bench_csv<W: Write>(mut w: W, report: &BenchReport) -> Result<()> {
    writeln!(w, "r,p,step_mean_ns,step_std_ns,piv_mean_ns,kalman_mean_ns,kalman_steady_mean_ns")?;
    for b in &report.points {
        writeln!(
            w,
            "{},{},{:.1},{:.1},{:.1},{:.1},{:.1}",
            report.r, b.p, b.step_mean_ns, b.step_std_ns, b.piv_mean_ns, b.estimator_mean_ns, b.steady_estimator_mean_ns
        )?;
    }
    Ok(())
}
