//! Real-time simulation: a paced producer hands image pairs to an estimating
//! consumer through a single slot. A pair that arrives while the previous one
//! is still waiting replaces it and is counted as dropped.

use std::io::Write;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::config::RunConfig;
use super::dataset::{derive_seed, fields_from, pair_times, render_pairs, truth_fields};
use super::experiments::TRAIN_STREAM;
use super::metrics::{error_epsilon, mean_std};
use super::pipeline::{build_estimator, sensor_mean, train, write_stream_csv, Model};
use crate::error::{Error, Result};
use crate::estimator::StateEstimator;
use crate::flowdata::SnapshotMatrix;
use crate::harness::config::EstimatorKind;
use crate::piv::{ImagePair, PivLayout, SparsePiv};
use crate::sensors::greedy_select;

const PAIR_STREAM: u64 = 11;

/// Trained model, pre-rendered pairs and their reference coefficients.
pub struct RtSetup {
    pub model: Model,
    pub layout: PivLayout,
    pub kind: EstimatorKind,
    pub pairs: Arc<Vec<ImagePair>>,
    pub times: Vec<f64>,
    /// Noise-free fields at the pair times projected onto the basis.
    pub z_ref: DMatrix<f64>,
    mean: Vec<f64>,
}

pub fn prepare_rtsim(cfg: &RunConfig) -> Result<RtSetup> {
    let rt = &cfg.rtsim;
    if rt.pairs == 0 {
        return Err(Error::Config("rtsim.pairs must be >= 1".into()));
    }
    let dt = 1.0 / cfg.dataset.sampling_rate;
    let fields = fields_from(cfg, rt.train_source, cfg.theta, 0, rt.train_snapshots, TRAIN_STREAM)?;
    let training = train(&[&fields], dt, cfg.r)?;
    let model = training.with_sensors(greedy_select(&training.basis, cfg.p)?)?;
    let flow = cfg.flow_at(cfg.theta);
    let pairs = render_pairs(cfg, &flow, rt.train_snapshots, rt.pairs, derive_seed(cfg.seed, cfg.theta, PAIR_STREAM))?;
    let truth = truth_fields(cfg, &flow, rt.train_snapshots, rt.pairs)?;
    let x = SnapshotMatrix::center_on(&truth, model.basis.mean_field().clone(), dt)?;
    let z_ref = model.basis.project(&x)?.z;
    let mean = sensor_mean(&model.basis, &model.sensors)?;
    Ok(RtSetup {
        layout: cfg.layout()?,
        kind: cfg.estimator,
        times: pair_times(cfg, rt.train_snapshots, rt.pairs),
        pairs: Arc::new(pairs),
        z_ref,
        mean,
        model,
    })
}

/// Streaming state shared by the offline and real-time runs so both follow
/// the same arithmetic.
struct Consumer {
    piv: SparsePiv,
    est: Box<dyn StateEstimator + Send>,
    y: Vec<f64>,
    mean: Vec<f64>,
}

impl Consumer {
    fn new(setup: &RtSetup) -> Result<Self> {
        Ok(Self {
            piv: SparsePiv::new(setup.layout.clone(), setup.model.sensors.indices())?,
            est: build_estimator(setup.kind, &setup.model)?,
            y: vec![0.0; 2 * setup.model.sensors.p()],
            mean: setup.mean.clone(),
        })
    }

    fn step(&mut self, pair: &ImagePair) -> Result<&nalgebra::DVector<f64>> {
        self.piv.process(pair, &mut self.y)?;
        for (yi, m) in self.y.iter_mut().zip(&self.mean) {
            *yi -= m;
        }
        self.est.step(&self.y)
    }
}

/// Sequential run over every pair without pacing.
pub fn offline_run(setup: &RtSetup) -> Result<(f64, DMatrix<f64>)> {
    let mut c = Consumer::new(setup)?;
    let mut z_hat = DMatrix::zeros(setup.z_ref.nrows(), setup.pairs.len());
    for (k, pair) in setup.pairs.iter().enumerate() {
        let z = c.step(pair)?;
        z_hat.set_column(k, z);
    }
    Ok((error_epsilon(&setup.z_ref, &z_hat)?, z_hat))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtRun {
    pub produced: usize,
    pub processed: usize,
    pub dropped: usize,
    /// Pairs processed with exchanged frames (naive mode only).
    pub swapped: usize,
    pub deadline_missed: usize,
    /// Error over the processed steps.
    pub epsilon: f64,
    pub step_ns: Vec<u64>,
    pub processed_index: Vec<usize>,
    pub missed: Vec<bool>,
    pub z_hat: DMatrix<f64>,
    pub initial_mean_ns: f64,
    pub steady_mean_ns: f64,
}

impl RtRun {
    pub fn step_mean_std_ns(&self) -> (f64, f64) {
        mean_std(&self.step_ns.iter().map(|&n| n as f64).collect::<Vec<_>>())
    }

    pub fn write_stream_csv<W: Write>(&self, w: W, times: &[f64]) -> Result<()> {
        let t: Vec<f64> = self.processed_index.iter().map(|&k| times[k]).collect();
        write_stream_csv(w, &t, &self.z_hat, &self.step_ns, &self.missed)
    }
}

#[derive(Default)]
struct Slot {
    item: Option<(usize, Instant)>,
    done: bool,
    dropped: usize,
}

/// One paced run at `rate` Hz. In naive mode every lost pair flips the frame
/// order of all later pairs, as a reader that consumes frames two at a time
/// would after losing one.
pub fn realtime_run(setup: &RtSetup, rate: f64, naive: bool, initial_steps: usize) -> Result<RtRun> {
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument("rate must be positive".into()));
    }
    let n = setup.pairs.len();
    let interval = Duration::from_secs_f64(1.0 / rate);
    let shared = Arc::new(Mutex::new(Slot::default()));
    let mut consumer = Consumer::new(setup)?;
    let r = setup.z_ref.nrows();

    let producer = {
        let shared = shared.clone();
        thread::spawn(move || {
            let lock = &*shared;
            let start = Instant::now() + Duration::from_millis(2);
            for k in 0..n {
                let due = start + interval * k as u32;
                loop {
                    let now = Instant::now();
                    if now >= due {
                        break;
                    }
                    thread::sleep(due - now);
                }
                let mut slot = lock.lock().expect("slot lock");
                if slot.item.replace((k, due)).is_some() {
                    slot.dropped += 1;
                }
            }
            lock.lock().expect("slot lock").done = true;
        })
    };

    let lock = &*shared;
    let mut step_ns = Vec::with_capacity(n);
    let mut processed_index = Vec::with_capacity(n);
    let mut missed = Vec::with_capacity(n);
    let mut columns: Vec<f64> = Vec::with_capacity(n * r);
    let mut next_expected = 0usize;
    let mut flipped = false;
    let mut swapped = 0usize;
    let mut failure = None;
    loop {
        let (k, due) = {
            // Poll with yields rather than blocking, so an idle consumer
            // does not let the core drop into a slow sleep state.
            let mut slot = lock.lock().expect("slot lock");
            while slot.item.is_none() && !slot.done {
                drop(slot);
                thread::yield_now();
                slot = lock.lock().expect("slot lock");
            }
            match slot.item.take() {
                Some(item) => item,
                None => break,
            }
        };
        if failure.is_some() {
            continue;
        }
        let lost = k - next_expected;
        next_expected = k + 1;
        let t0 = Instant::now();
        for _ in 0..lost {
            if let Err(e) = consumer.est.predict_only() {
                failure = Some(e);
            }
        }
        if naive && lost % 2 == 1 {
            flipped = !flipped;
        }
        let result = if flipped {
            swapped += 1;
            consumer.step(&setup.pairs[k].swapped()).map(|z| z.clone())
        } else {
            consumer.step(&setup.pairs[k]).map(|z| z.clone())
        };
        let done = Instant::now();
        match result {
            Ok(z) => {
                columns.extend(z.iter());
                step_ns.push((done - t0).as_nanos() as u64);
                processed_index.push(k);
                missed.push(done > due + interval);
            }
            Err(e) => failure = Some(e),
        }
    }
    let dropped = {
        producer.join().map_err(|_| Error::InvalidArgument("producer thread panicked".into()))?;
        lock.lock().expect("slot lock").dropped
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let processed = processed_index.len();
    let z_hat = DMatrix::from_vec(r, processed, columns);
    let z_ref = setup.z_ref.select_columns(&processed_index);
    let epsilon = error_epsilon(&z_ref, &z_hat)?;
    let split = initial_steps.min(processed);
    let as_f = |s: &[u64]| s.iter().map(|&n| n as f64).collect::<Vec<_>>();
    Ok(RtRun {
        produced: n,
        processed,
        dropped,
        swapped,
        deadline_missed: missed.iter().filter(|&&m| m).count(),
        epsilon,
        initial_mean_ns: mean_std(&as_f(&step_ns[..split])).0,
        steady_mean_ns: mean_std(&as_f(&step_ns[split..])).0,
        step_ns,
        processed_index,
        missed,
        z_hat,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtReport {
    pub runs: Vec<RtRun>,
    pub offline_epsilon: f64,
    /// Mean over runs of the per-run mean step time.
    pub step_mean_ns: f64,
    /// Spread of the per-run mean step times.
    pub step_std_ns: f64,
    /// No pair dropped in any run and every run within the error ratio.
    pub success: bool,
}

pub fn realtime_sim(cfg: &RunConfig) -> Result<(RtSetup, RtReport)> {
    let setup = prepare_rtsim(cfg)?;
    let report = realtime_report(cfg, &setup)?;
    Ok((setup, report))
}

pub fn realtime_report(cfg: &RunConfig, setup: &RtSetup) -> Result<RtReport> {
    let rt = &cfg.rtsim;
    let (offline_epsilon, _) = offline_run(setup)?;
    let runs = (0..rt.runs.max(1))
        .map(|_| realtime_run(setup, rt.sampling_rate, rt.naive, rt.initial_steps))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = runs.iter().map(|r| r.step_mean_std_ns().0).collect();
    let (step_mean_ns, step_std_ns) = mean_std(&means);
    let success = runs
        .iter()
        .all(|r| r.dropped == 0 && r.processed == r.produced && r.epsilon <= rt.error_ratio * offline_epsilon);
    Ok(RtReport {
        runs,
        offline_epsilon,
        step_mean_ns,
        step_std_ns,
        success,
    })
}

pub fn write_rtsim_summary<W: Write>(mut w: W, report: &RtReport) -> Result<()> {
    writeln!(
        w,
        "run,produced,processed,dropped,swapped,deadline_missed,epsilon,offline_epsilon,step_mean_ns,step_std_ns,initial_mean_ns,steady_mean_ns"
    )?;
    for (i, r) in report.runs.iter().enumerate() {
        let (m, s) = r.step_mean_std_ns();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:.1},{:.1},{:.1},{:.1}",
            i + 1,
            r.produced,
            r.processed,
            r.dropped,
            r.swapped,
            r.deadline_missed,
            r.epsilon,
            report.offline_epsilon,
            m,
            s,
            r.initial_mean_ns,
            r.steady_mean_ns
        )?;
    }
    Ok(())
}
