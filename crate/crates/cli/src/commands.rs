use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};

use sppiv::flowdata::{SnapshotMatrix, VelocityField};
use sppiv::harness::bench::{bench_step_time, write_bench_csv};
use sppiv::harness::dataset::{derive_seed, fields_from, render_pairs};
use sppiv::harness::experiments::{write_sweep_csv, TRAIN_STREAM};
use sppiv::harness::pipeline::{evaluate, train as fit, write_stream_csv, Model, Training};
use sppiv::harness::realtime::{realtime_sim, write_rtsim_summary};
use sppiv::harness::{cross_validate, sweep as run_sweep, FieldSource, RunConfig};
use sppiv::io::container::{load_basis, load_rom, load_snapshots, save_basis, save_rom, save_snapshots};
use sppiv::io::pgm::write_pair;
use sppiv::pod::PodBasis;
use sppiv::sensors::{greedy_select, SensorSet};
use sppiv::{Error, Result};

const DATASET: &str = "dataset.snap";
const BASIS: &str = "basis.pod";
const DYNAMICS: &str = "dynamics.rom";
const MODEL: &str = "model.rom";
const SENSORS: &str = "sensors.csv";
const IMAGE_STREAM: u64 = 3;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output file name inside the output directory.
    #[arg(long, default_value = DATASET)]
    name: String,
    /// Index of the first pair; later starts give later, disjoint data.
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Noise stream label; different labels give independent noise.
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn input(cfg: &RunConfig, configured: &Option<PathBuf>, name: &str) -> PathBuf {
    configured.clone().unwrap_or_else(|| out(cfg, name))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn fields_of(x: &SnapshotMatrix) -> Vec<VelocityField> {
    (0..x.n_snapshots()).map(|j| x.field(j)).collect()
}

fn load_fields(path: &Path) -> Result<(Vec<VelocityField>, f64)> {
    let x = load_snapshots(path)?;
    Ok((fields_of(&x), x.dt()))
}

/// Saved dataset if present, otherwise freshly generated training data.
fn dataset_or_generate(cfg: &RunConfig) -> Result<(Vec<VelocityField>, f64, String)> {
    let path = input(cfg, &cfg.paths.dataset, DATASET);
    if path.exists() {
        let (fields, dt) = load_fields(&path)?;
        return Ok((fields, dt, path.display().to_string()));
    }
    let fields = fields_from(cfg, cfg.dataset.source, cfg.theta, 0, cfg.dataset.snapshots, TRAIN_STREAM)?;
    Ok((fields, 1.0 / cfg.dataset.sampling_rate, "generated".into()))
}

fn source_name(s: FieldSource) -> &'static str {
    match s {
        FieldSource::Analytic => "analytic",
        FieldSource::Images => "images",
    }
}

pub fn synth(cfg: &RunConfig, args: &SynthArgs) -> Result<Value> {
    let n = cfg.dataset.snapshots;
    let fields = fields_from(cfg, cfg.dataset.source, cfg.theta, args.start, n, args.stream)?;
    let dt = 1.0 / cfg.dataset.sampling_rate;
    let x = SnapshotMatrix::assemble(&fields, dt)?;
    let path = out(cfg, &args.name);
    save_snapshots(&path, &x)?;
    let mut images = Value::Null;
    if cfg.write_images {
        let dir = out(cfg, "images");
        std::fs::create_dir_all(&dir)?;
        let seed = derive_seed(cfg.seed, cfg.theta, IMAGE_STREAM + args.stream);
        for (k, pair) in render_pairs(cfg, &cfg.flow_at(cfg.theta), args.start, n, seed)?.iter().enumerate() {
            write_pair(&dir, args.start + k, pair)?;
        }
        images = json!(dir.display().to_string());
    }
    let grid = x.grid();
    Ok(json!({
        "command": "synth",
        "dataset": path.display().to_string(),
        "snapshots": n,
        "theta": cfg.theta,
        "source": source_name(cfg.dataset.source),
        "grid": [grid.nx(), grid.ny()],
        "images": images,
    }))
}

pub fn train(cfg: &RunConfig) -> Result<Value> {
    let (fields, dt, from) = dataset_or_generate(cfg)?;
    let tr = fit(&[&fields], dt, cfg.r)?;
    let basis_path = out(cfg, BASIS);
    save_basis(&basis_path, &tr.basis)?;
    save_rom(out(cfg, DYNAMICS), &tr.rom)?;
    write_with(&out(cfg, "spectrum.csv"), |w| tr.basis.write_spectrum_csv(w))?;
    write_with(&out(cfg, "eigenvalues.csv"), |w| tr.rom.write_eigen_csv(w))?;
    Ok(json!({
        "command": "train",
        "dataset": from,
        "snapshots": fields.len(),
        "r": cfg.r,
        "energy_ratio": tr.basis.energy_ratio(cfg.r)?,
        "spectral_radius": tr.rom.spectral_radius(),
        "basis": basis_path.display().to_string(),
    }))
}

/// Training state rebuilt from a saved basis and dynamics.
fn training_from_files(cfg: &RunConfig) -> Result<Training> {
    let (fields, dt, _) = dataset_or_generate(cfg)?;
    let basis = load_basis(input(cfg, &cfg.paths.basis, BASIS))?;
    let rom = load_rom(out(cfg, DYNAMICS))?;
    if rom.r() != basis.r() {
        return Err(Error::Dimension(format!("dynamics has {} modes, basis {}", rom.r(), basis.r())));
    }
    let x = SnapshotMatrix::center_on(&fields, basis.mean_field().clone(), dt)?;
    let z = basis.project(&x)?;
    Ok(Training { basis, rom, x, z })
}

pub fn select(cfg: &RunConfig) -> Result<Value> {
    let tr = training_from_files(cfg)?;
    let sensors = greedy_select(&tr.basis, cfg.p)?;
    let sensors_path = out(cfg, SENSORS);
    write_with(&sensors_path, |w| sensors.write_csv(w))?;
    let model = tr.with_sensors(sensors)?;
    save_rom(out(cfg, MODEL), &model.rom)?;
    Ok(json!({
        "command": "select",
        "p": cfg.p,
        "indices": model.sensors.indices(),
        "objective": model.sensors.objective_trace().last(),
        "sensors": sensors_path.display().to_string(),
    }))
}

fn load_model(cfg: &RunConfig) -> Result<Model> {
    let basis: PodBasis = load_basis(input(cfg, &cfg.paths.basis, BASIS))?;
    let rom = load_rom(input(cfg, &cfg.paths.model, MODEL))?;
    let sensors_path = input(cfg, &cfg.paths.sensors, SENSORS);
    let indices = SensorSet::read_csv_indices(BufReader::new(File::open(&sensors_path)?))?;
    let sensors = SensorSet::from_indices(indices, &basis)?;
    if rom.p() != sensors.p() {
        return Err(Error::Dimension(format!("model has {} points, sensor file {}", rom.p(), sensors.p())));
    }
    Ok(Model { basis, rom, sensors })
}

pub fn estimate(cfg: &RunConfig) -> Result<Value> {
    let model = load_model(cfg)?;
    let test_path = cfg
        .paths
        .test_dataset
        .clone()
        .unwrap_or_else(|| input(cfg, &cfg.paths.dataset, DATASET));
    let (fields, dt) = load_fields(&test_path)?;
    let ev = evaluate(&model, cfg.estimator, &fields, dt)?;
    let times: Vec<f64> = (0..fields.len()).map(|k| k as f64 * dt).collect();
    let stream = out(cfg, "estimate.csv");
    let missed = vec![false; fields.len()];
    write_with(&stream, |w| write_stream_csv(w, &times, &ev.estimate.z_hat, &ev.estimate.step_ns, &missed))?;
    let (tm, ts) = ev.time_mean_std_ns();
    Ok(json!({
        "command": "estimate",
        "dataset": test_path.display().to_string(),
        "estimator": cfg.estimator.name(),
        "epsilon": ev.epsilon,
        "epsilon_offset": ev.epsilon_offset,
        "step_mean_ns": tm,
        "step_std_ns": ts,
        "stream": stream.display().to_string(),
    }))
}

pub fn validate(cfg: &RunConfig) -> Result<Value> {
    let (fields, _, from) = dataset_or_generate(cfg)?;
    let rep = cross_validate(cfg, &fields)?;
    let path = out(cfg, "validate.csv");
    write_with(&path, |w| {
        writeln!(w, "fold,epsilon,epsilon_offset,mode1_mean,mode1_ref_mean")?;
        for f in &rep.folds {
            writeln!(w, "{},{},{},{},{}", f.fold, f.epsilon, f.epsilon_offset, f.mode1_mean, f.mode1_ref_mean)?;
        }
        Ok(())
    })?;
    let (e, es) = rep.epsilon();
    let (o, os) = rep.epsilon_offset();
    Ok(json!({
        "command": "validate",
        "dataset": from,
        "folds": rep.folds.len(),
        "epsilon": e,
        "epsilon_std": es,
        "epsilon_offset": o,
        "epsilon_offset_std": os,
        "report": path.display().to_string(),
    }))
}

pub fn sweep(cfg: &RunConfig) -> Result<Value> {
    let reports = run_sweep(cfg)?;
    let path = out(cfg, "sweep.csv");
    write_with(&path, |w| write_sweep_csv(w, &reports))?;
    let failed = reports.iter().filter(|r| !r.ok()).count();
    Ok(json!({
        "command": "sweep",
        "cases": reports.len(),
        "failed": failed,
        "report": path.display().to_string(),
    }))
}

pub fn bench(cfg: &RunConfig) -> Result<Value> {
    let report = bench_step_time(cfg)?;
    let path = out(cfg, "bench.csv");
    write_with(&path, |w| write_bench_csv(w, &report))?;
    Ok(json!({
        "command": "bench",
        "r": report.r,
        "points": report.points.len(),
        "slope_ns_per_point": report.fit.slope,
        "intercept_ns": report.fit.intercept,
        "r_squared": report.fit.r_squared,
        "report": path.display().to_string(),
    }))
}

pub fn rtsim(cfg: &RunConfig) -> Result<Value> {
    let (setup, report) = realtime_sim(cfg)?;
    let path = out(cfg, "rtsim.csv");
    write_with(&path, |w| write_rtsim_summary(w, &report))?;
    for (i, run) in report.runs.iter().enumerate() {
        write_with(&out(cfg, &format!("rtsim_run{}.csv", i + 1)), |w| run.write_stream_csv(w, &setup.times))?;
    }
    let runs: Vec<Value> = report
        .runs
        .iter()
        .map(|r| json!({ "produced": r.produced, "processed": r.processed, "dropped": r.dropped, "deadline_missed": r.deadline_missed, "epsilon": r.epsilon }))
        .collect();
    Ok(json!({
        "command": "rtsim",
        "success": report.success,
        "offline_epsilon": report.offline_epsilon,
        "step_mean_ns": report.step_mean_ns,
        "step_std_ns": report.step_std_ns,
        "runs": runs,
        "report": path.display().to_string(),
    }))
}
