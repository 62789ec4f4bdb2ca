use rand::rngs::StdRng;
use rand::SeedableRng;

use sppiv::estimator::{KalmanFilter, StateEstimator, UpdateForm};
use sppiv::harness::dataset::{analytic_fields, render_pairs};
use sppiv::harness::pipeline::{evaluate, train};
use sppiv::harness::realtime::{offline_run, prepare_rtsim, realtime_run};
use sppiv::harness::{cross_validate, EstimatorKind, RunConfig};
use sppiv::io::container::{read_basis, read_rom, read_snapshots, write_basis, write_rom, write_snapshots};
use sppiv::piv::{full_piv, sparse_piv, PivLayout};
use sppiv::sensors::greedy_select;
use sppiv::synth::{advect_and_render, sample_on_layout, ParticleEnsemble, RenderConfig};

const DT_PAIR: f64 = 80e-6;

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.dataset.snapshots = 300;
    cfg
}

// Smooth flow whose gradients are small across one window.
fn gentle(px_per_length: f64) -> impl Fn(f64, f64, f64) -> (f64, f64) {
    let to_vel = 1.0 / (px_per_length * DT_PAIR);
    move |x, y, _t| {
        let (xp, yp) = (x * px_per_length, y * px_per_length);
        let u = 2.5 + 0.5 * (std::f64::consts::TAU * yp / 400.0).sin();
        let v = -0.8 + 0.3 * (std::f64::consts::TAU * xp / 500.0).cos();
        (u * to_vel, v * to_vel)
    }
}

#[test]
fn full_piv_recovers_gentle_flow() {
    let render = RenderConfig::default();
    let layout = PivLayout::new(render.width, render.height, Default::default()).unwrap();
    let flow = gentle(render.px_per_length);
    let mut ens = ParticleEnsemble::seed(&render, 21);
    let mut noise = StdRng::seed_from_u64(22);
    let pair = advect_and_render(&flow, &mut ens, 0.0, DT_PAIR, &render, &mut noise).unwrap();
    let res = full_piv(&pair, &layout).unwrap();
    // truth at mid-pair, where the displacement is centered
    let truth = &sample_on_layout(&flow, &layout, &[0.5 * DT_PAIR])[0];
    let to_px = render.px_per_length * DT_PAIR;
    let mut sq = 0.0;
    let mut n = 0;
    for a in 0..truth.u.len() {
        if res.valid[a] {
            sq += ((res.field.u[a] - truth.u[a]) * to_px).powi(2) + ((res.field.v[a] - truth.v[a]) * to_px).powi(2);
            n += 2;
        }
    }
    let rms = (sq / n as f64).sqrt();
    assert!(n as f64 >= 0.98 * 2.0 * truth.u.len() as f64, "too many invalid vectors");
    assert!(rms < 0.1, "rms {rms} px");
}

#[test]
fn sparse_matches_full_at_selected_points() {
    let cfg = small_config();
    let layout = cfg.layout().unwrap();
    let pairs = render_pairs(&cfg, &cfg.flow_at(0.0), 0, 3, 5).unwrap();
    let points: Vec<usize> = layout.grid().active_indices().iter().copied().step_by(7).take(25).collect();
    for pair in &pairs {
        let full = full_piv(pair, &layout).unwrap();
        let sparse = sparse_piv(pair, &layout, &points).unwrap();
        for (j, &g) in points.iter().enumerate() {
            let a = layout.grid().active_index(g).unwrap();
            if !full.valid[a] {
                continue;
            }
            assert!((sparse[2 * j] - full.field.u[a]).abs() < 1e-10);
            assert!((sparse[2 * j + 1] - full.field.v[a]).abs() < 1e-10);
        }
    }
}

#[test]
fn train_select_estimate_beats_pinv_at_few_sensors() {
    let cfg = small_config();
    let dt = 1.0 / cfg.dataset.sampling_rate;
    let fields = analytic_fields(&cfg, &cfg.flow_at(0.0), 0, 300, 9).unwrap();
    let tr = train(&[&fields[..240]], dt, 10).unwrap();
    let model = tr.with_sensors(greedy_select(&tr.basis, 4).unwrap()).unwrap();
    let kf = evaluate(&model, EstimatorKind::Kalman, &fields[240..], dt).unwrap();
    let pinv = evaluate(&model, EstimatorKind::Pinv, &fields[240..], dt).unwrap();
    assert!(kf.epsilon.is_finite() && kf.epsilon < pinv.epsilon, "kf {} pinv {}", kf.epsilon, pinv.epsilon);
    assert!(tr.basis.energy_ratio(10).unwrap() > 0.5);
}

#[test]
fn containers_round_trip_a_trained_model() {
    let cfg = small_config();
    let fields = analytic_fields(&cfg, &cfg.flow_at(1.0), 0, 120, 3).unwrap();
    let tr = train(&[&fields], 5e-4, 6).unwrap();
    let model = tr.with_sensors(greedy_select(&tr.basis, 5).unwrap()).unwrap();
    let basis = read_basis(&write_basis(&tr.basis).unwrap()).unwrap();
    assert_eq!(basis.modes(), tr.basis.modes());
    assert_eq!(basis.sigma(), tr.basis.sigma());
    let rom = read_rom(&write_rom(&model.rom).unwrap()).unwrap();
    assert_eq!(rom, model.rom);
    let x = read_snapshots(&write_snapshots(&tr.x).unwrap()).unwrap();
    assert_eq!(x.data(), tr.x.data());
    assert!(read_basis(&write_rom(&model.rom).unwrap()).is_err());
}

#[test]
fn joint_and_sequential_filters_agree_on_trained_model() {
    let cfg = small_config();
    let dt = 1.0 / cfg.dataset.sampling_rate;
    let fields = analytic_fields(&cfg, &cfg.flow_at(0.0), 0, 200, 4).unwrap();
    let tr = train(&[&fields[..150]], dt, 8).unwrap();
    let model = tr.with_sensors(greedy_select(&tr.basis, 12).unwrap()).unwrap();
    let c = model.sensors.observation_matrix();
    let mut seq = KalmanFilter::with_form(&model.rom, c, UpdateForm::Sequential).unwrap();
    let mut joint = KalmanFilter::with_form(&model.rom, c, UpdateForm::Joint).unwrap();
    let x = sppiv::flowdata::SnapshotMatrix::center_on(&fields[150..], model.basis.mean_field().clone(), dt).unwrap();
    let y = sppiv::harness::pipeline::observe(&x, &model.sensors).unwrap();
    for k in 0..y.ncols() {
        let yk: Vec<f64> = y.column(k).iter().copied().collect();
        let a = seq.step(&yk).unwrap().clone();
        let b = joint.step(&yk).unwrap();
        assert!((&a - b).amax() < 1e-8 * (1.0 + b.amax()), "step {k}");
    }
}

#[test]
fn cross_validation_reports_every_fold() {
    let mut cfg = small_config();
    cfg.r = 6;
    cfg.p = 8;
    let fields = analytic_fields(&cfg, &cfg.flow_at(0.0), 0, 250, 1).unwrap();
    let rep = cross_validate(&cfg, &fields).unwrap();
    assert_eq!(rep.folds.len(), cfg.folds);
    assert!(rep.epsilon().0 > 0.0 && rep.epsilon().0 < 1.0);
}

#[test]
fn realtime_accounting_and_offline_parity() {
    let mut cfg = small_config();
    cfg.rtsim.pairs = 200;
    cfg.rtsim.train_snapshots = 200;
    let setup = prepare_rtsim(&cfg).unwrap();
    let (offline, _) = offline_run(&setup).unwrap();
    // slow enough that an idle host never drops a pair
    let run = realtime_run(&setup, 200.0, false, 10).unwrap();
    assert_eq!(run.produced, run.processed + run.dropped);
    assert_eq!(run.step_ns.len(), run.processed);
    if run.dropped == 0 {
        assert!((run.epsilon - offline).abs() < 1e-12, "{} vs {offline}", run.epsilon);
    }
    let fast = realtime_run(&setup, 1e6, true, 10).unwrap();
    assert_eq!(fast.produced, fast.processed + fast.dropped);
    assert!(fast.dropped > 0);
}
