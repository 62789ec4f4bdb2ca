//! Acceptance runner: one line per criterion.
//!
//! Failures are reported but only change the exit code when
//! `SPPIV_ACCEPTANCE_STRICT=1` is set, because the timing criteria depend on
//! the host.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use sppiv::estimator::{KalmanFilter, StateEstimator};
use sppiv::flowdata::{Grid, SnapshotMatrix, VelocityField};
use sppiv::harness::bench::bench_step_time;
use sppiv::harness::realtime::realtime_sim;
use sppiv::harness::{sweep, write_sweep_csv, CaseReport, EstimatorKind, RunConfig};
use sppiv::piv::{sparse_piv, Correlator, PivLayout};
use sppiv::pod::{compute_pod, ModeSeries, PodBasis};
use sppiv::rom::{fit_system_matrix, LinearRom};
use sppiv::sensors::{build_observation_matrix, fisher_objective, greedy_select};
use sppiv::synth::{advect_and_render, FlowKind, FlowSpec, ParticleEnsemble, RenderConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gauss(rng: &mut StdRng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn orthonormal_columns(rng: &mut StdRng, rows: usize, cols: usize) -> DMatrix<f64> {
    random_matrix(rng, rows, cols).qr().q()
}

fn pod_correctness() -> Outcome {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let grid = Arc::new(Grid::new(10, 10, 1.0, 1.0).map_err(|e| e.to_string())?);
    let mut worst_trunc: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for _ in 0..3 {
        let data = random_matrix(&mut rng, 200, 100);
        let sigma = data.clone().svd(false, false).singular_values;
        let x = SnapshotMatrix::from_parts(grid.clone(), data.clone(), VelocityField::zeros(grid.clone()), 1.0)
            .map_err(|e| e.to_string())?;
        for r in [1, 10, 37, 99] {
            let (basis, _) = compute_pod(&x, r).map_err(|e| e.to_string())?;
            let u = basis.modes();
            let resid = (&data - u * (u.transpose() * &data)).norm();
            let expect = sigma.iter().skip(r).map(|s| s * s).sum::<f64>().sqrt();
            worst_trunc = worst_trunc.max((resid - expect).abs() / expect);
            let gram = u.transpose() * u;
            worst_orth = worst_orth.max((gram - DMatrix::identity(r, r)).amax());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst_trunc < 1e-8 && worst_orth < 1e-10 && secs < 1.0,
        format!("truncation rel err {worst_trunc:.1e}, orthonormality {worst_orth:.1e}, {secs:.2} s"),
    )
}

// Rotation blocks with radii at or just inside the unit circle, mixed by a
// random orthogonal similarity.
fn stable_system(rng: &mut StdRng, r: usize) -> DMatrix<f64> {
    let mut blocks = DMatrix::zeros(r, r);
    for (b, (radius, angle)) in [(1.0, 0.05), (0.9995, 0.21), (0.999, 0.63)].iter().enumerate().take(r / 2) {
        let (s, c) = f64::sin_cos(*angle);
        blocks[(2 * b, 2 * b)] = radius * c;
        blocks[(2 * b, 2 * b + 1)] = -radius * s;
        blocks[(2 * b + 1, 2 * b)] = radius * s;
        blocks[(2 * b + 1, 2 * b + 1)] = radius * c;
    }
    let q = orthonormal_columns(rng, r, r);
    &q * blocks * q.transpose()
}

fn trajectory(f: &DMatrix<f64>, z0: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(f.nrows(), n);
    z.set_column(0, z0);
    for k in 1..n {
        let next = f * z.column(k - 1);
        z.set_column(k, &next);
    }
    z
}

fn rom_recovery() -> Outcome {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let f0 = stable_system(&mut rng, 6);
    let z0 = DVector::from_fn(6, |_, _| StandardNormal.sample(&mut rng));
    let z = trajectory(&f0, &z0, 2000);
    let clean = fit_system_matrix(&ModeSeries { z: z.clone(), dt: 1.0 }).map_err(|e| e.to_string())?;
    let err_clean = (&clean - &f0).norm();
    let rms = (z.norm_squared() / z.len() as f64).sqrt();
    let noisy = z.map(|v| v + 0.01 * rms * gauss(&mut rng));
    let fitted = fit_system_matrix(&ModeSeries { z: noisy, dt: 1.0 }).map_err(|e| e.to_string())?;
    let err_noisy = (&fitted - &f0).norm();
    let secs = t.elapsed().as_secs_f64();
    check(
        err_clean < 1e-8 && err_noisy < 0.05 && secs < 1.0,
        format!("noiseless {err_clean:.1e}, 1% noise {err_noisy:.4}, {secs:.2} s"),
    )
}

fn greedy_optimality() -> Outcome {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(3);
    let grid = Arc::new(Grid::new(10, 5, 1.0, 1.0).map_err(|e| e.to_string())?);
    let r = 8;
    let modes = orthonormal_columns(&mut rng, 100, r);
    let sigma: Vec<f64> = (0..r).map(|i| (r - i) as f64).collect();
    let basis = PodBasis::from_parts(modes.clone(), sigma, 1.0, grid.clone(), VelocityField::zeros(grid.clone()))
        .map_err(|e| e.to_string())?;
    let greedy = greedy_select(&basis, 10).map_err(|e| e.to_string())?;
    let picks = greedy.indices();
    let mut branches = (false, false);
    for k in 0..picks.len() {
        let prev = &picks[..k];
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for g in 0..50 {
            if prev.contains(&g) {
                continue;
            }
            let mut idx = prev.to_vec();
            idx.push(g);
            let c = build_observation_matrix(&idx, &modes, &grid).map_err(|e| e.to_string())?;
            let obj = fisher_objective(&c, r);
            if obj > best.1 {
                best = (g, obj);
            }
        }
        if 2 * (k + 1) <= r {
            branches.0 = true;
        } else {
            branches.1 = true;
        }
        if best.0 != picks[k] {
            return Err(format!("step {}: greedy chose {}, exhaustive argmax {}", k + 1, picks[k], best.0));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        branches.0 && branches.1 && secs < 5.0,
        format!("10 steps match, both branches used (switch after step {}), {secs:.2} s", r / 2),
    )
}

fn kalman_sanity() -> Outcome {
    // scalar closed form
    let mut worst_scalar: f64 = 0.0;
    for &p0 in &[0.01, 0.5, 1.0, 7.0] {
        for &r_obs in &[1e-6, 0.1, 1.0, 50.0] {
            let (f, q, y) = (0.9, 0.2, 1.3);
            let rom = LinearRom::new(DMatrix::from_element(1, 1, f), DVector::from_element(1, q), DVector::from_element(1, r_obs))
                .map_err(|e| e.to_string())?;
            let mut kf = KalmanFilter::new(&rom, &DMatrix::from_element(1, 1, 1.0)).map_err(|e| e.to_string())?;
            let mut st = kf.state().clone();
            st.z_hat[0] = 0.4;
            st.p[(0, 0)] = p0;
            kf.set_state(st).map_err(|e| e.to_string())?;
            kf.step(&[y]).map_err(|e| e.to_string())?;
            let pm = f * f * p0 + q;
            let k = pm / (pm + r_obs);
            let z = f * 0.4 + k * (y - f * 0.4);
            let p = (1.0 - k) * pm;
            worst_scalar = worst_scalar.max((kf.state().z_hat[0] - z).abs()).max((kf.state().p[(0, 0)] - p).abs());
        }
    }

    // covariance stays symmetric PSD over 10^4 steps of synthetic data
    let mut rng = StdRng::seed_from_u64(4);
    let r = 6;
    let f0 = stable_system(&mut rng, r);
    let c = random_matrix(&mut rng, 8, r);
    let rom = LinearRom::new(f0.clone(), DVector::from_element(r, 1e-3), DVector::from_element(8, 1e-2))
        .map_err(|e| e.to_string())?;
    let mut kf = KalmanFilter::new(&rom, &c).map_err(|e| e.to_string())?;
    let mut z = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
    let mut worst_sym: f64 = 0.0;
    let mut worst_psd: f64 = 0.0;
    for _ in 0..10_000 {
        z = &f0 * z + DVector::from_fn(r, |_, _| 0.03 * gauss(&mut rng));
        let y = &c * &z + DVector::from_fn(8, |_, _| 0.1 * gauss(&mut rng));
        kf.step(y.as_slice()).map_err(|e| e.to_string())?;
        let p = &kf.state().p;
        worst_sym = worst_sym.max((p - p.transpose()).amax());
        let min_eig = p.clone().symmetric_eigen().eigenvalues.min();
        worst_psd = worst_psd.max(-min_eig / p.trace());
    }

    // exact model without noise tracks after a short transient
    let rom = LinearRom::new(f0.clone(), DVector::from_element(r, 1e-12), DVector::from_element(8, 1e-12))
        .map_err(|e| e.to_string())?;
    let mut kf = KalmanFilter::new(&rom, &c).map_err(|e| e.to_string())?;
    let mut z = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
    let mut tracking: f64 = 0.0;
    for k in 0..200 {
        z = &f0 * z;
        let est = kf.step((&c * &z).as_slice()).map_err(|e| e.to_string())?;
        if k >= 50 {
            tracking = tracking.max((est - &z).norm() / z.norm());
        }
    }
    check(
        worst_scalar < 1e-12 && worst_sym < 1e-10 && worst_psd < 1e-10 && tracking < 1e-6,
        format!(
            "scalar err {worst_scalar:.1e}, asymmetry {worst_sym:.1e}, neg eig/trace {worst_psd:.1e}, tracking {tracking:.1e}"
        ),
    )
}

fn piv_accuracy() -> Outcome {
    let render = RenderConfig::default();
    let dt_pair = 80e-6;
    let shift = 3.25;
    let flow = FlowSpec {
        kind: FlowKind::Uniform,
        u_inf: shift / (render.px_per_length * dt_pair),
        ..FlowSpec::default()
    };
    let layout = PivLayout::new(render.width, render.height, Default::default()).map_err(|e| e.to_string())?;
    let points: Vec<usize> = (0..100).collect();
    let mut ens = ParticleEnsemble::seed(&render, 5);
    let mut noise = StdRng::seed_from_u64(6);
    let pair = advect_and_render(&flow, &mut ens, 0.0, dt_pair, &render, &mut noise).map_err(|e| e.to_string())?;
    let y = sparse_piv(&pair, &layout, &points).map_err(|e| e.to_string())?;
    let to_px = render.px_per_length * dt_pair;
    let errs: Vec<f64> = y.chunks(2).map(|uv| uv[0] * to_px - shift).collect();
    let bias = errs.iter().sum::<f64>() / errs.len() as f64;
    let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();

    let mut rng = StdRng::seed_from_u64(7);
    let a: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
    let mut corr = Correlator::new(8);
    let map = corr.correlate(&a, &b).ok_or("blank block")?.to_vec();
    let (ma, mb) = (a.iter().sum::<f64>() / 64.0, b.iter().sum::<f64>() / 64.0);
    let mut brute: f64 = 0.0;
    for dy in -4..4isize {
        for dx in -4..4isize {
            let mut acc = 0.0;
            for y0 in 0..8isize {
                for x0 in 0..8isize {
                    let (xb, yb) = ((x0 + dx).rem_euclid(8), (y0 + dy).rem_euclid(8));
                    acc += (a[(y0 * 8 + x0) as usize] - ma) * (b[(yb * 8 + xb) as usize] - mb);
                }
            }
            brute = brute.max((map[((dy + 4) * 8 + dx + 4) as usize] - acc).abs());
        }
    }
    check(
        bias.abs() < 0.05 && rms < 0.1 && brute < 1e-8,
        format!("bias {bias:+.4} px, rms {rms:.4} px over 100 windows, FFT vs direct {brute:.1e}"),
    )
}

fn epsilon_of(reports: &[CaseReport], p: usize, kind: EstimatorKind) -> f64 {
    reports
        .iter()
        .find(|c| c.key.p == p && c.key.estimator == kind)
        .map(|c| c.epsilon().0)
        .unwrap_or(f64::NAN)
}

fn trend_and_timing() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.sweep.p = vec![5, 30];
    cfg.sweep.estimators = vec![EstimatorKind::Kalman];
    let reports = sweep(&cfg).map_err(|e| e.to_string())?;
    let (e5, e30) = (epsilon_of(&reports, 5, EstimatorKind::Kalman), epsilon_of(&reports, 30, EstimatorKind::Kalman));
    cfg.bench.steps = 100;
    cfg.bench.repeats = 5;
    cfg.bench.train_snapshots = 300;
    let bench = bench_step_time(&cfg).map_err(|e| e.to_string())?;
    let first = bench.points.first().map(|b| b.step_mean_ns / 1e3).unwrap_or(f64::NAN);
    let last = bench.points.last().map(|b| b.step_mean_ns / 1e3).unwrap_or(f64::NAN);
    check(
        e30 < e5 && bench.fit.r_squared > 0.95,
        format!(
            "KF eps(5) {e5:.4} > eps(30) {e30:.4}; step time {first:.0} us at p=5 to {last:.0} us at p=100, R^2 {:.4}",
            bench.fit.r_squared
        ),
    )
}

fn pinv_peak() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.dataset.noise = 1.5;
    cfg.sweep.p = vec![3, 4, 5, 6, 7, 10];
    cfg.sweep.estimators = vec![EstimatorKind::Kalman, EstimatorKind::Pinv];
    let reports = sweep(&cfg).map_err(|e| e.to_string())?;
    let ps = &cfg.sweep.p;
    let pinv: Vec<f64> = ps.iter().map(|&p| epsilon_of(&reports, p, EstimatorKind::Pinv)).collect();
    let kf: Vec<f64> = ps.iter().map(|&p| epsilon_of(&reports, p, EstimatorKind::Kalman)).collect();
    let argmax = (0..ps.len()).max_by(|&a, &b| pinv[a].total_cmp(&pinv[b])).map(|i| ps[i]);
    let peak_unique = pinv.iter().enumerate().all(|(i, &e)| ps[i] == 5 || e < pinv[2]);
    let kf_better = ps.iter().zip(kf.iter().zip(&pinv)).filter(|(&p, _)| p <= 5).all(|(_, (k, q))| k < q);
    let fmt = |v: &[f64]| ps.iter().zip(v).map(|(p, e)| format!("{p}:{e:.3}")).collect::<Vec<_>>().join(" ");
    check(
        argmax == Some(5) && peak_unique && kf_better,
        format!("pinv [{}], kalman [{}]", fmt(&pinv), fmt(&kf)),
    )
}

fn regime_mismatch() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.sweep.p = vec![10];
    cfg.sweep.theta_train = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    cfg.sweep.theta_test = vec![0.0];
    cfg.sweep.estimators = vec![EstimatorKind::Kalman];
    let reports = sweep(&cfg).map_err(|e| e.to_string())?;
    let mut rows: Vec<(f64, f64, f64)> = reports
        .iter()
        .map(|c| ((c.key.theta_train - c.key.theta_test).abs(), c.epsilon_offset().0, c.mode1_offset()))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = rows.windows(2).all(|w| w[1].1 >= w[0].1);
    let matched = rows[0].2;
    let worst = rows.last().map(|r| r.2).unwrap_or(f64::NAN);
    let trend = rows.iter().map(|r| format!("{:.0}:{:.3}", r.0, r.1)).collect::<Vec<_>>().join(" ");
    check(
        monotone && worst > 3.0 * matched,
        format!("eps_offset by |dtheta| [{trend}]; mode-1 offset {worst:.3} vs matched {matched:.3}"),
    )
}

fn realtime_operating_point() -> Outcome {
    let cfg = RunConfig::default();
    let (_, report) = realtime_sim(&cfg).map_err(|e| e.to_string())?;
    let processed: Vec<usize> = report.runs.iter().map(|r| r.processed).collect();
    let dropped: usize = report.runs.iter().map(|r| r.dropped).sum();
    let ok = report.runs.iter().all(|r| r.processed >= 1900 && r.dropped == 0) && report.step_mean_ns < 500e3;
    check(
        ok,
        format!(
            "processed {processed:?} of {}, dropped {dropped}, step {:.0} +/- {:.0} us over {} runs",
            cfg.rtsim.pairs,
            report.step_mean_ns / 1e3,
            report.step_std_ns / 1e3,
            report.runs.len()
        ),
    )
}

fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            cols[..cols.len() - 2].join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.dataset.snapshots = 400;
    cfg.sweep.p = vec![4, 10];
    cfg.sweep.theta_train = vec![0.0, 1.0];
    let run = || -> Result<String, String> {
        let reports = sweep(&cfg).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &reports).map_err(|e| e.to_string())?;
        String::from_utf8(buf).map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    let rows = a.lines().count() - 1;
    check(strip_timing(&a) == strip_timing(&b), format!("{rows} sweep rows identical apart from timing"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("POD correctness", pod_correctness),
        ("ROM recovery", rom_recovery),
        ("greedy optimality", greedy_optimality),
        ("Kalman sanity", kalman_sanity),
        ("PIV accuracy", piv_accuracy),
        ("error and timing trends in p", trend_and_timing),
        ("pseudoinverse peak at p = r/2", pinv_peak),
        ("regime mismatch offset", regime_mismatch),
        ("real-time operating point", realtime_operating_point),
        ("sweep determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{}] {name}: {detail} ({secs:.1} s)", i + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var("SPPIV_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
