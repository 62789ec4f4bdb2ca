//! Contiguous k-fold cross-validation and parameter sweeps.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use super::config::{EstimatorKind, RunConfig};
use super::dataset::measured_fields;
use super::metrics::mean_std;
use super::pipeline::{evaluate, train, Evaluation};
use crate::error::{Error, Result};
use crate::flowdata::VelocityField;
use crate::sensors::{greedy_select, SensorSet};

/// Stream labels for [`measured_fields`].
pub const TRAIN_STREAM: u64 = 0;

/// `k` contiguous blocks covering `0..n`; the first `n % k` blocks are one
/// longer.
pub fn fold_ranges(n: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k < 2 || n < 2 * k {
        return Err(Error::InsufficientData(format!("{n} snapshots cannot form {k} folds of >= 2")));
    }
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}

/// One fold of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub fold: usize,
    pub epsilon: f64,
    pub epsilon_offset: f64,
    pub mode1_mean: f64,
    pub mode1_ref_mean: f64,
    pub step_ns: Vec<u64>,
}

impl FoldScore {
    fn from_eval(fold: usize, ev: Evaluation) -> Self {
        Self {
            fold,
            epsilon: ev.epsilon,
            epsilon_offset: ev.epsilon_offset,
            mode1_mean: ev.mode1_mean,
            mode1_ref_mean: ev.mode1_ref_mean,
            step_ns: ev.estimate.step_ns,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseKey {
    pub r: usize,
    pub p: usize,
    pub theta_train: f64,
    pub theta_test: f64,
    pub estimator: EstimatorKind,
}

/// Fold-aggregated result of one case; `error` is set when any fold failed.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub key: CaseKey,
    pub folds: Vec<FoldScore>,
    pub error: Option<String>,
}

impl CaseReport {
    fn collect(&self, f: impl Fn(&FoldScore) -> f64) -> (f64, f64) {
        mean_std(&self.folds.iter().map(f).collect::<Vec<_>>())
    }

    pub fn epsilon(&self) -> (f64, f64) {
        self.collect(|f| f.epsilon)
    }

    pub fn epsilon_offset(&self) -> (f64, f64) {
        self.collect(|f| f.epsilon_offset)
    }

    /// Fold mean of the magnitude of the first coefficient's temporal mean.
    pub fn mode1_offset(&self) -> f64 {
        self.collect(|f| f.mode1_mean.abs()).0
    }

    /// Step time mean and std over all steps of all folds, nanoseconds.
    pub fn time_ns(&self) -> (f64, f64) {
        let t: Vec<f64> = self.folds.iter().flat_map(|f| f.step_ns.iter().map(|&n| n as f64)).collect();
        mean_std(&t)
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Cross-validation of every `(r, p, estimator)` combination for one pair of
/// regimes. Fold `i` of `test` is estimated by a model trained on the other
/// folds of `train_data`.
pub fn cross_validate_grid(
    train_data: &[VelocityField],
    test_data: &[VelocityField],
    dt: f64,
    folds: usize,
    rs: &[usize],
    ps: &[usize],
    estimators: &[EstimatorKind],
    thetas: (f64, f64),
) -> Result<Vec<CaseReport>> {
    if train_data.len() != test_data.len() {
        return Err(Error::Dimension("train and test series differ in length".into()));
    }
    let ranges = fold_ranges(train_data.len(), folds)?;
    let mut reports = BTreeMap::new();
    let key_of = |r, p, e: EstimatorKind| CaseKey {
        r,
        p,
        theta_train: thetas.0,
        theta_test: thetas.1,
        estimator: e,
    };
    for (ri, &r) in rs.iter().enumerate() {
        for (pi, &p) in ps.iter().enumerate() {
            for (ei, &e) in estimators.iter().enumerate() {
                reports.insert(
                    (ri, pi, ei),
                    CaseReport {
                        key: key_of(r, p, e),
                        folds: Vec::new(),
                        error: None,
                    },
                );
            }
        }
    }
    let p_max = ps.iter().copied().max().unwrap_or(0);
    for (fold, test_range) in ranges.iter().enumerate() {
        let segments: Vec<&[VelocityField]> = ranges
            .iter()
            .filter(|rg| *rg != test_range)
            .map(|rg| &train_data[rg.clone()])
            .collect();
        let test = &test_data[test_range.clone()];
        for (ri, &r) in rs.iter().enumerate() {
            let fail_all = |reports: &mut BTreeMap<_, CaseReport>, msg: String, pi: Option<usize>| {
                for ((a, b, _), rep) in reports.iter_mut() {
                    if *a == ri && pi.is_none_or(|pi| pi == *b) && rep.error.is_none() {
                        rep.error = Some(msg.clone());
                    }
                }
            };
            let training = match train(&segments, dt, r) {
                Ok(t) => t,
                Err(e) => {
                    fail_all(&mut reports, e.to_string(), None);
                    continue;
                }
            };
            let n_points = training.basis.grid().n_active();
            // greedy picks are nested, so one run serves every p
            let greedy = greedy_select(&training.basis, p_max.min(n_points));
            for (pi, &p) in ps.iter().enumerate() {
                let sensors = greedy.as_ref().map_err(|e| e.to_string()).and_then(|g| {
                    if p > g.p() {
                        return Err(format!("p = {p} exceeds {n_points} grid points"));
                    }
                    SensorSet::from_indices(g.indices()[..p].to_vec(), &training.basis).map_err(|e| e.to_string())
                });
                let model = sensors.and_then(|s| training.with_sensors(s).map_err(|e| e.to_string()));
                let model = match model {
                    Ok(m) => m,
                    Err(msg) => {
                        fail_all(&mut reports, msg, Some(pi));
                        continue;
                    }
                };
                for (ei, &e) in estimators.iter().enumerate() {
                    let rep = reports.get_mut(&(ri, pi, ei)).expect("case exists");
                    match evaluate(&model, e, test, dt) {
                        Ok(ev) => rep.folds.push(FoldScore::from_eval(fold, ev)),
                        Err(err) => {
                            rep.error.get_or_insert(err.to_string());
                        }
                    }
                }
            }
        }
    }
    Ok(reports.into_values().collect())
}

/// Single-case cross-validation of the configured `r`, `p` and estimator on
/// data at `cfg.theta`.
pub fn cross_validate(cfg: &RunConfig, data: &[VelocityField]) -> Result<CaseReport> {
    let dt = 1.0 / cfg.dataset.sampling_rate;
    let mut reps = cross_validate_grid(
        data,
        data,
        dt,
        cfg.folds,
        &[cfg.r],
        &[cfg.p],
        &[cfg.estimator],
        (cfg.theta, cfg.theta),
    )?;
    let rep = reps.pop().expect("one case");
    match &rep.error {
        Some(msg) => Err(Error::InsufficientData(msg.clone())),
        None => Ok(rep),
    }
}

/// All sweep cases. Every regime dataset uses the same measurement times.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<CaseReport>> {
    let s = &cfg.sweep;
    let n = cfg.dataset.snapshots;
    let dt = 1.0 / cfg.dataset.sampling_rate;
    let mut cache: BTreeMap<u64, Vec<VelocityField>> = BTreeMap::new();
    for &theta in s.theta_train.iter().chain(&s.theta_test) {
        if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(theta.to_bits()) {
            slot.insert(measured_fields(cfg, theta, 0, n, TRAIN_STREAM)?);
        }
    }
    let mut out = Vec::new();
    for &tt in &s.theta_train {
        for &ts in &s.theta_test {
            let train_data = &cache[&tt.to_bits()];
            let test_data = &cache[&ts.to_bits()];
            out.extend(cross_validate_grid(
                train_data,
                test_data,
                dt,
                cfg.folds,
                &s.r,
                &s.p,
                &s.estimators,
                (tt, ts),
            )?);
        }
    }
    Ok(out)
}

/// Header of the sweep CSV. The two timing columns come last.
pub const SWEEP_HEADER: &str = "r,p,theta_train,theta_test,estimator,epsilon,epsilon_offset,epsilon_std,epsilon_offset_std,mode1_offset,status,time_mean_ns,time_std_ns";

pub fn write_sweep_csv<W: Write>(mut w: W, reports: &[CaseReport]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for rep in reports {
        let k = &rep.key;
        let (e, es) = rep.epsilon();
        let (o, os) = rep.epsilon_offset();
        let (tm, ts) = rep.time_ns();
        let status = match &rep.error {
            None => "ok".to_string(),
            Some(msg) => format!("failed: {}", msg.replace([',', '\n'], ";")),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{:.1},{:.1}",
            k.r,
            k.p,
            k.theta_train,
            k.theta_test,
            k.estimator.name(),
            e,
            o,
            es,
            os,
            rep.mode1_offset(),
            status,
            tm,
            ts
        )?;
    }
    Ok(())
}
