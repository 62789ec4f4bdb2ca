//! WebAssembly front end: a synthetic shear layer is sampled once, then the
//! page asks for the POD energy curve, a greedy point set and an estimation
//! trace.

use sppiv::flowdata::{SnapshotMatrix, VelocityField};
use sppiv::harness::dataset::{analytic_fields, derive_seed};
use sppiv::harness::metrics::error_epsilon;
use sppiv::harness::pipeline::{build_estimator, observe, train, Model};
use sppiv::harness::{EstimatorKind, RunConfig};
use sppiv::sensors::greedy_select;
use wasm_bindgen::prelude::*;

const TRAIN: usize = 400;
const TEST: usize = 200;

#[wasm_bindgen]
pub struct Demo {
    cfg: RunConfig,
    train: Vec<VelocityField>,
    test: Vec<VelocityField>,
    model: Option<Model>,
}

/// True and estimated first coefficient over the test window.
#[wasm_bindgen]
pub struct Trace {
    truth: Vec<f64>,
    estimate: Vec<f64>,
    epsilon: f64,
}

#[wasm_bindgen]
impl Trace {
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    pub fn estimate(&self) -> Vec<f64> {
        self.estimate.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Demo {
    pub fn build(theta: f64, noise: f64, seed: u64) -> sppiv::Result<Demo> {
        let mut cfg = RunConfig {
            seed,
            theta,
            ..RunConfig::default()
        };
        cfg.dataset.noise = noise;
        cfg.validate()?;
        let flow = cfg.flow_at(theta);
        let fields = analytic_fields(&cfg, &flow, 0, TRAIN + TEST, derive_seed(seed, theta, 0))?;
        let (train, test) = fields.split_at(TRAIN);
        Ok(Demo {
            train: train.to_vec(),
            test: test.to_vec(),
            cfg,
            model: None,
        })
    }

    fn dt(&self) -> f64 {
        1.0 / self.cfg.dataset.sampling_rate
    }

    /// Cumulative energy fraction captured by the first 1..=`r_max` modes.
    pub fn energy_curve(&self, r_max: usize) -> sppiv::Result<Vec<f64>> {
        let tr = train(&[&self.train], self.dt(), r_max)?;
        (1..=r_max).map(|k| tr.basis.energy_ratio(k)).collect()
    }

    /// Trains at `r`, places `p` points greedily and keeps the model.
    pub fn place_points(&mut self, r: usize, p: usize) -> sppiv::Result<Vec<u32>> {
        let tr = train(&[&self.train], self.dt(), r)?;
        let sensors = greedy_select(&tr.basis, p)?;
        let model = tr.with_sensors(sensors)?;
        let out = model.sensors.indices().iter().map(|&g| g as u32).collect();
        self.model = Some(model);
        Ok(out)
    }

    /// Streams the test window through the estimator named `kind`.
    pub fn trace(&self, kind: &str) -> sppiv::Result<Trace> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| sppiv::Error::InvalidArgument("place points first".into()))?;
        let kind: EstimatorKind = kind.parse()?;
        let x = SnapshotMatrix::center_on(&self.test, model.basis.mean_field().clone(), self.dt())?;
        let z_ref = model.basis.project(&x)?.z;
        let y = observe(&x, &model.sensors)?;
        let mut est = build_estimator(kind, model)?;
        let mut z_hat = z_ref.clone();
        for (k, col) in y.column_iter().enumerate() {
            let z = est.step(col.as_slice())?;
            z_hat.set_column(k, z);
        }
        Ok(Trace {
            truth: z_ref.row(0).iter().copied().collect(),
            estimate: z_hat.row(0).iter().copied().collect(),
            epsilon: error_epsilon(&z_ref, &z_hat)?,
        })
    }

    /// Streamwise velocity of the mean field, row-major over the grid.
    pub fn mean_u(&self) -> Vec<f64> {
        let n = self.train.len() as f64;
        let mut u = vec![0.0; self.train[0].u.len()];
        for f in &self.train {
            for (a, b) in u.iter_mut().zip(&f.u) {
                *a += b / n;
            }
        }
        u
    }
}

fn js(e: sppiv::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(theta: f64, noise: f64, seed: u32) -> Result<Demo, JsError> {
        Demo::build(theta, noise, seed as u64).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn nx(&self) -> usize {
        self.train[0].grid().nx()
    }

    #[wasm_bindgen(getter)]
    pub fn ny(&self) -> usize {
        self.train[0].grid().ny()
    }

    #[wasm_bindgen(js_name = energyCurve)]
    pub fn js_energy_curve(&self, r_max: usize) -> Result<Vec<f64>, JsError> {
        self.energy_curve(r_max).map_err(js)
    }

    #[wasm_bindgen(js_name = placePoints)]
    pub fn js_place_points(&mut self, r: usize, p: usize) -> Result<Vec<u32>, JsError> {
        self.place_points(r, p).map_err(js)
    }

    #[wasm_bindgen(js_name = trace)]
    pub fn js_trace(&self, kind: &str) -> Result<Trace, JsError> {
        self.trace(kind).map_err(js)
    }

    #[wasm_bindgen(js_name = meanU)]
    pub fn js_mean_u(&self) -> Vec<f64> {
        self.mean_u()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_curve_is_monotone_and_bounded() {
        let d = Demo::build(0.0, 0.2, 1).unwrap();
        let e = d.energy_curve(12).unwrap();
        assert_eq!(e.len(), 12);
        assert!(e.windows(2).all(|w| w[1] >= w[0]));
        assert!(e[11] <= 1.0 + 1e-12 && e[0] > 0.0);
    }

    #[test]
    fn kalman_trace_beats_pinv_with_few_points() {
        let mut d = Demo::build(0.0, 0.5, 2).unwrap();
        assert!(d.trace("kalman").is_err());
        let pts = d.place_points(10, 4).unwrap();
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|&g| (g as usize) < d.nx() * d.ny()));
        let kf = d.trace("kalman").unwrap();
        let pinv = d.trace("pinv").unwrap();
        assert_eq!(kf.truth().len(), TEST);
        assert!(kf.epsilon < pinv.epsilon);
        assert!(d.trace("bogus").is_err());
    }

    #[test]
    fn mean_field_matches_grid() {
        let d = Demo::build(1.0, 0.0, 3).unwrap();
        assert_eq!(d.mean_u().len(), d.nx() * d.ny());
    }
}
