//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::piv::{PivConfig, PivLayout};
use crate::synth::{FlowSpec, RenderConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Kalman,
    Pinv,
    KalmanSteady,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Kalman => "kalman",
            EstimatorKind::Pinv => "pinv",
            EstimatorKind::KalmanSteady => "kalman-steady",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kalman" => Ok(EstimatorKind::Kalman),
            "pinv" => Ok(EstimatorKind::Pinv),
            "kalman-steady" => Ok(EstimatorKind::KalmanSteady),
            _ => Err(Error::Config(format!("unknown estimator {s:?}"))),
        }
    }
}

/// Where snapshot fields come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldSource {
    /// Analytic field on the vector grid plus Gaussian measurement noise.
    Analytic,
    /// Rendered particle images processed by full-field PIV.
    Images,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: FieldSource,
    pub snapshots: usize,
    /// Pair rate, Hz.
    pub sampling_rate: f64,
    /// Laser interval inside one pair, seconds.
    pub dt_pair: f64,
    /// Measurement noise standard deviation for analytic fields, velocity units.
    pub noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: FieldSource::Analytic,
            snapshots: 1000,
            sampling_rate: 2000.0,
            dt_pair: 80e-6,
            noise: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub r: Vec<usize>,
    pub p: Vec<usize>,
    pub theta_train: Vec<f64>,
    pub theta_test: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            r: vec![10],
            p: vec![3, 4, 5, 6, 7, 10, 20, 30],
            theta_train: vec![0.0],
            theta_test: vec![0.0],
            estimators: vec![EstimatorKind::Kalman, EstimatorKind::Pinv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub p: Vec<usize>,
    pub steps: usize,
    pub repeats: usize,
    /// Distinct pre-rendered pairs cycled through.
    pub pairs: usize,
    /// Training snapshots for the benchmark model.
    pub train_snapshots: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            p: (1..=20).map(|k| 5 * k).collect(),
            steps: 1000,
            repeats: 100,
            pairs: 32,
            train_snapshots: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RtsimConfig {
    pub pairs: usize,
    pub sampling_rate: f64,
    pub runs: usize,
    /// Exchange frame order after a lost pair instead of dropping cleanly.
    pub naive: bool,
    pub train_snapshots: usize,
    /// Where the training fields come from.
    pub train_source: FieldSource,
    /// Allowed ratio of streamed to offline error.
    pub error_ratio: f64,
    /// Leading steps reported separately as the start-up transient.
    pub initial_steps: usize,
}

impl Default for RtsimConfig {
    fn default() -> Self {
        Self {
            pairs: 2000,
            sampling_rate: 2000.0,
            runs: 3,
            naive: false,
            train_snapshots: 1000,
            train_source: FieldSource::Analytic,
            error_ratio: 1.5,
            initial_steps: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub test_dataset: Option<PathBuf>,
    pub basis: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub sensors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub r: usize,
    pub p: usize,
    pub estimator: EstimatorKind,
    pub folds: usize,
    /// Regime parameter of the generated data.
    pub theta: f64,
    /// Also write particle images when generating data.
    pub write_images: bool,
    pub paths: Paths,
    pub dataset: DatasetConfig,
    pub flow: FlowSpec,
    pub render: RenderConfig,
    pub piv: PivConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
    pub rtsim: RtsimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            r: 10,
            p: 20,
            estimator: EstimatorKind::Kalman,
            folds: 5,
            theta: 0.0,
            write_images: false,
            paths: Paths::default(),
            dataset: DatasetConfig::default(),
            flow: FlowSpec::default(),
            render: RenderConfig::default(),
            piv: PivConfig::default(),
            sweep: SweepConfig::default(),
            bench: BenchConfig::default(),
            rtsim: RtsimConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.r == 0 || self.p == 0 {
            return bad("r and p must be >= 1");
        }
        if self.folds < 2 {
            return bad("folds must be >= 2");
        }
        let d = &self.dataset;
        if !(d.sampling_rate > 0.0 && d.dt_pair > 0.0 && d.dt_pair * d.sampling_rate < 1.0) {
            return bad("need 0 < dt_pair < 1 / sampling_rate");
        }
        if !(d.noise >= 0.0 && d.noise.is_finite()) {
            return bad("dataset noise must be finite and >= 0");
        }
        if d.snapshots < 2 * self.folds {
            return bad("dataset needs at least two snapshots per fold");
        }
        if self.render.px_per_length != self.piv.px_per_length {
            return bad("render.px_per_length and piv.px_per_length differ");
        }
        self.piv.validate()?;
        self.flow.validate()?;
        let s = &self.sweep;
        if s.r.is_empty() || s.p.is_empty() || s.theta_train.is_empty() || s.theta_test.is_empty() || s.estimators.is_empty() {
            return bad("sweep lists must be nonempty");
        }
        if s.r.contains(&0) || s.p.contains(&0) || self.bench.p.contains(&0) {
            return bad("sweep r and p values must be >= 1");
        }
        if !(self.rtsim.sampling_rate > 0.0 && self.rtsim.error_ratio > 0.0) {
            return bad("rtsim sampling_rate and error_ratio must be positive");
        }
        Ok(())
    }

    /// Window layout for the configured image size.
    pub fn layout(&self) -> Result<PivLayout> {
        PivLayout::new(self.render.width, self.render.height, self.piv)
    }

    /// Flow of the configured kind at regime `theta`.
    pub fn flow_at(&self, theta: f64) -> FlowSpec {
        FlowSpec {
            theta,
            ..self.flow.clone()
        }
    }

    /// Applies `key=value` overrides using dotted TOML paths.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value = parse_value(raw.trim());
            let mut table = &mut doc;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for part in &parts[..parts.len() - 1] {
                table = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
            }
            table.insert(parts[parts.len() - 1].to_string(), value);
        }
        let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
        *self = Self::from_toml(&text)?;
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
