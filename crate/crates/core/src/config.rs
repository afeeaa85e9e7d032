//! Run configuration (TOML). Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{CovarianceRepair, NoiseSignalSpec, SignalFn, SignalLaw};
use crate::diagnostics::StatTolerance;
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Integrator};
use crate::kernel::{KernelFamily, RadialKernel};
use crate::regression::MetricPoint;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub kernel: KernelFamily,
    pub ridge: RidgeSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// CSV dataset; mutually exclusive with `generate`.
    pub path: Option<PathBuf>,
    pub generate: Option<GenerateSection>,
    #[serde(default = "yes")]
    pub whiten: bool,
    #[serde(default)]
    pub covariance_repair: CovarianceRepair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub n: usize,
    pub d_noise: usize,
    pub d_signal: usize,
    pub signal: SignalFn,
    #[serde(default)]
    pub signal_law: SignalLaw,
    /// Rows of the noise covariance; identity if omitted.
    pub noise_cov: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub label_noise_sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeSection {
    pub lambda: f64,
}

/// Initial factor `U₀` in whitened coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitSpec {
    #[default]
    Identity,
    /// `U₀ = diag(values)^{1/2}`, i.e. `Σ₀ = diag(values)`.
    Diagonal { values: Vec<f64> },
    /// First `rank` rows of the identity.
    Rank { rank: usize },
    /// Explicit factor rows.
    Factor { rows: Vec<Vec<f64>> },
}

impl InitSpec {
    pub fn build(&self, d: usize) -> Result<MetricPoint> {
        match self {
            InitSpec::Identity => Ok(MetricPoint::identity(d)),
            InitSpec::Diagonal { values } => {
                if values.len() != d || values.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Config(format!("flow.init.values needs {d} nonnegative entries")));
                }
                MetricPoint::new(DMatrix::from_diagonal(&DVector::from_iterator(d, values.iter().map(|v| v.sqrt()))))
            }
            InitSpec::Rank { rank } => {
                if *rank > d {
                    return Err(Error::Config(format!("flow.init.rank = {rank} exceeds dimension {d}")));
                }
                MetricPoint::new(DMatrix::from_fn(d, d, |i, j| if i == j && i < *rank { 1.0 } else { 0.0 }))
            }
            InitSpec::Factor { rows } => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("flow.init.rows must be {d}x{d}")));
                }
                let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
                MetricPoint::new(DMatrix::from_row_slice(d, d, &flat)).map_err(|e| Error::Config(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "infinite")]
    pub max_time: f64,
    #[serde(default)]
    pub stationarity_tol: f64,
    #[serde(default = "yes")]
    pub backtrack: bool,
    #[serde(default = "half")]
    pub shrink: f64,
    #[serde(default)]
    pub init: InitSpec,
    /// Monitor the noise coordinate axes (generated data only).
    #[serde(default)]
    pub monitor_noise: bool,
    /// Extra monitor directions in original coordinates; normalized after whitening.
    #[serde(default)]
    pub monitors: Vec<Vec<f64>>,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            integrator: Integrator::default(),
            step: default_step(),
            max_steps: default_max_steps(),
            max_time: f64::INFINITY,
            stationarity_tol: 0.0,
            backtrack: true,
            shrink: 0.5,
            init: InitSpec::default(),
            monitor_noise: false,
            monitors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "StatTolerance::default")]
    pub tolerance: StatTolerance,
    /// Central-difference step for the gradient check.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: Vec<f64>,
    /// Standard deviation of the noise along monitored directions (1 after whitening).
    #[serde(default = "one")]
    pub alpha: f64,
    /// Relative slack of the growth bound.
    #[serde(default = "default_growth_slack")]
    pub growth_slack: f64,
    /// Number of trace points at which the smoothing inequality is evaluated.
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            tolerance: StatTolerance::default(),
            fd_step: default_fd_step(),
            smoothing: default_smoothing(),
            alpha: 1.0,
            growth_slack: default_growth_slack(),
            points: default_points(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn yes() -> bool {
    true
}
fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn infinite() -> f64 {
    f64::INFINITY
}
fn default_step() -> f64 {
    0.1
}
fn default_max_steps() -> usize {
    1000
}
fn default_fd_step() -> f64 {
    1e-4
}
fn default_smoothing() -> Vec<f64> {
    vec![0.1, 0.3, 0.5]
}
fn default_growth_slack() -> f64 {
    0.05
}
fn default_points() -> usize {
    10
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative dataset paths are resolved against the config file.
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.path, &self.data.generate) {
            (Some(_), Some(_)) => return Err(Error::Config("data.path and data.generate are mutually exclusive".into())),
            (None, None) => return Err(Error::Config("one of data.path or data.generate is required".into())),
            _ => {}
        }
        if !(self.ridge.lambda > 0.0 && self.ridge.lambda.is_finite()) {
            return Err(Error::Config(format!("ridge.lambda must be positive, got {}", self.ridge.lambda)));
        }
        if self.flow.monitor_noise && self.data.generate.is_none() {
            return Err(Error::Config("flow.monitor_noise needs data.generate".into()));
        }
        let fl = &self.flow;
        let probe = FlowConfig { monitors: Vec::new(), ..self.flow_config(Vec::new()) };
        probe.validate(0).map_err(|e| Error::Config(format!("flow: {e}")))?;
        if fl.max_steps == 0 {
            return Err(Error::Config("flow.max_steps must be at least 1".into()));
        }
        if self.diagnostics.smoothing.iter().any(|s| !(0.0..1.0).contains(s)) {
            return Err(Error::Config("diagnostics.smoothing values must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn kernel(&self, dim: usize) -> Result<RadialKernel> {
        RadialKernel::new(self.kernel, dim).map_err(|e| Error::Config(format!("kernel: {e}")))
    }

    pub fn noise_signal_spec(&self) -> Result<Option<NoiseSignalSpec>> {
        let Some(g) = &self.data.generate else { return Ok(None) };
        let noise_cov = match &g.noise_cov {
            None => DMatrix::identity(g.d_noise, g.d_noise),
            Some(rows) => {
                if rows.len() != g.d_noise || rows.iter().any(|r| r.len() != g.d_noise) {
                    return Err(Error::Config(format!("data.generate.noise_cov must be {0}x{0}", g.d_noise)));
                }
                DMatrix::from_row_slice(g.d_noise, g.d_noise, &rows.iter().flatten().cloned().collect::<Vec<_>>())
            }
        };
        Ok(Some(NoiseSignalSpec {
            d_noise: g.d_noise,
            d_signal: g.d_signal,
            signal_fn: g.signal.clone(),
            signal_law: g.signal_law,
            noise_cov,
            label_noise_sd: g.label_noise_sd,
            n: g.n,
            seed: self.seed,
        }))
    }

    pub fn flow_config(&self, monitors: Vec<DVector<f64>>) -> FlowConfig {
        let f = &self.flow;
        FlowConfig {
            lambda: self.ridge.lambda,
            integrator: f.integrator,
            step: f.step,
            max_steps: f.max_steps,
            max_time: f.max_time,
            stationarity_tol: f.stationarity_tol,
            backtrack: f.backtrack,
            shrink: f.shrink,
            monitors,
            keep_coefficients: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
[data.generate]
n = 20
d_noise = 1
d_signal = 1
signal = { kind = "linear", a = 1.0 }
[kernel]
family = "gaussian"
beta = 1.0
[ridge]
lambda = 0.1
"#;

    #[test]
    fn minimal_parses() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.flow.integrator, Integrator::Rk4LiftedU);
        assert!(cfg.data.whiten);
        assert_eq!(cfg.noise_signal_spec().unwrap().unwrap().n, 20);
    }

    #[test]
    fn unknown_key_rejected_by_name() {
        let text = MINIMAL.replace("[ridge]", "[ridge]\nlamda = 0.2");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("lamda"), "{err}");
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::from_toml(&MINIMAL.replace("lambda = 0.1", "lambda = -1.0")).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("seed = 3", "")).is_err());
        let text = format!("{MINIMAL}\n[flow]\nshrink = 2.0\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn init_shapes() {
        let m = InitSpec::Rank { rank: 2 }.build(4).unwrap();
        assert_eq!(m.rank(), 2);
        assert!(InitSpec::Diagonal { values: vec![1.0] }.build(2).is_err());
        let m = InitSpec::Diagonal { values: vec![4.0, 0.25] }.build(2).unwrap();
        assert!((m.sigma()[(0, 0)] - 4.0).abs() < 1e-15);
    }
}
