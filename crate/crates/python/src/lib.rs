//! Python bindings. Matrices cross the boundary as lists of rows, vectors as lists.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sigmaflow::data::{self, CovarianceRepair, NoiseSignalSpec, SignalFn};
use sigmaflow::flow::{self, FlowConfig, Integrator, Termination};
use sigmaflow::kernel::RadialKernel;
use sigmaflow::regression::{self, MetricPoint};
use sigmaflow::{diagnostics, variation, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Domain(_) | Error::Unsupported(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_row_slice(n, d, &rows.concat()))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn unit(v: Vec<f64>) -> DVector<f64> {
    let v = DVector::from_vec(v);
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

/// Radial kernel: `Kernel.gaussian(beta, dim)` or `Kernel.sobolev(gamma, dim)`.
#[pyclass(name = "Kernel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKernel(RadialKernel);

#[pymethods]
impl PyKernel {
    #[staticmethod]
    fn gaussian(beta: f64, dim: usize) -> PyResult<Self> {
        RadialKernel::gaussian(beta, dim).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn sobolev(gamma: f64, dim: usize) -> PyResult<Self> {
        RadialKernel::sobolev(gamma, dim).map(Self).map_err(py_err)
    }

    fn profile_value(&self, r: f64) -> PyResult<f64> {
        self.0.profile_value(r).map_err(py_err)
    }

    fn profile_d1(&self, r: f64) -> PyResult<f64> {
        self.0.profile_d1(r).map_err(py_err)
    }

    fn fourier_weight(&self, omega_sq: f64) -> PyResult<f64> {
        self.0.fourier_weight(omega_sq).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?}, dim={})", self.0.family(), self.0.dim())
    }
}

/// Samples `(x_i, y_i)`; `x` is a list of rows, `y` a list of real or complex numbers.
#[pyclass(name = "Samples", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySamples(data::SampleSet);

#[pymethods]
impl PySamples {
    #[new]
    #[pyo3(signature = (x, y, seed=None))]
    fn new(x: Vec<Vec<f64>>, y: Vec<Complex64>, seed: Option<u64>) -> PyResult<Self> {
        data::SampleSet::new(matrix(&x)?, DVector::from_vec(y), seed).map(Self).map_err(py_err)
    }

    /// Noise coordinates first (standard Gaussian), then signal coordinates; `signal` is one of
    /// `linear`, `sine`, `product`, `step`.
    #[staticmethod]
    #[pyo3(signature = (d_noise, d_signal, n, seed, signal="sine", param=None, label_noise_sd=0.0))]
    fn noise_signal(d_noise: usize, d_signal: usize, n: usize, seed: u64, signal: &str, param: Option<f64>, label_noise_sd: f64) -> PyResult<Self> {
        let signal_fn = match signal {
            "linear" => SignalFn::Linear { a: param.unwrap_or(1.0) },
            "sine" => SignalFn::Sine { freq: param.unwrap_or(1.0) },
            "product" => SignalFn::Product,
            "step" => SignalFn::Step { threshold: param.unwrap_or(0.0) },
            other => return Err(PyValueError::new_err(format!("unknown signal function `{other}`"))),
        };
        let mut spec = NoiseSignalSpec::standard(d_noise, d_signal, signal_fn, n, seed);
        spec.label_noise_sd = label_noise_sd;
        data::gen_noise_signal(&spec).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn load_csv(path: std::path::PathBuf) -> PyResult<Self> {
        data::SampleSet::load_csv(&path).map(Self).map_err(py_err)
    }

    fn save_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.save_csv(&path).map_err(py_err)
    }

    /// Returns `(whitened samples, whitener)`.
    fn whiten(&self) -> PyResult<(Self, Vec<Vec<f64>>)> {
        let m = data::estimate_moments(&self.0, CovarianceRepair::Floor).map_err(py_err)?;
        Ok((Self(data::whiten(&self.0, &m)), rows(&m.whitener)))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows(self.0.x())
    }

    #[getter]
    fn y(&self) -> Vec<Complex64> {
        self.0.y().iter().copied().collect()
    }
}

fn point(u: &[Vec<f64>]) -> PyResult<MetricPoint> {
    MetricPoint::new(matrix(u)?).map_err(py_err)
}

/// Solves the ridge problem at `Σ = UᵀU`; returns a dict with `loss`, `c`, `r`.
#[pyfunction]
fn solve_ridge<'py>(py: Python<'py>, samples: &PySamples, u: Vec<Vec<f64>>, kernel: &PyKernel, lam: f64) -> PyResult<Bound<'py, PyDict>> {
    let sol = regression::solve_at(&samples.0, &point(&u)?, &kernel.0, lam).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("loss", sol.loss)?;
    out.set_item("c", sol.c.iter().copied().collect::<Vec<_>>())?;
    out.set_item("r", sol.r.iter().copied().collect::<Vec<_>>())?;
    Ok(out)
}

#[pyfunction]
fn loss_at(samples: &PySamples, u: Vec<Vec<f64>>, kernel: &PyKernel, lam: f64) -> PyResult<f64> {
    regression::loss_at(&samples.0, &point(&u)?, &kernel.0, lam).map_err(py_err)
}

/// `D𝒥` at `Σ = UᵀU`.
#[pyfunction]
fn first_variation(samples: &PySamples, u: Vec<Vec<f64>>, kernel: &PyKernel, lam: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = point(&u)?;
    let sol = regression::solve_at(&samples.0, &m, &kernel.0, lam).map_err(py_err)?;
    let dj = variation::first_variation(&samples.0, &sol, &m, &kernel.0).map_err(py_err)?;
    Ok(rows(dj.value()))
}

/// `∫ω₁²|f̂|²/k dω` along unit direction `w` (Gaussian kernel only).
#[pyfunction]
fn spectral_integral(samples: &PySamples, u: Vec<Vec<f64>>, kernel: &PyKernel, lam: f64, w: Vec<f64>) -> PyResult<f64> {
    let m = point(&u)?;
    let sol = regression::solve_at(&samples.0, &m, &kernel.0, lam).map_err(py_err)?;
    diagnostics::spectral_integral(&samples.0, &sol.c, &m, &kernel.0, &unit(w)).map_err(py_err)
}

/// Result of `run_flow`: per-record series plus the final factor.
#[pyclass(name = "Trace", frozen, get_all)]
struct PyTrace {
    t: Vec<f64>,
    loss: Vec<f64>,
    residual: Vec<f64>,
    eigenvalues: Vec<Vec<f64>>,
    monitor_norms: Vec<Vec<f64>>,
    final_sigma: Vec<Vec<f64>>,
    final_u: Option<Vec<Vec<f64>>>,
    terminated_by: String,
    backtracked_steps: usize,
}

#[pymethods]
impl PyTrace {
    fn __len__(&self) -> usize {
        self.t.len()
    }
}

#[pyfunction]
#[pyo3(signature = (samples, u0, kernel, lam, integrator="rk4_lifted_u", step=0.1, max_steps=1000, max_time=f64::INFINITY, stationarity_tol=0.0, monitors=Vec::new()))]
#[allow(clippy::too_many_arguments)]
fn run_flow(
    samples: &PySamples,
    u0: Vec<Vec<f64>>,
    kernel: &PyKernel,
    lam: f64,
    integrator: &str,
    step: f64,
    max_steps: usize,
    max_time: f64,
    stationarity_tol: f64,
    monitors: Vec<Vec<f64>>,
) -> PyResult<PyTrace> {
    let integrator = match integrator {
        "rk4_lifted_u" => Integrator::Rk4LiftedU,
        "euler_lifted_u" => Integrator::EulerLiftedU,
        "euler_sigma_direct" => Integrator::EulerSigmaDirect,
        "euler_sigma_euclidean" => Integrator::EulerSigmaEuclidean,
        other => return Err(PyValueError::new_err(format!("unknown integrator `{other}`"))),
    };
    let mut cfg = FlowConfig::new(lam, integrator, step, max_steps);
    cfg.max_time = max_time;
    cfg.stationarity_tol = stationarity_tol;
    cfg.monitors = monitors.into_iter().map(unit).collect();
    let trace = flow::run_flow(&samples.0, &point(&u0)?, &kernel.0, &cfg).map_err(py_err)?;
    let last = trace.last();
    Ok(PyTrace {
        t: trace.records.iter().map(|r| r.t).collect(),
        loss: trace.records.iter().map(|r| r.loss).collect(),
        residual: trace.records.iter().map(|r| r.residual).collect(),
        eigenvalues: trace.records.iter().map(|r| r.eigenvalues.clone()).collect(),
        monitor_norms: trace.records.iter().map(|r| r.monitor_norms.clone()).collect(),
        final_sigma: rows(&last.sigma),
        final_u: last.u.as_ref().map(rows),
        terminated_by: match trace.terminated_by {
            Termination::Stationary => "stationary",
            Termination::MaxTime => "max_time",
            Termination::MaxSteps => "max_steps",
            Termination::Breakdown => "breakdown",
        }
        .to_string(),
        backtracked_steps: trace.backtracked_steps(),
    })
}

#[pymodule]
fn pysigmaflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PySamples>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(solve_ridge, m)?)?;
    m.add_function(wrap_pyfunction!(loss_at, m)?)?;
    m.add_function(wrap_pyfunction!(first_variation, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_integral, m)?)?;
    m.add_function(wrap_pyfunction!(run_flow, m)?)?;
    Ok(())
}
