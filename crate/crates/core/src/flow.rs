//! Gradient flows of the ridge loss on the PSD cone.
//!
//! The default integrator evolves the factor `U` by `dU/dt = −½U·D𝒥(UᵀU)`. Every stage is a
//! right-multiplication of `U`, so `Σ = UᵀU` stays PSD and keeps its rank. The direct `Σ`
//! integrator and the Euclidean flow `dΣ/dt = −D𝒥` are kept for comparison.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::kernel::RadialKernel;
use crate::linalg::{sym_eigen, sym_eigenvalues, symmetrize};
use crate::regression::{gram_matrix_form, solve_at, solve_ridge, MetricPoint};
use crate::variation::{first_variation, first_variation_form, CotangentTensor};

/// Largest loss increase still counted as a decrease.
pub const LOSS_SLACK: f64 = 1e-12;
/// Backtracks allowed per step before the flow is declared stalled.
pub const MAX_BACKTRACKS: usize = 30;
/// Negative eigenvalues of the direct `Σ` update above this are clamped silently.
pub const CLAMP_SILENT: f64 = -1e-10;
/// Negative eigenvalues of the direct `Σ` update below this are an error.
pub const CLAMP_FATAL: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4LiftedU,
    EulerLiftedU,
    EulerSigmaDirect,
    EulerSigmaEuclidean,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rk4LiftedU => "rk4_lifted_u",
            Integrator::EulerLiftedU => "euler_lifted_u",
            Integrator::EulerSigmaDirect => "euler_sigma_direct",
            Integrator::EulerSigmaEuclidean => "euler_sigma_euclidean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub lambda: f64,
    pub integrator: Integrator,
    pub step: f64,
    pub max_steps: usize,
    pub max_time: f64,
    pub stationarity_tol: f64,
    pub backtrack: bool,
    pub shrink: f64,
    /// Unit vectors in whitened coordinates whose `|w|²_Σ` is recorded.
    pub monitors: Vec<DVector<f64>>,
    /// Keep the ridge coefficients in every record (needed by some diagnostics).
    pub keep_coefficients: bool,
}

impl FlowConfig {
    pub fn new(lambda: f64, integrator: Integrator, step: f64, max_steps: usize) -> Self {
        Self {
            lambda,
            integrator,
            step,
            max_steps,
            max_time: f64::INFINITY,
            stationarity_tol: 0.0,
            backtrack: true,
            shrink: 0.5,
            monitors: Vec::new(),
            keep_coefficients: false,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::Config(format!("max_time must be positive, got {}", self.max_time)));
        }
        if !(self.stationarity_tol >= 0.0) {
            return Err(Error::Config("stationarity_tol must be nonnegative".into()));
        }
        for (i, w) in self.monitors.iter().enumerate() {
            if w.len() != d {
                return Err(Error::Config(format!("monitor {i} has length {}, expected {d}", w.len())));
            }
            if (w.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("monitor {i} is not a unit vector (|w| = {})", w.norm())));
            }
        }
        Ok(())
    }
}

/// Something that returns `D𝒥` at a metric. Implemented by [`RidgeProvider`]; tests also use
/// constant fields.
pub trait VariationProvider {
    fn variation(&self, m: &MetricPoint) -> Result<CotangentTensor>;

    /// `D𝒥` at a symmetric, possibly indefinite `Σ`.
    fn variation_form(&self, sigma: &DMatrix<f64>) -> Result<CotangentTensor>;
}

/// Loss and first variation of the ridge problem on a fixed dataset.
#[derive(Debug, Clone, Copy)]
pub struct RidgeProvider<'a> {
    pub samples: &'a SampleSet,
    pub kernel: &'a RadialKernel,
    pub lambda: f64,
}

/// Loss, first variation and coefficients at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub dj: CotangentTensor,
    pub c: DVector<Complex64>,
}

impl<'a> RidgeProvider<'a> {
    pub fn new(samples: &'a SampleSet, kernel: &'a RadialKernel, lambda: f64) -> Self {
        Self { samples, kernel, lambda }
    }

    pub fn evaluate(&self, m: &MetricPoint) -> Result<Evaluation> {
        let sol = solve_at(self.samples, m, self.kernel, self.lambda)?;
        let dj = first_variation(self.samples, &sol, m, self.kernel)?;
        Ok(Evaluation { loss: sol.loss, dj, c: sol.c })
    }

    pub fn evaluate_form(&self, sigma: &DMatrix<f64>) -> Result<Evaluation> {
        let g = gram_matrix_form(self.samples, sigma, self.kernel)?;
        let sol = solve_ridge(&g, self.samples.y(), self.lambda)?;
        let dj = first_variation_form(self.samples, &sol, sigma, self.kernel)?;
        Ok(Evaluation { loss: sol.loss, dj, c: sol.c })
    }
}

impl VariationProvider for RidgeProvider<'_> {
    fn variation(&self, m: &MetricPoint) -> Result<CotangentTensor> {
        Ok(self.evaluate(m)?.dj)
    }

    fn variation_form(&self, sigma: &DMatrix<f64>) -> Result<CotangentTensor> {
        Ok(self.evaluate_form(sigma)?.dj)
    }
}

fn finite(u: &DMatrix<f64>) -> Result<()> {
    if u.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite stage value".into()))
    }
}

/// `U(I − (a/2)D)`
fn advance(u: &DMatrix<f64>, d: &DMatrix<f64>, a: f64) -> DMatrix<f64> {
    let mut m = d * (-0.5 * a);
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0;
    }
    u * m
}

fn lifted<P: VariationProvider + ?Sized>(m: &MetricPoint, d0: &CotangentTensor, p: &P, h: f64, scheme: Scheme) -> Result<MetricPoint> {
    let u = m.u();
    let next = match scheme {
        Scheme::Euler => advance(u, d0.value(), h),
        Scheme::Rk4 => {
            // Stage slopes are −½U·D_k; carry the D_k and form the update as one right factor.
            let d1 = d0.value().clone();
            let u2 = advance(u, &d1, h / 2.0);
            finite(&u2)?;
            let d2 = p.variation(&MetricPoint::new(u2.clone())?)?.into_inner();
            let k2 = &u2 * &d2 * -0.5;
            let u3 = u + &k2 * (h / 2.0);
            finite(&u3)?;
            let d3 = p.variation(&MetricPoint::new(u3.clone())?)?.into_inner();
            let k3 = &u3 * &d3 * -0.5;
            let u4 = u + &k3 * h;
            finite(&u4)?;
            let d4 = p.variation(&MetricPoint::new(u4.clone())?)?.into_inner();
            let k4 = &u4 * &d4 * -0.5;
            let k1 = u * &d1 * -0.5;
            u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        }
    };
    finite(&next)?;
    MetricPoint::new(next)
}

/// One step of the lifted flow.
pub fn step_lifted_u<P: VariationProvider + ?Sized>(m: &MetricPoint, p: &P, h: f64, scheme: Scheme) -> Result<MetricPoint> {
    let d0 = p.variation(m)?;
    lifted(m, &d0, p, h, scheme)
}

/// Result of a direct `Σ` step: the new point and how many eigenvalues were clamped with a warning.
#[derive(Debug, Clone)]
pub struct DirectStep {
    pub point: MetricPoint,
    pub clamped: usize,
}

fn direct(m: &MetricPoint, d: &CotangentTensor, h: f64) -> Result<DirectStep> {
    let sigma = m.sigma();
    let sd = &sigma * d.value();
    let next = symmetrize(&(&sigma - (&sd + sd.transpose()) * (h / 2.0)));
    finite(&next)?;
    let (vals, vecs) = sym_eigen(&next);
    if vals[0] < CLAMP_FATAL {
        return Err(Error::PsdViolation { min_eigenvalue: vals[0] });
    }
    let clamped = vals.iter().filter(|&&v| v < CLAMP_SILENT).count();
    if clamped > 0 {
        log::warn!("direct sigma step clamped {clamped} eigenvalue(s), min {:e}", vals[0]);
    }
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt())));
    let u = scale * vecs.transpose();
    Ok(DirectStep { point: MetricPoint::new(u)?, clamped })
}

/// Euler step `Σ ← Σ − (h/2)(ΣD + DΣ)`, refactored by eigendecomposition.
pub fn step_sigma_direct<P: VariationProvider + ?Sized>(m: &MetricPoint, p: &P, h: f64) -> Result<DirectStep> {
    direct(m, &p.variation(m)?, h)
}

/// Euler step `Σ ← Σ − hD`. The result need not be PSD.
pub fn step_sigma_euclidean<P: VariationProvider + ?Sized>(sigma: &DMatrix<f64>, p: &P, h: f64) -> Result<DMatrix<f64>> {
    let d = p.variation_form(sigma)?;
    Ok(symmetrize(&(sigma - d.value() * h)))
}

/// `Tr(DΣD) = ‖UD‖²_F`.
pub fn stationarity_residual(m: &MetricPoint, dj: &CotangentTensor) -> f64 {
    (m.u() * dj.value()).norm_squared()
}

/// `|w|²_Σ = |Uw|²`.
pub fn monitor_norm(m: &MetricPoint, w: &DVector<f64>) -> f64 {
    (m.u() * w).norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub t: f64,
    /// Step that produced this record (0 for the initial record).
    pub h: f64,
    pub backtracks: usize,
    pub loss: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub monitor_norms: Vec<f64>,
    /// `‖UD‖²_F`, or `‖D‖²_F` for the Euclidean flow.
    pub residual: f64,
    pub sigma: DMatrix<f64>,
    /// Factor, absent for the Euclidean flow.
    pub u: Option<DMatrix<f64>>,
    pub dj: DMatrix<f64>,
    pub c: Option<DVector<Complex64>>,
}

impl TraceRecord {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn point(&self) -> Option<MetricPoint> {
        self.u.as_ref().and_then(|u| MetricPoint::new(u.clone()).ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stationary,
    MaxTime,
    MaxSteps,
    /// The Euclidean flow left the region where the ridge problem is defined.
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub integrator: Integrator,
    pub records: Vec<TraceRecord>,
    pub terminated_by: Termination,
    /// Eigenvalues clamped with a warning by the direct `Σ` integrator.
    pub clamp_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub integrator: Integrator,
    pub final_loss: f64,
    pub final_eigenvalues: Vec<f64>,
    pub steps: usize,
    pub final_time: f64,
    pub terminated_by: Termination,
    pub backtracked_steps: usize,
    pub min_eigenvalue_seen: f64,
    pub clamp_warnings: usize,
}

impl FlowTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always has the initial record")
    }

    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn backtracked_steps(&self) -> usize {
        self.records.iter().filter(|r| r.backtracks > 0).count()
    }

    pub fn summary(&self) -> FlowSummary {
        let last = self.last();
        FlowSummary {
            integrator: self.integrator,
            final_loss: last.loss,
            final_eigenvalues: last.eigenvalues.clone(),
            steps: self.steps(),
            final_time: last.t,
            terminated_by: self.terminated_by,
            backtracked_steps: self.backtracked_steps(),
            min_eigenvalue_seen: self.records.iter().map(|r| r.min_eigenvalue()).fold(f64::INFINITY, f64::min),
            clamp_warnings: self.clamp_warnings,
        }
    }

    /// One row per record: `step,t,h,backtracks,loss,residual,eig_*,mon_*,sigma_i_j` (upper triangle).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let first = &self.records[0];
        let d = first.eigenvalues.len();
        let mut header: Vec<String> = ["step", "t", "h", "backtracks", "loss", "residual"].iter().map(|s| s.to_string()).collect();
        header.extend((0..d).map(|i| format!("eig_{i}")));
        header.extend((0..first.monitor_norms.len()).map(|i| format!("mon_{i}")));
        for i in 0..d {
            for j in i..d {
                header.push(format!("sigma_{i}_{j}"));
            }
        }
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.step.to_string(),
                r.t.to_string(),
                r.h.to_string(),
                r.backtracks.to_string(),
                r.loss.to_string(),
                r.residual.to_string(),
            ];
            row.extend(r.eigenvalues.iter().map(|v| v.to_string()));
            row.extend(r.monitor_norms.iter().map(|v| v.to_string()));
            for i in 0..d {
                for j in i..d {
                    row.push(r.sigma[(i, j)].to_string());
                }
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Current position of a flow: a factor, or a bare symmetric matrix for the Euclidean flow.
#[derive(Debug, Clone)]
enum State {
    Factor(MetricPoint),
    Form(DMatrix<f64>),
}

impl State {
    fn sigma(&self) -> DMatrix<f64> {
        match self {
            State::Factor(m) => m.sigma(),
            State::Form(s) => s.clone(),
        }
    }
}

fn record(step: usize, t: f64, h: f64, backtracks: usize, state: &State, ev: &Evaluation, cfg: &FlowConfig) -> TraceRecord {
    let sigma = state.sigma();
    let (u, residual, monitor_norms) = match state {
        State::Factor(m) => (
            Some(m.u().clone()),
            stationarity_residual(m, &ev.dj),
            cfg.monitors.iter().map(|w| monitor_norm(m, w)).collect(),
        ),
        State::Form(s) => {
            // Gradient norm of the Frobenius flow; `Tr(DΣD)` turns negative once Σ is indefinite.
            (None, ev.dj.value().norm_squared(), cfg.monitors.iter().map(|w| w.dot(&(s * w))).collect())
        }
    };
    TraceRecord {
        step,
        t,
        h,
        backtracks,
        loss: ev.loss,
        eigenvalues: sym_eigenvalues(&sigma),
        monitor_norms,
        residual,
        sigma,
        u,
        dj: ev.dj.value().clone(),
        c: cfg.keep_coefficients.then(|| ev.c.clone()),
    }
}

/// Integrates the configured flow from `m0`.
///
/// A step is accepted when the loss rises by at most [`LOSS_SLACK`]; otherwise (or when a stage
/// fails numerically) the step is retried with `h ← shrink·h`, at most [`MAX_BACKTRACKS`] times.
/// The Euclidean flow is never backtracked on loss; it stops with [`Termination::Breakdown`] when
/// the ridge problem stops being solvable.
pub fn run_flow(s: &SampleSet, m0: &MetricPoint, k: &RadialKernel, cfg: &FlowConfig) -> Result<FlowTrace> {
    cfg.validate(s.dim())?;
    if m0.dim() != s.dim() {
        return Err(Error::Input(format!("initial metric has dimension {}, data {}", m0.dim(), s.dim())));
    }
    let p = RidgeProvider::new(s, k, cfg.lambda);
    let euclidean = cfg.integrator == Integrator::EulerSigmaEuclidean;
    let mut state = if euclidean { State::Form(m0.sigma()) } else { State::Factor(m0.clone()) };
    let mut ev = match &state {
        State::Factor(m) => p.evaluate(m)?,
        State::Form(sg) => p.evaluate_form(sg)?,
    };
    let mut t = 0.0;
    let mut records = vec![record(0, t, 0.0, 0, &state, &ev, cfg)];
    let mut clamp_warnings = 0;
    let time_eps = 1e-12 * cfg.max_time.abs().max(1.0);

    let terminated_by = loop {
        let last = records.last().unwrap();
        if last.residual <= cfg.stationarity_tol {
            break Termination::Stationary;
        }
        if t >= cfg.max_time - time_eps {
            break Termination::MaxTime;
        }
        if records.len() > cfg.max_steps {
            break Termination::MaxSteps;
        }
        let mut h = cfg.step.min(cfg.max_time - t);

        if let State::Form(sigma) = &state {
            let next = symmetrize(&(sigma - ev.dj.value() * h));
            match p.evaluate_form(&next) {
                Ok(next_ev) => {
                    t += h;
                    state = State::Form(next);
                    ev = next_ev;
                    records.push(record(records.len(), t, h, 0, &state, &ev, cfg));
                    continue;
                }
                Err(Error::Numeric(msg)) | Err(Error::Consistency(msg)) => {
                    log::warn!("euclidean flow broke down at t = {t}: {msg}");
                    // Record the offending point's spectrum so the failure is visible.
                    let mut last = record(records.len(), t + h, h, 0, &State::Form(next.clone()), &ev, cfg);
                    last.loss = f64::NAN;
                    last.residual = f64::NAN;
                    records.push(last);
                    break Termination::Breakdown;
                }
                Err(e) => return Err(e),
            }
        }

        let State::Factor(m) = state.clone() else { unreachable!() };
        let m = &m;
        let mut attempts = 0;
        let mut last_loss = f64::NAN;
        loop {
            let attempt = match cfg.integrator {
                Integrator::Rk4LiftedU => lifted(m, &ev.dj, &p, h, Scheme::Rk4).map(|n| (n, 0)),
                Integrator::EulerLiftedU => lifted(m, &ev.dj, &p, h, Scheme::Euler).map(|n| (n, 0)),
                Integrator::EulerSigmaDirect => direct(m, &ev.dj, h).map(|st| (st.point, st.clamped)),
                Integrator::EulerSigmaEuclidean => unreachable!(),
            }
            .and_then(|(n, cl)| p.evaluate(&n).map(|e| (n, cl, e)));
            let retry = match attempt {
                Ok((next, cl, next_ev)) => {
                    if next_ev.loss <= ev.loss + LOSS_SLACK || !cfg.backtrack {
                        t += h;
                        clamp_warnings += cl;
                        state = State::Factor(next);
                        ev = next_ev;
                        records.push(record(records.len(), t, h, attempts, &state, &ev, cfg));
                        false
                    } else {
                        last_loss = next_ev.loss;
                        true
                    }
                }
                Err(e @ (Error::Numeric(_) | Error::PsdViolation { .. })) => {
                    if !cfg.backtrack {
                        return Err(e);
                    }
                    true
                }
                Err(e) => return Err(e),
            };
            if !retry {
                break;
            }
            if attempts == MAX_BACKTRACKS {
                return Err(Error::StalledFlow { t, attempts, last_step: h, loss: ev.loss, attempted_loss: last_loss });
            }
            attempts += 1;
            h *= cfg.shrink;
        }
    };

    Ok(FlowTrace { integrator: cfg.integrator, records, terminated_by, clamp_warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(DMatrix<f64>);

    impl VariationProvider for Constant {
        fn variation(&self, _: &MetricPoint) -> Result<CotangentTensor> {
            CotangentTensor::new(self.0.clone())
        }
        fn variation_form(&self, _: &DMatrix<f64>) -> Result<CotangentTensor> {
            CotangentTensor::new(self.0.clone())
        }
    }

    #[test]
    fn zero_variation_is_fixed_point() {
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
        let m = MetricPoint::new(u.clone()).unwrap();
        let p = Constant(DMatrix::zeros(2, 2));
        assert_eq!(step_lifted_u(&m, &p, 0.3, Scheme::Rk4).unwrap().u(), &u);
        assert!((step_sigma_direct(&m, &p, 0.3).unwrap().point.sigma() - m.sigma()).amax() < 1e-14);
        assert_eq!(step_sigma_euclidean(&m.sigma(), &p, 0.3).unwrap(), m.sigma());
    }

    #[test]
    fn euclidean_identity_example() {
        let p = Constant(DMatrix::identity(3, 3));
        let next = step_sigma_euclidean(&DMatrix::identity(3, 3), &p, 0.25).unwrap();
        assert!((next - DMatrix::identity(3, 3) * 0.75).amax() < 1e-16);
    }

    #[test]
    fn zero_rows_stay_zero() {
        let u = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let m = MetricPoint::new(u).unwrap();
        let p = Constant(DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, -1.0, 0.2, 0.0, 0.2, 0.5]));
        let next = step_lifted_u(&m, &p, 0.1, Scheme::Rk4).unwrap();
        assert!(next.u().rows(1, 2).iter().all(|&v| v == 0.0));
        assert_eq!(next.rank(), 1);
    }

    #[test]
    fn zero_sigma_stays_zero() {
        let m = MetricPoint::new(DMatrix::zeros(2, 2)).unwrap();
        let p = Constant(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert_eq!(step_sigma_direct(&m, &p, 0.5).unwrap().point.sigma(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn residual_examples() {
        let d = CotangentTensor::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0]))).unwrap();
        assert!((stationarity_residual(&MetricPoint::identity(2), &d) - 13.0).abs() < 1e-15);
        assert_eq!(stationarity_residual(&MetricPoint::new(DMatrix::zeros(2, 2)).unwrap(), &d), 0.0);
        assert_eq!(stationarity_residual(&MetricPoint::identity(2), &CotangentTensor::zeros(2)), 0.0);
    }

    #[test]
    fn monitor_examples() {
        let w = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(monitor_norm(&MetricPoint::identity(2), &w), 1.0);
        let m = MetricPoint::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))).unwrap();
        assert_eq!(monitor_norm(&m, &w), 4.0);
        assert_eq!(monitor_norm(&MetricPoint::new(DMatrix::zeros(2, 2)).unwrap(), &w), 0.0);
    }

    #[test]
    fn direct_step_rejects_large_negative() {
        let m = MetricPoint::identity(2);
        let p = Constant(DMatrix::identity(2, 2) * 10.0);
        assert!(matches!(step_sigma_direct(&m, &p, 1.0), Err(Error::PsdViolation { .. })));
    }

    #[test]
    fn config_validation() {
        let mut cfg = FlowConfig::new(0.1, Integrator::Rk4LiftedU, 0.1, 10);
        assert!(cfg.validate(2).is_ok());
        cfg.monitors.push(DVector::from_vec(vec![1.0, 1.0]));
        assert!(matches!(cfg.validate(2), Err(Error::Config(_))));
        let mut cfg = FlowConfig::new(0.1, Integrator::Rk4LiftedU, 0.1, 10);
        cfg.shrink = 1.0;
        assert!(cfg.validate(2).is_err());
    }
}
