//! Checks of the flow's analytic properties: eigenvalue laws, partial traces, monitor decay,
//! the spectral integral, the smoothing gap, the growth bound and the behaviour of `𝒥` near the
//! boundary of the PSD cone.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::flow::{FlowTrace, TraceRecord};
use crate::kernel::{gaussian_second_partial, RadialKernel};
use crate::linalg::{basis_with_first, sym_eigen};
use crate::regression::{loss_at, solve_at, sq_dists_factor, MetricPoint};
use crate::variation::{first_variation, CotangentTensor};

pub use crate::flow::monitor_norm;

/// Eigenvalue gap below which eigenvector-based quantities are flagged unreliable.
pub const EIGEN_GAP_TOL: f64 = 1e-8;

/// Predicted eigenvalue velocities `λ̇_i = −λ_i e_iᵀ D𝒥 e_i` at one point.
#[derive(Debug, Clone)]
pub struct EigenRates {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub rates: Vec<f64>,
    /// False if two eigenvalues are closer than [`EIGEN_GAP_TOL`].
    pub reliable: bool,
}

pub fn eigen_rhs(sigma: &DMatrix<f64>, dj: &CotangentTensor) -> EigenRates {
    let (vals, vecs) = sym_eigen(sigma);
    let rates = (0..vals.len())
        .map(|i| {
            let e = vecs.column(i);
            -vals[i] * e.dot(&(dj.value() * e))
        })
        .collect();
    let reliable = vals.windows(2).all(|p| p[1] - p[0] > EIGEN_GAP_TOL);
    EigenRates { eigenvalues: vals, eigenvectors: vecs, rates, reliable }
}

/// Eigenvalues along a trace, with eigenvectors matched across records by greedy maximal
/// overlap, and predicted versus measured velocities.
#[derive(Debug, Clone)]
pub struct EigenTrack {
    pub t: Vec<f64>,
    /// `eigenvalues[k][i]` is the value of the track `i` at record `k`.
    pub eigenvalues: Vec<Vec<f64>>,
    pub eigenvectors: Vec<DMatrix<f64>>,
    pub predicted: Vec<Vec<f64>>,
    /// Central differences; `None` at the two ends.
    pub measured: Vec<Option<Vec<f64>>>,
    pub reliable: Vec<bool>,
}

impl EigenTrack {
    pub fn from_trace(trace: &FlowTrace) -> Result<Self> {
        let mut track = EigenTrack {
            t: Vec::new(),
            eigenvalues: Vec::new(),
            eigenvectors: Vec::new(),
            predicted: Vec::new(),
            measured: Vec::new(),
            reliable: Vec::new(),
        };
        let mut prev: Option<DMatrix<f64>> = None;
        for rec in &trace.records {
            let dj = CotangentTensor::new(rec.dj.clone())?;
            let rates = eigen_rhs(&rec.sigma, &dj);
            let d = rates.eigenvalues.len();
            let order = match &prev {
                None => (0..d).collect(),
                Some(p) => match_by_overlap(p, &rates.eigenvectors),
            };
            let mut vecs = DMatrix::zeros(d, d);
            for (slot, &src) in order.iter().enumerate() {
                let mut col = rates.eigenvectors.column(src).into_owned();
                if let Some(p) = &prev {
                    if p.column(slot).dot(&col) < 0.0 {
                        col = -col;
                    }
                }
                vecs.set_column(slot, &col);
            }
            track.t.push(rec.t);
            track.eigenvalues.push(order.iter().map(|&i| rates.eigenvalues[i]).collect());
            track.predicted.push(order.iter().map(|&i| rates.rates[i]).collect());
            track.reliable.push(rates.reliable);
            track.eigenvectors.push(vecs.clone());
            prev = Some(vecs);
        }
        let k = track.t.len();
        for j in 0..k {
            if j == 0 || j + 1 == k {
                track.measured.push(None);
                continue;
            }
            let dt = track.t[j + 1] - track.t[j - 1];
            let d = track.eigenvalues[j].len();
            track.measured.push(Some(
                (0..d).map(|i| (track.eigenvalues[j + 1][i] - track.eigenvalues[j - 1][i]) / dt).collect(),
            ));
        }
        Ok(track)
    }

    /// Largest orthonormality defect of the matched eigenvector matrices.
    pub fn max_orthonormality_defect(&self) -> f64 {
        self.eigenvectors.iter().map(crate::linalg::orthonormality_defect).fold(0.0, f64::max)
    }
}

/// For each column of `prev`, the column of `next` with the largest absolute overlap, chosen
/// greedily over all pairs in decreasing overlap.
fn match_by_overlap(prev: &DMatrix<f64>, next: &DMatrix<f64>) -> Vec<usize> {
    let d = prev.ncols();
    let overlap = prev.transpose() * next;
    let mut pairs: Vec<(f64, usize, usize)> =
        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| (overlap[(i, j)].abs(), i, j)).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut order = vec![usize::MAX; d];
    let mut used = vec![false; d];
    for (_, i, j) in pairs {
        if order[i] == usize::MAX && !used[j] {
            order[i] = j;
            used[j] = true;
        }
    }
    order
}

/// Rate of change of `Tr(PΣ)` under the flow, `−Tr(PΣD𝒥)`, for `P` the projection onto the
/// span of an orthonormal list.
pub fn partial_trace_rate(m: &MetricPoint, dj: &CotangentTensor, basis: &[DVector<f64>]) -> Result<f64> {
    let d = m.dim();
    let mut p = DMatrix::zeros(d, d);
    for (i, v) in basis.iter().enumerate() {
        if v.len() != d {
            return Err(Error::Input(format!("basis vector {i} has length {}, expected {d}", v.len())));
        }
        for (j, w) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            if (v.dot(w) - target).abs() > 1e-10 {
                return Err(Error::Input("basis is not orthonormal".into()));
            }
        }
        p += v * v.transpose();
    }
    Ok(-(p * m.sigma() * dj.value()).trace())
}

/// Unit vector along `Uw` in the gauge where the re-gauged factor is upper triangular with
/// respect to `ℝw ⊕ w^⊥`. The re-gauge acts on a copy: `B` is an orthonormal basis with first
/// column `w`, `UB = QR`, and the image direction of `w` is `Q e₁`.
fn image_direction(u: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    let b = basis_with_first(w);
    let q = (u * b).qr().q();
    q.column(0).into_owned()
}

fn require_gaussian(k: &RadialKernel) -> Result<f64> {
    k.beta().ok_or_else(|| Error::Unsupported("this diagnostic is only defined for the Gaussian kernel".into()))
}

fn check_unit(w: &DVector<f64>, d: usize) -> Result<()> {
    if w.len() != d {
        return Err(Error::Input(format!("direction has length {}, expected {d}", w.len())));
    }
    if (w.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::Input(format!("direction must be a unit vector, |w| = {}", w.norm())));
    }
    Ok(())
}

/// Pair sum `Σ_jl Re(c_j c̄_l) f(z_jl)` with `z_jl = U(x_l − x_j)`, given `f(⟨z,u⟩, |z|²)`.
fn pair_sum<F: Fn(f64, f64) -> f64 + Sync>(x: &DMatrix<f64>, c: &DVector<Complex64>, u: &DMatrix<f64>, dir: &DVector<f64>, f: F) -> f64 {
    let z = x * u.transpose();
    let along = &z * dir;
    let n = x.nrows();
    let dists = sq_dists_factor(x, u);
    let mut total = 0.0;
    for j in 0..n {
        let mut row = 0.0;
        for l in 0..n {
            let w = (c[j] * c[l].conj()).re;
            if w != 0.0 {
                row += w * f(along[l] - along[j], dists[(j, l)]);
            }
        }
        total += row;
    }
    total
}

/// `S = ∫ ω₁² |f̂_U|²/k_V dω` in closed form,
/// `Σ_jl Re(c_j c̄_l) · (−1/4π²) ∂²₁K(U(x_l − x_j))` with `∂₁` along the image of `w`.
/// Negative values (rounding) are clamped to 0, with a warning below `−1e−9`.
pub fn spectral_integral(s: &SampleSet, c: &DVector<Complex64>, m: &MetricPoint, k: &RadialKernel, w: &DVector<f64>) -> Result<f64> {
    let beta = require_gaussian(k)?;
    check_unit(w, m.dim())?;
    if c.len() != s.n() {
        return Err(Error::Input(format!("{} coefficients for {} samples", c.len(), s.n())));
    }
    let dir = image_direction(m.u(), w);
    let val = pair_sum(s.x(), c, m.u(), &dir, |a, r| -gaussian_second_partial(beta, a, r)) / (4.0 * PI * PI);
    if val < 0.0 {
        if val < -1e-9 {
            log::warn!("spectral integral {val:e} is negative beyond rounding");
        }
        return Ok(0.0);
    }
    Ok(val)
}

/// Factor whose `w`-column is scaled by `√(1−s)`: `U(I − (1 − √(1−s)) wwᵀ)`, so that
/// `|w|²_{Σ_s} = (1−s)|w|²_Σ` and `Σ` is unchanged on `w^⊥`.
pub fn smoothed_factor(m: &MetricPoint, w: &DVector<f64>, s_param: f64) -> Result<MetricPoint> {
    check_unit(w, m.dim())?;
    if !(0.0..1.0).contains(&s_param) {
        return Err(Error::Domain(format!("smoothing parameter must lie in [0, 1), got {s_param}")));
    }
    let d = m.dim();
    let shrink = 1.0 - (1.0 - s_param).sqrt();
    let p = DMatrix::identity(d, d) - w * w.transpose() * shrink;
    MetricPoint::new(m.u() * p)
}

/// Gap term `(λ/2) ∫ (1 − e^{−4π²α²|Uw|²ω₁²s}) |f̂_U|²/k_V dω`, as the pair sum
/// `(λ/2) Σ Re(c_j c̄_l) [K(z) − K_s(z)]` where
/// `K_s(z) = (1+4βτ)^{−1/2} e^{−βz₁²/(1+4βτ)} e^{−β|z_⊥|²}` and `τ = α²|Uw|²s`.
#[allow(clippy::too_many_arguments)]
pub fn smoothing_gap_bound(
    s: &SampleSet,
    c: &DVector<Complex64>,
    m: &MetricPoint,
    k: &RadialKernel,
    lambda: f64,
    w: &DVector<f64>,
    s_param: f64,
    alpha: f64,
) -> Result<f64> {
    let beta = require_gaussian(k)?;
    check_unit(w, m.dim())?;
    if !(0.0..1.0).contains(&s_param) {
        return Err(Error::Domain(format!("smoothing parameter must lie in [0, 1), got {s_param}")));
    }
    if s_param == 0.0 {
        return Ok(0.0);
    }
    let tau = alpha * alpha * (m.u() * w).norm_squared() * s_param;
    let q = 1.0 + 4.0 * beta * tau;
    let dir = image_direction(m.u(), w);
    let sum = pair_sum(s.x(), c, m.u(), &dir, |a, r| {
        let perp = (r - a * a).max(0.0);
        (-beta * r).exp() - q.powf(-0.5) * (-beta * a * a / q).exp() * (-beta * perp).exp()
    });
    Ok(0.5 * lambda * sum)
}

/// Outcome of the smoothing inequality `𝒥(U_s) ≤ 𝒥(U) − gap + τ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingCheck {
    pub s_param: f64,
    pub loss: f64,
    pub smoothed_loss: f64,
    pub gap: f64,
    pub tolerance: f64,
    /// `𝒥(U_s) − (𝒥(U) − gap)`; nonpositive when the inequality holds without slack.
    pub excess: f64,
    pub holds: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn smoothing_check(s: &SampleSet, m: &MetricPoint, k: &RadialKernel, lambda: f64, w: &DVector<f64>, s_param: f64, alpha: f64, tol: &StatTolerance) -> Result<SmoothingCheck> {
    let sol = solve_at(s, m, k, lambda)?;
    let gap = smoothing_gap_bound(s, &sol.c, m, k, lambda, w, s_param, alpha)?;
    let smoothed_loss = loss_at(s, &smoothed_factor(m, w, s_param)?, k, lambda)?;
    let excess = smoothed_loss - (sol.loss - gap);
    let tolerance = tol.at(gap);
    Ok(SmoothingCheck { s_param, loss: sol.loss, smoothed_loss, gap, tolerance, excess, holds: excess <= tolerance })
}

/// Statistical slack `τ = rel·|bound| + abs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatTolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for StatTolerance {
    fn default() -> Self {
        Self { rel: 0.2, abs: 5e-4 }
    }
}

impl StatTolerance {
    pub fn at(&self, bound: f64) -> f64 {
        self.rel * bound.abs() + self.abs
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayBoundRecord {
    pub step: usize,
    pub t: f64,
    pub monitor: usize,
    pub norm_sq: f64,
    pub spectral_integral: f64,
    pub bound_rhs: f64,
    pub measured_deriv: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorDecay {
    pub monitor: usize,
    /// Interior records with a central difference.
    pub steps: usize,
    /// Steps with `measured > τ` (monitor increasing beyond slack).
    pub increase_violations: usize,
    /// Steps with `measured > bound_rhs + τ`.
    pub bound_violations: usize,
    pub log_slope: f64,
    pub min_spectral_integral: f64,
    /// `−2π²λ · min S`.
    pub predicted_slope: f64,
    pub initial_norm_sq: f64,
    pub final_norm_sq: f64,
}

impl MonitorDecay {
    pub fn increase_fraction(&self) -> f64 {
        self.increase_violations as f64 / self.steps.max(1) as f64
    }

    pub fn bound_fraction(&self) -> f64 {
        self.bound_violations as f64 / self.steps.max(1) as f64
    }

    pub fn decay_ratio(&self) -> f64 {
        self.final_norm_sq / self.initial_norm_sq
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub records: Vec<DecayBoundRecord>,
    pub monitors: Vec<MonitorDecay>,
    /// False when the caller knows the noise is not Gaussian and independent, in which case
    /// no inequality is claimed and the numbers are informational.
    pub in_scope: bool,
}

/// Evaluates the decay bound `d/dt|w|²_Σ ≤ −2π²λ|w|²_Σ S` along a lifted-flow trace for each
/// monitor (unit vectors in whitened coordinates).
pub fn decay_bound_check(
    trace: &FlowTrace,
    s: &SampleSet,
    k: &RadialKernel,
    lambda: f64,
    monitors: &[DVector<f64>],
    tol: &StatTolerance,
    in_scope: bool,
) -> Result<DecayReport> {
    require_gaussian(k)?;
    let recs = &trace.records;
    let mut spectral = Vec::with_capacity(recs.len());
    for rec in recs {
        let m = point(rec)?;
        let c = match &rec.c {
            Some(c) => c.clone(),
            None => solve_at(s, &m, k, lambda)?.c,
        };
        let row = monitors.iter().map(|w| spectral_integral(s, &c, &m, k, w)).collect::<Result<Vec<_>>>()?;
        spectral.push((m, row));
    }
    let mut out = Vec::new();
    let mut summaries = Vec::new();
    for (mi, w) in monitors.iter().enumerate() {
        let norms: Vec<f64> = spectral.iter().map(|(m, _)| monitor_norm(m, w)).collect();
        let mut steps = 0;
        let mut inc = 0;
        let mut bnd = 0;
        for j in 0..recs.len() {
            let sv = spectral[j].1[mi];
            let bound_rhs = -2.0 * PI * PI * lambda * norms[j] * sv;
            let measured = (j > 0 && j + 1 < recs.len()).then(|| (norms[j + 1] - norms[j - 1]) / (recs[j + 1].t - recs[j - 1].t));
            if let Some(md) = measured {
                steps += 1;
                let tau = tol.at(bound_rhs);
                if md > tau {
                    inc += 1;
                }
                if md > bound_rhs + tau {
                    bnd += 1;
                }
            }
            out.push(DecayBoundRecord { step: recs[j].step, t: recs[j].t, monitor: mi, norm_sq: norms[j], spectral_integral: sv, bound_rhs, measured_deriv: measured });
        }
        let ts: Vec<f64> = recs.iter().map(|r| r.t).collect();
        let logs: Vec<f64> = norms.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
        let min_s = spectral.iter().map(|(_, row)| row[mi]).fold(f64::INFINITY, f64::min);
        summaries.push(MonitorDecay {
            monitor: mi,
            steps,
            increase_violations: inc,
            bound_violations: bnd,
            log_slope: linear_slope(&ts, &logs),
            min_spectral_integral: min_s,
            predicted_slope: -2.0 * PI * PI * lambda * min_s,
            initial_norm_sq: norms[0],
            final_norm_sq: *norms.last().unwrap(),
        });
    }
    Ok(DecayReport { records: out, monitors: summaries, in_scope })
}

fn point(rec: &TraceRecord) -> Result<MetricPoint> {
    rec.point().ok_or_else(|| Error::Unsupported("diagnostic needs a factor trace (not the Euclidean flow)".into()))
}

/// Least-squares slope of `y` against `x`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    /// Largest `|Δ log Σ(w,w)|/h ÷ bound` over all steps and eigenvectors.
    pub max_ratio: f64,
    pub violations: usize,
    pub checked: usize,
}

/// `|Δ log Σ(w,w)|/h ≤ (4 sup|𝒦′|/λ) · mean|y|² · (mean⟨x,w⟩⁴)^{1/2} · (1 + slack)` for every
/// eigenvector `w` of `Σ` at the start of each accepted step. Eigenvalues below `1e−10·λ_max`
/// (directions already on the boundary) are skipped.
pub fn growth_bound_check(trace: &FlowTrace, s: &SampleSet, k: &RadialKernel, lambda: f64, slack: f64) -> GrowthReport {
    let base = 4.0 * k.sup_abs_d1() / lambda * s.mean_sq_label();
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut checked = 0;
    for pair in trace.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let h = b.t - a.t;
        let (vals, vecs) = sym_eigen(&a.sigma);
        let top = vals.last().copied().unwrap_or(0.0);
        for i in 0..vals.len() {
            if vals[i] <= 1e-10 * top {
                continue;
            }
            let w = vecs.column(i).into_owned();
            let after = w.dot(&(&b.sigma * &w));
            let rate = (after.ln() - vals[i].ln()).abs() / h;
            let bound = base * s.fourth_moment_along(&w).sqrt();
            let ratio = rate / bound;
            checked += 1;
            if ratio > 1.0 + slack || !ratio.is_finite() {
                violations += 1;
            }
            max_ratio = max_ratio.max(ratio);
        }
    }
    GrowthReport { max_ratio, violations, checked }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct C1Report {
    pub deltas: Vec<f64>,
    /// `|𝒥(Σ′) − 𝒥(Σ₁) − ⟨D𝒥(Σ₁), Σ′−Σ₁⟩| / ‖Σ′−Σ₁‖_F` at `Σ′ = Σ₁ + δ(Σ₀ − Σ₁)`.
    pub ratios: Vec<f64>,
    /// `ratios[i] / ratios[i+1]`; about 2 for a C¹ extension with Lipschitz derivative.
    pub halving_factors: Vec<f64>,
    /// Largest `‖ΔD𝒥‖_F / ‖ΔΣ‖_F` over `samples` and `2·samples` equispaced path points.
    pub lipschitz: f64,
    pub lipschitz_refined: f64,
}

/// Probes `𝒥` and `D𝒥` along the straight path `Σ(τ) = (1−τ)Σ₀ + τΣ₁` into a boundary point
/// `Σ₁`. Both endpoints must be PSD.
pub fn c1_extension_probe(
    s: &SampleSet,
    k: &RadialKernel,
    lambda: f64,
    sigma0: &DMatrix<f64>,
    sigma1: &DMatrix<f64>,
    deltas: &[f64],
    samples: usize,
) -> Result<C1Report> {
    let at = |sg: &DMatrix<f64>| -> Result<(f64, CotangentTensor)> {
        let (m, _) = MetricPoint::from_sigma(sg)?;
        let sol = solve_at(s, &m, k, lambda)?;
        let dj = first_variation(s, &sol, &m, k)?;
        Ok((sol.loss, dj))
    };
    let (j1, d1) = at(sigma1)?;
    let dir = sigma0 - sigma1;
    let mut ratios = Vec::new();
    for &delta in deltas {
        let ds = &dir * delta;
        let (j, _) = at(&(sigma1 + &ds))?;
        let lin = d1.value().dot(&ds);
        ratios.push((j - j1 - lin).abs() / ds.norm());
    }
    let halving_factors = ratios.windows(2).map(|p| p[0] / p[1]).collect();
    let lipschitz_on = |count: usize| -> Result<f64> {
        let mut prev: Option<(DMatrix<f64>, CotangentTensor)> = None;
        let mut best: f64 = 0.0;
        for i in 0..=count {
            let tau = i as f64 / count as f64;
            let sg = sigma0 * (1.0 - tau) + sigma1 * tau;
            let (_, dj) = at(&sg)?;
            if let Some((ps, pd)) = &prev {
                let num = (dj.value() - pd.value()).norm();
                let den = (&sg - ps).norm();
                if den > 0.0 {
                    best = best.max(num / den);
                }
            }
            prev = Some((sg, dj));
        }
        Ok(best)
    };
    let lipschitz = lipschitz_on(samples.max(1))?;
    let lipschitz_refined = lipschitz_on(2 * samples.max(1))?;
    Ok(C1Report { deltas: deltas.to_vec(), ratios, halving_factors, lipschitz, lipschitz_refined })
}

/// Central finite differences of `𝒥` over the independent entries of `Σ` against `D𝒥`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientCheck {
    /// `(a, b, predicted, finite_difference)` with `a ≤ b`; off-diagonal entries carry the
    /// factor 2 of the symmetric perturbation.
    pub entries: Vec<(usize, usize, f64, f64)>,
    /// Largest `|fd − predicted|` divided by the largest `|predicted|`.
    pub max_rel_error: f64,
}

/// Each perturbed `Σ ± δ(E_ab + E_ba)` re-solves the ridge problem.
pub fn gradient_check(s: &SampleSet, m: &MetricPoint, k: &RadialKernel, lambda: f64, delta: f64) -> Result<GradientCheck> {
    let sol = solve_at(s, m, k, lambda)?;
    let dj = first_variation(s, &sol, m, k)?;
    let sigma = m.sigma();
    let d = m.dim();
    let mut entries = Vec::new();
    for a in 0..d {
        for b in a..d {
            let mut e = DMatrix::zeros(d, d);
            e[(a, b)] = 1.0;
            e[(b, a)] = 1.0;
            if a == b {
                e[(a, a)] = 1.0;
            }
            let plus = crate::regression::loss_at_form(s, &(&sigma + &e * delta), k, lambda)?;
            let minus = crate::regression::loss_at_form(s, &(&sigma - &e * delta), k, lambda)?;
            let fd = (plus - minus) / (2.0 * delta);
            let pred = if a == b { dj.value()[(a, a)] } else { 2.0 * dj.value()[(a, b)] };
            entries.push((a, b, pred, fd));
        }
    }
    let scale = entries.iter().map(|e| e.2.abs()).fold(0.0, f64::max);
    let err = entries.iter().map(|e| (e.3 - e.2).abs()).fold(0.0, f64::max);
    let max_rel_error = if scale > 0.0 { err / scale } else { err };
    Ok(GradientCheck { entries, max_rel_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_rates_vanish_on_boundary() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0]));
        let dj = CotangentTensor::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -1.0])).unwrap();
        let r = eigen_rhs(&sigma, &dj);
        assert_eq!(r.rates[0], 0.0);
        assert!((r.rates[1] - 2.0).abs() < 1e-14);
        assert!(r.reliable);
    }

    #[test]
    fn partial_trace_full_space() {
        let m = MetricPoint::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 0.8])).unwrap();
        let dj = CotangentTensor::new(DMatrix::from_row_slice(2, 2, &[0.4, -0.1, -0.1, 0.2])).unwrap();
        let full = [DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        let rate = partial_trace_rate(&m, &dj, &full).unwrap();
        // d/dt Tr Σ from the ODE right-hand side −½(ΣD + DΣ)
        let grad = crate::variation::riemannian_gradient(&m, &dj);
        assert!((rate + grad.value().trace()).abs() < 1e-14);
        assert_eq!(partial_trace_rate(&m, &CotangentTensor::zeros(2), &full).unwrap(), 0.0);
        let bad = [DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![1.0, 0.0])];
        assert!(partial_trace_rate(&m, &dj, &bad).is_err());
    }

    #[test]
    fn one_point_spectral_integral() {
        // Two coincident samples act as one point with coefficient c₀ + c₁.
        let s = SampleSet::from_real(DMatrix::from_row_slice(2, 1, &[0.3, 0.3]), &[1.0, 1.0], None).unwrap();
        let k = RadialKernel::gaussian(0.8, 1).unwrap();
        let c = DVector::from_vec(vec![Complex64::new(0.25, 0.1), Complex64::new(0.25, -0.3)]);
        let w = DVector::from_vec(vec![1.0]);
        let val = spectral_integral(&s, &c, &MetricPoint::identity(1), &k, &w).unwrap();
        let total = (c[0] + c[1]).norm_sqr();
        assert!((val - total * 0.8 / (2.0 * PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn spectral_integral_needs_gaussian() {
        let s = SampleSet::from_real(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), &[1.0, 0.0], None).unwrap();
        let k = RadialKernel::sobolev(2.0, 1).unwrap();
        let c = DVector::from_element(2, Complex64::new(1.0, 0.0));
        let w = DVector::from_vec(vec![1.0]);
        assert!(matches!(spectral_integral(&s, &c, &MetricPoint::identity(1), &k, &w), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gap_zero_at_zero_smoothing() {
        let s = SampleSet::from_real(DMatrix::from_row_slice(3, 1, &[0.0, 1.0, -0.5]), &[1.0, 0.0, 0.3], None).unwrap();
        let k = RadialKernel::gaussian(1.0, 1).unwrap();
        let m = MetricPoint::identity(1);
        let c = solve_at(&s, &m, &k, 0.1).unwrap().c;
        let w = DVector::from_vec(vec![1.0]);
        assert_eq!(smoothing_gap_bound(&s, &c, &m, &k, 0.1, &w, 0.0, 1.0).unwrap(), 0.0);
        let mut prev = 0.0;
        for i in 1..10 {
            let g = smoothing_gap_bound(&s, &c, &m, &k, 0.1, &w, i as f64 / 10.0, 1.0).unwrap();
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn smoothed_factor_scales_monitor() {
        let m = MetricPoint::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.2, 1.5])).unwrap();
        let w = DVector::from_vec(vec![0.6, 0.8]);
        let ms = smoothed_factor(&m, &w, 0.36).unwrap();
        assert!((monitor_norm(&ms, &w) - 0.64 * monitor_norm(&m, &w)).abs() < 1e-14);
    }

    #[test]
    fn slope_of_line() {
        assert!((linear_slope(&[0.0, 1.0, 2.0], &[1.0, -1.0, -3.0]) + 2.0).abs() < 1e-15);
    }
}
