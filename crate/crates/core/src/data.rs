//! Empirical samples, moment estimation, whitening and the synthetic noise-plus-signal generator.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

/// `n` samples `(x_i, y_i)` with real `x_i ∈ ℝ^d` (rows of `x`) and complex `y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    x: DMatrix<f64>,
    y: DVector<Complex64>,
    seed: Option<u64>,
}

impl SampleSet {
    pub fn new(x: DMatrix<f64>, y: DVector<Complex64>, seed: Option<u64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::Input(format!("need at least 2 samples, got {}", x.nrows())));
        }
        if x.ncols() == 0 {
            return Err(Error::Input("samples must have at least one coordinate".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::Input(format!("{} inputs but {} labels", x.nrows(), y.len())));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Input("samples contain non-finite entries".into()));
        }
        Ok(Self { x, y, seed })
    }

    pub fn from_real(x: DMatrix<f64>, y: &[f64], seed: Option<u64>) -> Result<Self> {
        let y = DVector::from_iterator(y.len(), y.iter().map(|&v| Complex64::new(v, 0.0)));
        Self::new(x, y, seed)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<Complex64> {
        &self.y
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Same inputs with new labels.
    pub fn with_labels(&self, y: DVector<Complex64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.seed)
    }

    /// Empirical `E|Y|²`.
    pub fn mean_sq_label(&self) -> f64 {
        self.y.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.n() as f64
    }

    /// Empirical `E⟨X, w⟩⁴`.
    pub fn fourth_moment_along(&self, w: &DVector<f64>) -> f64 {
        let proj = &self.x * w;
        proj.iter().map(|p| p.powi(4)).sum::<f64>() / self.n() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y_re".into());
        header.push("y_im".into());
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            row.push(self.y[i].re.to_string());
            row.push(self.y[i].im.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    /// Reads the `x0,...,x{d-1},y_re,y_im` format; the header is validated column by column.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let cols = header.len();
        if cols < 3 {
            return Err(Error::Input(format!("dataset needs at least 3 columns, header has {cols}")));
        }
        let d = cols - 2;
        for (j, name) in header.iter().enumerate() {
            let expected = match j {
                j if j < d => format!("x{j}"),
                j if j == d => "y_re".to_string(),
                _ => "y_im".to_string(),
            };
            if name.trim() != expected {
                return Err(Error::Input(format!("column {j} should be `{expected}`, found `{name}`")));
            }
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != cols {
                return Err(Error::Input(format!("row {} has {} columns, expected {cols}", line + 1, rec.len())));
            }
            let vals = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Input(format!("row {}: {e}", line + 1)))?;
            xs.extend_from_slice(&vals[..d]);
            ys.push(Complex64::new(vals[d], vals[d + 1]));
        }
        let n = ys.len();
        Self::new(DMatrix::from_row_slice(n, d, &xs), DVector::from_vec(ys), None)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }
}

/// How a covariance with eigenvalues below the floor is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceRepair {
    /// Clamp small eigenvalues to the floor and attach a warning.
    #[default]
    Floor,
    /// Fail with [`Error::DegenerateCovariance`].
    Strict,
}

/// Empirical mean, covariance and the symmetric whitening transform `W = cov^{-1/2}`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub whitener: DMatrix<f64>,
    pub unwhitener: DMatrix<f64>,
    pub warnings: Vec<String>,
}

impl Moments {
    /// Image of a direction `v` (original coordinates) in whitened coordinates, normalized to
    /// unit length. This is `v / |v|_V` for the inverse-covariance norm.
    pub fn whitened_direction(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let w = &self.whitener * v;
        let norm = w.norm();
        if !(norm > 0.0) {
            return Err(Error::Input("direction has zero length".into()));
        }
        Ok(w / norm)
    }
}

/// Relative floor on covariance eigenvalues, as a fraction of the mean eigenvalue.
pub const COV_FLOOR_REL: f64 = 1e-10;

pub fn estimate_moments(s: &SampleSet, repair: CovarianceRepair) -> Result<Moments> {
    let n = s.n() as f64;
    let d = s.dim();
    let mean = DVector::from_iterator(d, (0..d).map(|j| s.x.column(j).sum() / n));
    let mut centered = s.x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = crate::linalg::symmetrize(&((centered.transpose() * &centered) / n));
    let (values, vectors) = sym_eigen(&cov);
    let trace: f64 = values.iter().sum();
    let floor = COV_FLOOR_REL * (trace / d as f64).max(f64::MIN_POSITIVE);
    let low: Vec<usize> = (0..d).filter(|&i| values[i] < floor).collect();
    let mut warnings = Vec::new();
    if !low.is_empty() {
        let directions: Vec<Vec<f64>> = low.iter().map(|&i| vectors.column(i).iter().cloned().collect()).collect();
        let eigenvalues: Vec<f64> = low.iter().map(|&i| values[i]).collect();
        match repair {
            CovarianceRepair::Strict => {
                return Err(Error::DegenerateCovariance { floor, eigenvalues, directions });
            }
            CovarianceRepair::Floor => {
                let msg = format!(
                    "covariance eigenvalues {eigenvalues:?} clamped to floor {floor:e} along {directions:?}"
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    let clamped: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    let spectral = |f: &dyn Fn(f64) -> f64| {
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(d, clamped.iter().map(|&v| f(v))));
        crate::linalg::symmetrize(&(&vectors * diag * vectors.transpose()))
    };
    let whitener = spectral(&|v| 1.0 / v.sqrt());
    let unwhitener = spectral(&|v| v.sqrt());
    Ok(Moments { mean, cov, whitener, unwhitener, warnings })
}

/// Rows replaced by `W(x_i − mean)`; labels unchanged.
pub fn whiten(s: &SampleSet, m: &Moments) -> SampleSet {
    let mut x = s.x.clone();
    for mut row in x.row_iter_mut() {
        row -= m.mean.transpose();
    }
    let x = x * m.whitener.transpose();
    SampleSet { x, y: s.y.clone(), seed: s.seed }
}

/// Regression target as a function of the signal coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SignalFn {
    /// `a · s₀`
    Linear { a: f64 },
    /// `sin(freq · s₀)`
    Sine {
        #[serde(default = "one")]
        freq: f64,
    },
    /// `s₀ · s₁`
    Product,
    /// `1` if `s₀ > threshold`, else `0`
    Step {
        #[serde(default)]
        threshold: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl SignalFn {
    fn arity(&self) -> usize {
        match self {
            SignalFn::Product => 2,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SignalFn::Linear { a } => a.is_finite(),
            SignalFn::Sine { freq } => freq.is_finite(),
            SignalFn::Product => true,
            SignalFn::Step { threshold } => threshold.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("signal function parameters must be finite: {self:?}")))
        }
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        match *self {
            SignalFn::Linear { a } => a * s[0],
            SignalFn::Sine { freq } => (freq * s[0]).sin(),
            SignalFn::Product => s[0] * s[1],
            SignalFn::Step { threshold } => {
                if s[0] > threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Law of the signal coordinates (drawn i.i.d.).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalLaw {
    /// Standard Gaussian.
    #[default]
    Gaussian,
    /// Uniform on `[−√3, √3]` (unit variance).
    Uniform,
}

/// Synthetic data `X = (X_W, X_{W'})` with Gaussian noise block `X_W ~ N(0, noise_cov)`
/// independent of the signal block, and `y = signal_fn(X_{W'}) + label noise`.
/// The first `d_noise` coordinates carry no information about `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSignalSpec {
    pub d_noise: usize,
    pub d_signal: usize,
    pub signal_fn: SignalFn,
    pub signal_law: SignalLaw,
    pub noise_cov: DMatrix<f64>,
    pub label_noise_sd: f64,
    pub n: usize,
    pub seed: u64,
}

impl NoiseSignalSpec {
    /// Identity noise covariance, Gaussian signal law, no label noise.
    pub fn standard(d_noise: usize, d_signal: usize, signal_fn: SignalFn, n: usize, seed: u64) -> Self {
        Self {
            d_noise,
            d_signal,
            signal_fn,
            signal_law: SignalLaw::Gaussian,
            noise_cov: DMatrix::identity(d_noise, d_noise),
            label_noise_sd: 0.0,
            n,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.d_noise + self.d_signal
    }
}

pub fn gen_noise_signal(spec: &NoiseSignalSpec) -> Result<SampleSet> {
    spec.signal_fn.validate()?;
    if spec.dim() == 0 {
        return Err(Error::Config("d_noise + d_signal must be at least 1".into()));
    }
    if spec.d_signal < spec.signal_fn.arity() {
        return Err(Error::Config(format!(
            "signal function {:?} needs {} signal coordinates, d_signal = {}",
            spec.signal_fn,
            spec.signal_fn.arity(),
            spec.d_signal
        )));
    }
    if !(spec.label_noise_sd >= 0.0 && spec.label_noise_sd.is_finite()) {
        return Err(Error::Config(format!("label_noise_sd must be >= 0, got {}", spec.label_noise_sd)));
    }
    if spec.noise_cov.shape() != (spec.d_noise, spec.d_noise) {
        return Err(Error::Config(format!(
            "noise_cov must be {0}x{0}, got {1:?}",
            spec.d_noise,
            spec.noise_cov.shape()
        )));
    }
    let chol = if spec.d_noise > 0 {
        Some(
            crate::linalg::symmetrize(&spec.noise_cov)
                .cholesky()
                .ok_or_else(|| Error::Config("noise_cov must be positive definite".into()))?
                .l(),
        )
    } else {
        None
    };
    if spec.n < 2 {
        return Err(Error::Config(format!("n must be at least 2, got {}", spec.n)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let uniform = Uniform::new(-(3f64.sqrt()), 3f64.sqrt()).expect("valid range");
    let d = spec.dim();
    let mut x = DMatrix::zeros(spec.n, d);
    let mut y = DVector::from_element(spec.n, Complex64::new(0.0, 0.0));
    let mut z = DVector::zeros(spec.d_noise);
    let mut signal = vec![0.0; spec.d_signal];
    for i in 0..spec.n {
        for zj in z.iter_mut() {
            *zj = StandardNormal.sample(&mut rng);
        }
        if let Some(l) = &chol {
            let noise = l * &z;
            for j in 0..spec.d_noise {
                x[(i, j)] = noise[j];
            }
        }
        for (j, s) in signal.iter_mut().enumerate() {
            *s = match spec.signal_law {
                SignalLaw::Gaussian => StandardNormal.sample(&mut rng),
                SignalLaw::Uniform => uniform.sample(&mut rng),
            };
            x[(i, spec.d_noise + j)] = *s;
        }
        let eps: f64 = if spec.label_noise_sd > 0.0 {
            spec.label_noise_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        } else {
            0.0
        };
        y[i] = Complex64::new(spec.signal_fn.eval(&signal) + eps, 0.0);
    }
    SampleSet::new(x, y, Some(spec.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]], y: &[f64]) -> SampleSet {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().cloned()).collect();
        SampleSet::from_real(DMatrix::from_row_slice(rows.len(), d, &flat), y, None).unwrap()
    }

    #[test]
    fn moments_of_four_points() {
        let s = set(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]], &[0.0; 4]);
        let m = estimate_moments(&s, CovarianceRepair::Strict).unwrap();
        assert!(m.mean.amax() < 1e-15);
        assert!((&m.cov - DMatrix::from_diagonal_element(2, 2, 0.5)).amax() < 1e-15);
        let sq2 = 2f64.sqrt();
        assert!((&m.whitener - DMatrix::from_diagonal_element(2, 2, sq2)).amax() < 1e-14);
    }

    #[test]
    fn scalar_moments() {
        let s = set(&[&[2.0], &[-2.0]], &[1.0, 1.0]);
        let m = estimate_moments(&s, CovarianceRepair::Strict).unwrap();
        assert!((m.cov[(0, 0)] - 4.0).abs() < 1e-15);
        assert!((m.whitener[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn white_data_has_identity_whitener() {
        // Mean zero, covariance I: (±1, ±1) corners.
        let s = set(&[&[1.0, 1.0], &[1.0, -1.0], &[-1.0, 1.0], &[-1.0, -1.0]], &[0.0; 4]);
        let m = estimate_moments(&s, CovarianceRepair::Strict).unwrap();
        assert!((&m.whitener - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
        let w = whiten(&s, &m);
        assert!((w.x() - s.x()).amax() < 1e-12);
    }

    #[test]
    fn degenerate_covariance() {
        let s = set(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]], &[0.0; 3]);
        match estimate_moments(&s, CovarianceRepair::Strict) {
            Err(Error::DegenerateCovariance { directions, .. }) => {
                assert_eq!(directions.len(), 1);
                let v = &directions[0];
                // null direction ∝ (2, −1)/√5
                assert!((v[0] * 1.0 + v[1] * 2.0).abs() < 1e-12);
            }
            other => panic!("expected degenerate covariance error, got {other:?}"),
        }
        let m = estimate_moments(&s, CovarianceRepair::Floor).unwrap();
        assert_eq!(m.warnings.len(), 1);
        assert!(m.whitener.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn linear_signal_is_exact() {
        let spec = NoiseSignalSpec::standard(1, 1, SignalFn::Linear { a: 1.0 }, 50, 3);
        let s = gen_noise_signal(&spec).unwrap();
        for i in 0..s.n() {
            assert_eq!(s.y()[i].re, s.x()[(i, 1)]);
            assert_eq!(s.y()[i].im, 0.0);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let mut spec = NoiseSignalSpec::standard(2, 2, SignalFn::Product, 100, 42);
        spec.label_noise_sd = 0.1;
        assert_eq!(gen_noise_signal(&spec).unwrap(), gen_noise_signal(&spec).unwrap());
        spec.seed = 43;
        let other = gen_noise_signal(&spec).unwrap();
        spec.seed = 42;
        assert_ne!(gen_noise_signal(&spec).unwrap(), other);
    }

    #[test]
    fn generator_rejects_bad_specs() {
        let spec = NoiseSignalSpec::standard(2, 1, SignalFn::Product, 10, 1);
        assert!(matches!(gen_noise_signal(&spec), Err(Error::Config(_))));
        let spec = NoiseSignalSpec::standard(1, 1, SignalFn::Sine { freq: f64::NAN }, 10, 1);
        assert!(matches!(gen_noise_signal(&spec), Err(Error::Config(_))));
        let mut spec = NoiseSignalSpec::standard(2, 1, SignalFn::Linear { a: 1.0 }, 10, 1);
        spec.noise_cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(gen_noise_signal(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn noise_uncorrelated_with_label() {
        let n = 10_000;
        let spec = NoiseSignalSpec::standard(3, 2, SignalFn::Sine { freq: 1.0 }, n, 11);
        let s = gen_noise_signal(&spec).unwrap();
        let y: Vec<f64> = s.y().iter().map(|v| v.re).collect();
        let ym = y.iter().sum::<f64>() / n as f64;
        let ysd = (y.iter().map(|v| (v - ym).powi(2)).sum::<f64>() / n as f64).sqrt();
        for j in 0..3 {
            let col = s.x().column(j);
            let xm = col.sum() / n as f64;
            let xsd = (col.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / n as f64).sqrt();
            let cov = col.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum::<f64>() / n as f64;
            let corr = cov / (xsd * ysd);
            assert!(corr.abs() <= 3.0 / (n as f64).sqrt(), "noise coordinate {j}: corr {corr}");
        }
    }

    #[test]
    fn csv_header_validated() {
        let bad = "x0,x1,y\n1,2,3\n4,5,6\n";
        assert!(SampleSet::read_csv(bad.as_bytes()).is_err());
        let short_row = "x0,y_re,y_im\n1,2,0\n4,5\n";
        assert!(SampleSet::read_csv(short_row.as_bytes()).is_err());
        let ok = "x0,y_re,y_im\n1,2,0\n4,5,0.5\n";
        let s = SampleSet::read_csv(ok.as_bytes()).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(s.y()[1], Complex64::new(5.0, 0.5));
    }
}
