//! Rotationally invariant kernels `K(x) = 𝒦(|x|²)` and their profiles.
//!
//! Two families are supported:
//!
//! * Gaussian: `𝒦(r) = e^{−βr}`, Fourier weight `(π/β)^{d/2} e^{−π²|ω|²/β}`.
//! * Sobolev: `𝒦(r) = Γ(γ)⁻¹ ∫₀^∞ y^{γ−1} e^{−y} e^{−r/4y} dy`, evaluated through the
//!   identity `∫₀^∞ y^{ν−1} e^{−y−a/y} dy = 2 a^{ν/2} K_ν(2√a)`, i.e.
//!   `𝒦(r) = 2^{1−γ}/Γ(γ) · z^γ K_γ(z)` with `z = √r`. Derivatives follow from
//!   `d/dz [z^ν K_ν(z)] = −z^ν K_{ν−1}(z)`.
//!
//! Both profiles satisfy `𝒦(0) = 1` and are decreasing.

mod bessel;

pub use bessel::bessel_k;

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelFamily {
    Gaussian { beta: f64 },
    Sobolev { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialKernel {
    family: KernelFamily,
    dim: usize,
}

impl RadialKernel {
    pub fn gaussian(beta: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Gaussian { beta }, dim)
    }

    pub fn sobolev(gamma: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Sobolev { gamma }, dim)
    }

    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("kernel dimension must be positive".into()));
        }
        match family {
            KernelFamily::Gaussian { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::Domain(format!("Gaussian kernel needs beta > 0, got {beta}")))
            }
            KernelFamily::Sobolev { gamma } if !(gamma > 1.0 && gamma.is_finite()) => Err(Error::Domain(format!(
                "Sobolev kernel needs gamma > 1 for a bounded profile derivative, got {gamma}"
            ))),
            _ => Ok(Self { family, dim }),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.family, KernelFamily::Gaussian { .. })
    }

    /// Gaussian width β, if this is a Gaussian kernel.
    pub fn beta(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Gaussian { beta } => Some(beta),
            KernelFamily::Sobolev { .. } => None,
        }
    }

    /// `𝒦(r)`.
    pub fn profile_value(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        Ok(self.value_at(r))
    }

    /// `𝒦′(r)`.
    pub fn profile_d1(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        Ok(self.d1_at(r))
    }

    /// `𝒦″(r)`. For Sobolev kernels with γ ≤ 2 the second derivative is unbounded at 0.
    pub fn profile_d2(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        match self.family {
            KernelFamily::Gaussian { beta } => Ok(beta * beta * (-beta * r).exp()),
            KernelFamily::Sobolev { gamma } => {
                if r == 0.0 && gamma <= 2.0 {
                    return Err(Error::Domain(format!(
                        "Sobolev profile with gamma = {gamma} <= 2 has unbounded second derivative at r = 0"
                    )));
                }
                let z = r.sqrt();
                Ok(2f64.powf(-gamma - 1.0) / gamma_fn(gamma) * pow_bessel(gamma - 2.0, z))
            }
        }
    }

    /// Fourier weight `k_V` as a function of `|ω|²`; normalized so `∫ k_V dω = 𝒦(0) = 1`.
    pub fn fourier_weight(&self, omega_sq: f64) -> Result<f64> {
        if !(omega_sq >= 0.0 && omega_sq.is_finite()) {
            return Err(Error::Domain(format!("|ω|² must be finite and nonnegative, got {omega_sq}")));
        }
        let half_d = self.dim as f64 / 2.0;
        Ok(match self.family {
            KernelFamily::Gaussian { beta } => (PI / beta).powf(half_d) * (-PI * PI * omega_sq / beta).exp(),
            KernelFamily::Sobolev { gamma } => {
                let log_norm = half_d * (4.0 * PI).ln() + ln_gamma(gamma + half_d) - ln_gamma(gamma);
                (log_norm - (gamma + half_d) * (1.0 + 4.0 * PI * PI * omega_sq).ln()).exp()
            }
        })
    }

    /// Second directional derivative `∂²K/∂u²` of `K(x) = e^{−β|x|²}` at `z`, for a unit direction `u`.
    pub fn second_partial_along(&self, z: &DVector<f64>, dir: &DVector<f64>) -> Result<f64> {
        let beta = self.beta().ok_or_else(|| {
            Error::Unsupported("directional second partials are only available for the Gaussian kernel".into())
        })?;
        if z.len() != dir.len() {
            return Err(Error::Input(format!("dimension mismatch: z has {}, dir has {}", z.len(), dir.len())));
        }
        if (dir.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Input(format!("direction must be a unit vector, |dir| = {}", dir.norm())));
        }
        Ok(gaussian_second_partial(beta, z.dot(dir), z.norm_squared()))
    }

    /// `sup_r |𝒦′(r)|`, attained at r = 0 for both families.
    pub fn sup_abs_d1(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian { beta } => beta,
            // Γ(γ−1) / (4Γ(γ)) = 1 / (4(γ−1))
            KernelFamily::Sobolev { gamma } => 1.0 / (4.0 * (gamma - 1.0)),
        }
    }

    /// Profile value without argument checks. The Gaussian profile is continued to r < 0
    /// (needed when an indefinite form is evaluated by the Euclidean comparison flow).
    pub(crate) fn value_at(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian { beta } => (-beta * r).exp(),
            KernelFamily::Sobolev { gamma } => {
                if r <= 0.0 {
                    return if r == 0.0 { 1.0 } else { f64::NAN };
                }
                2f64.powf(1.0 - gamma) / gamma_fn(gamma) * pow_bessel(gamma, r.sqrt())
            }
        }
    }

    pub(crate) fn d1_at(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian { beta } => -beta * (-beta * r).exp(),
            KernelFamily::Sobolev { gamma } => {
                if r < 0.0 {
                    return f64::NAN;
                }
                -(2f64.powf(-gamma)) / gamma_fn(gamma) * pow_bessel(gamma - 1.0, r.sqrt())
            }
        }
    }
}

/// `∂²_u e^{−β|z|²}` given `⟨u, z⟩` and `|z|²`.
pub(crate) fn gaussian_second_partial(beta: f64, along: f64, norm_sq: f64) -> f64 {
    (-2.0 * beta + 4.0 * beta * beta * along * along) * (-beta * norm_sq).exp()
}

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("profile argument must be finite and nonnegative, got {r}")))
    }
}

fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}

/// `z^ν K_{|ν|}(z)` for z ≥ 0, using the small-z limit `2^{ν−1}Γ(ν)` when ν > 0 and
/// `z^{−ν}` would overflow.
fn pow_bessel(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu > 0.0 { 2f64.powf(nu - 1.0) * gamma_fn(nu) } else { f64::INFINITY };
    }
    if nu > 0.0 && nu * (-z.ln()) > 600.0 {
        return 2f64.powf(nu - 1.0) * gamma_fn(nu);
    }
    let k = bessel_k(nu.abs(), z);
    if k == 0.0 {
        return 0.0;
    }
    z.powf(nu) * k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gaussian_profile_values() {
        let k = RadialKernel::gaussian(1.0, 2).unwrap();
        assert_eq!(k.profile_value(0.0).unwrap(), 1.0);
        assert_eq!(k.profile_d1(0.0).unwrap(), -1.0);
        assert_eq!(k.profile_d2(0.0).unwrap(), 1.0);
        let k2 = RadialKernel::gaussian(2.0, 2).unwrap();
        assert_eq!(k2.profile_d2(0.0).unwrap(), 4.0);
    }

    #[test]
    fn sobolev_values_at_origin() {
        let k = RadialKernel::sobolev(2.0, 3).unwrap();
        assert_eq!(k.profile_value(0.0).unwrap(), 1.0);
        assert!((k.profile_d1(0.0).unwrap() + 0.25).abs() < 1e-14);
        let k3 = RadialKernel::sobolev(3.0, 3).unwrap();
        assert!((k3.profile_d2(0.0).unwrap() - 1.0 / 32.0).abs() < 1e-14);
        assert!(matches!(k.profile_d2(0.0), Err(Error::Domain(_))));
        assert!(k.profile_d2(0.5).unwrap() > 0.0);
    }

    #[test]
    fn sobolev_half_integer_closed_form() {
        // γ = 3/2: z^{3/2} K_{3/2}(z) = √(π/2) (1 + z) e^{−z}, so 𝒦(r) = (1 + √r) e^{−√r}.
        let k = RadialKernel::sobolev(1.5, 1).unwrap();
        for &r in &[1e-12f64, 1e-4, 0.3, 1.0, 7.0, 100.0] {
            let z: f64 = r.sqrt();
            let exact = (1.0 + z) * (-z).exp();
            assert!(rel(k.profile_value(r).unwrap(), exact) < 1e-13, "r = {r}");
            // 𝒦′(r) = −e^{−√r}/2
            assert!(rel(k.profile_d1(r).unwrap(), -0.5 * (-z).exp()) < 1e-13, "r = {r}");
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(RadialKernel::gaussian(0.0, 1).is_err());
        assert!(RadialKernel::gaussian(-1.0, 1).is_err());
        assert!(RadialKernel::sobolev(0.5, 1).is_err());
        assert!(RadialKernel::sobolev(1.0, 1).is_err());
        assert!(RadialKernel::gaussian(1.0, 0).is_err());
        let k = RadialKernel::gaussian(1.0, 1).unwrap();
        assert!(k.profile_value(-1.0).is_err());
        assert!(k.profile_value(f64::NAN).is_err());
        assert!(k.profile_d1(f64::INFINITY).is_err());
        assert!(k.fourier_weight(-0.1).is_err());
    }

    #[test]
    fn gaussian_fourier_weight_at_zero() {
        let beta = PI * PI;
        let k = RadialKernel::gaussian(beta, 2).unwrap();
        assert!((k.fourier_weight(0.0).unwrap() - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn second_partial_examples() {
        let k = RadialKernel::gaussian(1.0, 2).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let zero = DVector::zeros(2);
        assert_eq!(k.second_partial_along(&zero, &e1).unwrap(), -2.0);
        let v = k.second_partial_along(&e1, &e1).unwrap();
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let s = RadialKernel::sobolev(2.0, 2).unwrap();
        assert!(matches!(s.second_partial_along(&zero, &e1), Err(Error::Unsupported(_))));
        assert!(k.second_partial_along(&zero, &DVector::from_vec(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn sup_derivative_matches_origin() {
        for k in [RadialKernel::gaussian(0.7, 1).unwrap(), RadialKernel::sobolev(2.5, 1).unwrap()] {
            assert!((k.sup_abs_d1() - k.profile_d1(0.0).unwrap().abs()).abs() < 1e-13);
        }
    }

    #[test]
    fn profiles_monotone_decreasing() {
        for k in [
            RadialKernel::gaussian(0.5, 1).unwrap(),
            RadialKernel::sobolev(1.5, 1).unwrap(),
            RadialKernel::sobolev(2.0, 1).unwrap(),
            RadialKernel::sobolev(3.0, 1).unwrap(),
        ] {
            let mut prev = k.profile_value(0.0).unwrap();
            for i in 1..2000 {
                let r = i as f64 * 0.05;
                let v = k.profile_value(r).unwrap();
                assert!(v <= prev && v > 0.0, "{k:?} at r = {r}");
                assert!(k.profile_d1(r).unwrap() <= 0.0);
                prev = v;
            }
        }
    }

    #[test]
    fn r_times_derivative_bounded() {
        for k in [RadialKernel::gaussian(0.5, 1).unwrap(), RadialKernel::sobolev(1.5, 1).unwrap()] {
            assert!((1e-10 * k.profile_d1(1e-10).unwrap()).abs() < 1e-9);
            let max = (0..10_000)
                .map(|i| {
                    let r = i as f64 * 0.1;
                    (r * k.profile_d1(r).unwrap()).abs()
                })
                .fold(0.0, f64::max);
            assert!(max.is_finite() && max < 10.0);
        }
    }
}
