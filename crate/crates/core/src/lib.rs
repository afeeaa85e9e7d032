//! Riemannian gradient flow of the kernel metric in kernel ridge regression.
//!
//! The loss `𝒥(Σ; λ) = min_f (1/2n)Σ|y_i − f(x_i)|² + (λ/2)‖f‖²` is evaluated for the radial kernel
//! `K(x, x′) = 𝒦(|x − x′|²_Σ)` and decreased by a gradient flow on the cone of PSD matrices `Σ`.

pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod kernel;
pub mod linalg;
pub mod regression;
pub mod variation;

pub use error::{Error, Result};
