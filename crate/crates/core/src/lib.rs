//! Evidential physics-informed neural networks for inverse PDE problems.
//!
//! The crate is `no_std` + `alloc`. It contains the numerical pieces only:
//!
//! - [`tensor`]: dense row-major matrices backed by `matrixmultiply`.
//! - [`autodiff`]: a reverse-mode tape over matrix nodes, plus [`autodiff::Jet`]s
//!   that carry first and diagonal second input derivatives as tape quantities.
//! - [`model`]: tanh MLP with a normal-inverse-gamma head and the trainable
//!   posterior over the unknown PDE coefficient.
//! - [`losses`]: evidential NLL, KL-weighted regularizer, marginalized residual.
//! - [`problems`]: the 1D nonlinear Poisson and 2D diffusion-reaction benchmarks.
//! - [`training`]: Adam, the evidential trainer and the deep-ensemble baseline.
//! - [`metrics`]: coverage, Spearman correlations, boundary error.
//!
//! File formats, plotting and the command line live in the `epinn` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod problems;
pub mod special;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
