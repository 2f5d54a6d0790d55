//! Estimation of compound Wishart (CW) and signal-plus-noise (SPN) random
//! matrix models from a single observed spectrum.
//!
//! The deterministic equivalent of each model is available only through its
//! Cauchy transform, which is computed by damped fixed-point iteration (CW and
//! the semicircular block of SPN) and by operator-valued subordination on the
//! two-block diagonal algebra `D2 ≅ C²` (SPN). Parameters are fitted by
//! projected online gradient descent with Adam on the Cauchy noise loss
//! `ℓ_γ(x, μ) = −log(−Im G_μ(x + iγ) / π)`, with exact gradients from implicit
//! differentiation of the fixed-point maps.
//!
//! Module map:
//! - [`spectra`]: sampling the random matrix models, eigenvalues, and
//!   empirical-measure oracles.
//! - [`fde`]: forward Cauchy transforms of the deterministic equivalents.
//! - [`grad`]: parameter gradients of those transforms.
//! - [`loss`]: the Cauchy noise loss, cross-entropy estimators, L¹ penalty.
//! - [`optim`]: Adam, projection, and the online gradient descent driver.
//! - [`recover`]: rank recovery, validation losses, determination gap.

pub mod error;
pub mod fde;
pub mod grad;
pub mod loss;
pub mod model;
pub mod optim;
pub mod recover;
pub mod rng;
pub mod spectra;

pub use error::{Error, Result};
pub use fde::{D2Point, FdeEvaluator, FixedPointConfig, TransformResult};
pub use grad::{ComplexJacobian2, GradientVector};
pub use model::{CwParams, Field, ModelKind, SpnParams, Theta};
pub use num_complex::Complex64;
pub use spectra::SpectrumSample;
