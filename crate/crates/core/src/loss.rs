//! Cauchy noise loss, its gradient, Cauchy cross-entropy estimators, and the
//! L¹ penalty.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fde::{check_gamma, FdeEvaluator, FixedPointConfig};
use crate::grad::GradientVector;
use crate::model::Theta;
use crate::rng::{stream_rng, Stream};
use crate::spectra::SpectrumSample;

/// One perturbed eigenvalue `x = λ_j + t` fed to the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub x: f64,
    pub j: usize,
    pub t: f64,
}

impl LossPoint {
    /// Draws a uniform index and a Cauchy perturbation of scale `gamma`.
    pub fn draw<R: Rng>(sample: &SpectrumSample, gamma: f64, rng: &mut R) -> Self {
        let j = rng.random_range(0..sample.d());
        let t = draw_cauchy(gamma, rng);
        LossPoint {
            x: sample.eigenvalues()[j] + t,
            j,
            t,
        }
    }
}

/// Value of a cross-entropy estimate with its uncertainty: the Monte Carlo
/// standard error, or the tail-truncation bound of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CceEstimate {
    pub value: f64,
    pub standard_error: f64,
}

/// Quantile function of the Cauchy distribution with scale `gamma`.
pub fn cauchy_quantile(u: f64, gamma: f64) -> f64 {
    gamma * (PI * (u - 0.5)).tan()
}

/// A Cauchy(0, γ) draw by inversion of a uniform on the open interval.
pub fn draw_cauchy<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    cauchy_quantile(u, gamma)
}

/// `ℓ_γ(x, θ) = −log(−Im G(x + iγ)/π)`.
pub fn cnl_value(x: f64, theta: &Theta, gamma: f64, cfg: &FixedPointConfig) -> Result<f64> {
    cnl_value_with(&mut FdeEvaluator::cold(*cfg), x, theta, gamma)
}

pub fn cnl_value_with(eval: &mut FdeEvaluator, x: f64, theta: &Theta, gamma: f64) -> Result<f64> {
    Ok(-eval.gamma_slice(theta, x, gamma)?.ln())
}

/// `∇_θ ℓ_γ(x, θ) = −Im ∇_θ G / Im G`.
pub fn cnl_grad(x: f64, theta: &Theta, gamma: f64, cfg: &FixedPointConfig) -> Result<Vec<f64>> {
    Ok(cnl_value_and_grad(&mut FdeEvaluator::cold(*cfg), x, theta, gamma)?.1)
}

/// Loss and gradient from one forward solve.
pub fn cnl_value_and_grad(
    eval: &mut FdeEvaluator,
    x: f64,
    theta: &Theta,
    gamma: f64,
) -> Result<(f64, Vec<f64>, usize)> {
    check_gamma(gamma)?;
    let (res, grad) = eval.value_and_grad(Complex64::new(x, gamma), theta)?;
    let value = -(-res.value.im / PI).ln();
    Ok((value, loss_gradient(res.value, &grad), res.iterations))
}

/// Converts a transform gradient into the loss gradient.
pub fn loss_gradient(g: Complex64, grad: &GradientVector) -> Vec<f64> {
    grad.partials.iter().map(|dg| -dg.im / g.im).collect()
}

/// Monte Carlo estimate of the empirical Cauchy cross-entropy
/// `E[ℓ_γ(λ_J + T, θ)]` with `J` uniform and `T ~ Cauchy(0, γ)`.
pub fn ecce_monte_carlo(
    sample: &SpectrumSample,
    theta: &Theta,
    gamma: f64,
    n_draws: usize,
    seed: u64,
    cfg: &FixedPointConfig,
) -> Result<CceEstimate> {
    check_gamma(gamma)?;
    if n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, Stream::MonteCarlo);
    let mut eval = FdeEvaluator::new(*cfg);
    let (mut mean, mut m2) = (0.0, 0.0);
    for n in 1..=n_draws {
        let point = LossPoint::draw(sample, gamma, &mut rng);
        let value = cnl_value_with(&mut eval, point.x, theta, gamma)?;
        let delta = value - mean;
        mean += delta / n as f64;
        m2 += delta * (value - mean);
    }
    let standard_error = if n_draws > 1 {
        (m2 / (n_draws - 1) as f64 / n_draws as f64).sqrt()
    } else {
        0.0
    };
    Ok(CceEstimate {
        value: mean,
        standard_error,
    })
}

/// Uniform grid on `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureGrid {
    pub half_width: f64,
    pub points: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid {
            half_width: 50.0,
            points: 2001,
        }
    }
}

impl QuadratureGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) || self.points < 2 {
            return Err(Error::InvalidArgument(format!(
                "quadrature grid needs half_width > 0 and points >= 2, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.step();
        (0..self.points).map(move |i| -self.half_width + step * i as f64)
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    /// Asymptotic size of the cross-entropy mass outside the grid when the
    /// reference density has Cauchy tails `γ/(π x²)` and `ℓ ~ 2 log|x| +
    /// log(π/γ)`: `(2γ/π)(2(log L + 1) + log(π/γ))/L`.
    pub fn truncation_bound(&self, gamma: f64) -> f64 {
        let l = self.half_width;
        2.0 * gamma / PI * (2.0 * (l.ln() + 1.0) + (PI / gamma).ln().abs()) / l
    }
}

/// Trapezoid estimate of `∫ ℓ_γ(x, θ) ρ(x) dx` for a reference density `ρ`
/// (a smoothed empirical spectrum or another γ-slice).
pub fn ecce_quadrature<F>(
    reference: F,
    theta: &Theta,
    gamma: f64,
    grid: &QuadratureGrid,
    cfg: &FixedPointConfig,
) -> Result<CceEstimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    ecce_quadrature_with(&mut FdeEvaluator::new(*cfg), reference, theta, gamma, grid)
}

pub fn ecce_quadrature_with<F>(
    eval: &mut FdeEvaluator,
    mut reference: F,
    theta: &Theta,
    gamma: f64,
    grid: &QuadratureGrid,
) -> Result<CceEstimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_gamma(gamma)?;
    grid.validate()?;
    let mut total = 0.0;
    for (i, x) in grid.nodes().enumerate() {
        let rho = reference(x)?;
        if rho == 0.0 {
            continue;
        }
        total += grid.weight(i) * rho * cnl_value_with(eval, x, theta, gamma)?;
    }
    Ok(CceEstimate {
        value: total,
        standard_error: grid.truncation_bound(gamma),
    })
}

/// `ξ ‖a‖₁`.
pub fn l1_penalty(a: &[f64], xi: f64) -> f64 {
    xi * a.iter().map(|x| x.abs()).sum::<f64>()
}

/// `ξ sign(a_i)` with `sign(0) = 0`.
pub fn l1_subgrad(a: &[f64], xi: f64) -> Vec<f64> {
    a.iter()
        .map(|&x| {
            if x > 0.0 {
                xi
            } else if x < 0.0 {
                -xi
            } else {
                0.0
            }
        })
        .collect()
}
