//! Adam and projected online gradient descent on the Cauchy noise loss.
//!
//! Each step draws a uniform eigenvalue index and a Cauchy(0, γ) shift from
//! the optimizer stream, evaluates the loss and its gradient with one forward
//! solve, adds the L¹ subgradient when `ξ > 0`, takes an Adam step and clamps
//! the parameters back into the box.

use std::io::Write;

use rand::distr::Uniform;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fde::{FdeEvaluator, FixedPointConfig};
use crate::loss::{cnl_value_and_grad, l1_subgrad, LossPoint};
use crate::model::{project_box, CwParams, ModelKind, SpnParams, Theta};
use crate::recover::validation_loss;
use crate::rng::{stream_rng, Stream};
use crate::spectra::SpectrumSample;

/// Initial noise scale of SPN runs.
pub const SPN_INITIAL_SIGMA: f64 = 0.2;
/// Iterations per unit of `d` when `iterations` is left unset.
pub const ITERATIONS_PER_DIM: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "Adam needs alpha, eps > 0 and beta1, beta2 in [0, 1), got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(dim: usize, config: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            config,
        }
    }

    /// One Adam update of `theta` in place.
    pub fn step(&mut self, grad: &[f64], theta: &mut [f64]) -> Result<()> {
        let dim = self.m.len();
        for len in [grad.len(), theta.len()] {
            if len != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: len });
            }
        }
        let AdamConfig { alpha, beta1, beta2, eps } = self.config;
        self.step += 1;
        let n = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = 1.0 - beta1.powi(n);
        let c2 = 1.0 - beta2.powi(n);
        for i in 0..dim {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Clamp a parameter point into its box `[-M, M]`.
pub fn project(theta: &mut Theta) {
    theta.project();
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gamma: f64,
    /// Number of steps `N`; `None` means `400 d`.
    pub iterations: Option<usize>,
    /// L¹ weight on `v` (CW) or `a` (SPN); `0` disables the penalty.
    pub xi: f64,
    pub seed: u64,
    /// Box bound `M`; `None` keeps the bound carried by the initial point.
    pub bound: Option<f64>,
    pub fixed_point: FixedPointConfig,
    pub adam: AdamConfig,
    /// A trace record is written every `trace_interval` steps and at the last
    /// step.
    pub trace_interval: usize,
    /// Consecutive failed forward solves that abort the run.
    pub failure_budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: 0.1,
            iterations: None,
            xi: 0.0,
            seed: 0,
            bound: None,
            fixed_point: FixedPointConfig::default(),
            adam: AdamConfig::default(),
            trace_interval: 100,
            failure_budget: 10,
        }
    }
}

impl RunConfig {
    pub fn iterations_for(&self, d: usize) -> usize {
        self.iterations.unwrap_or(ITERATIONS_PER_DIM * d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.iterations == Some(0) {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidArgument(format!("xi must be nonnegative, got {}", self.xi)));
        }
        if let Some(m) = self.bound {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidArgument(format!("bound must be positive, got {m}")));
            }
        }
        if self.trace_interval == 0 || self.failure_budget == 0 {
            return Err(Error::InvalidArgument(
                "trace_interval and failure_budget must be >= 1".into(),
            ));
        }
        self.fixed_point.validate()?;
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Steps completed (1-based).
    pub iteration: usize,
    /// Unpenalized loss at this step's draw; `NaN` for a skipped step.
    pub loss_sample: f64,
    pub validation_loss: Option<f64>,
    /// Inner fixed-point map evaluations summed over steps `1..=iteration`.
    pub inner_iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub initial_validation: Option<f64>,
    pub steps: usize,
    pub skipped_steps: usize,
    pub inner_iterations: u64,
}

impl RunTrace {
    /// Inner map evaluations per completed (non-skipped) step.
    pub fn mean_inner_iterations(&self) -> f64 {
        let done = self.steps - self.skipped_steps;
        if done == 0 {
            0.0
        } else {
            self.inner_iterations as f64 / done as f64
        }
    }

    pub fn final_validation(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.validation_loss)
    }

    /// CSV with columns `iteration,loss_sample,validation_loss,inner_iterations`;
    /// each comment line is prefixed with `# `.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "iteration,loss_sample,validation_loss,inner_iterations")?;
        for r in &self.records {
            let validation = r.validation_loss.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{}",
                r.iteration, r.loss_sample, validation, r.inner_iterations
            )?;
        }
        Ok(())
    }
}

/// Initialization of the SPN signal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpnInit {
    /// `a ← λ` (sample eigenvalues), clamped into the box.
    #[default]
    Eigenvalues,
    /// `a ← √λ`, clamped into the box.
    SqrtEigenvalues,
}

/// Starting point of a run.
///
/// CW: `v` uniform on `[-1/√p, 1/√p]^p` from the init stream of `seed`.
/// SPN: `a` from the sample eigenvalues per `spn_init`, `σ = 0.2`.
pub fn initial_theta(
    kind: ModelKind,
    sample: &SpectrumSample,
    bound: f64,
    seed: u64,
    spn_init: SpnInit,
) -> Result<Theta> {
    let (p, d) = (sample.p(), sample.d());
    match kind {
        ModelKind::Cw => {
            let r = 1.0 / (p as f64).sqrt();
            let dist = Uniform::new_inclusive(-r, r).expect("valid range");
            let mut rng = stream_rng(seed, Stream::Init);
            let mut v: Vec<f64> = (0..p).map(|_| rng.sample(dist)).collect();
            project_box(&mut v, bound);
            Ok(Theta::Cw(CwParams::new(v, d, bound)?))
        }
        ModelKind::Spn => {
            let mut a: Vec<f64> = match spn_init {
                SpnInit::Eigenvalues => sample.eigenvalues().to_vec(),
                SpnInit::SqrtEigenvalues => {
                    sample.eigenvalues().iter().map(|l| l.max(0.0).sqrt()).collect()
                }
            };
            project_box(&mut a, bound);
            let sigma = SPN_INITIAL_SIGMA.clamp(-bound, bound);
            Ok(Theta::Spn(SpnParams::new(a, sigma, p, bound)?))
        }
    }
}

fn penalized_coordinates(theta: &Theta) -> usize {
    match theta {
        Theta::Cw(c) => c.v.len(),
        Theta::Spn(s) => s.a.len(),
    }
}

/// Runs exactly `N` steps of projected online gradient descent from `theta0`.
///
/// A step whose forward solve fails numerically is skipped (no update) and
/// counted; `failure_budget` consecutive failures abort the run. When
/// `ground_truth` is given, every trace record carries the validation loss.
pub fn run_ogd(
    sample: &SpectrumSample,
    theta0: &Theta,
    cfg: &RunConfig,
    ground_truth: Option<&Theta>,
) -> Result<(Theta, RunTrace)> {
    cfg.validate()?;
    let mut theta = theta0.clone();
    if let Some(m) = cfg.bound {
        match &mut theta {
            Theta::Cw(c) => c.bound = m,
            Theta::Spn(s) => s.bound = m,
        }
    }
    theta.validate()?;
    if theta.d() != sample.d() || theta.p() != sample.p() {
        return Err(Error::InvalidArgument(format!(
            "parameter shape (p = {}, d = {}) does not match sample (p = {}, d = {})",
            theta.p(),
            theta.d(),
            sample.p(),
            sample.d()
        )));
    }
    if let Some(truth) = ground_truth {
        if truth.kind() != theta.kind() {
            return Err(Error::InvalidArgument("ground truth is a different model".into()));
        }
    }
    let validate = |t: &Theta| ground_truth.map(|truth| validation_loss(t, truth)).transpose();

    let n_steps = cfg.iterations_for(sample.d());
    let mut rng = stream_rng(cfg.seed, Stream::Optimizer);
    let mut eval = FdeEvaluator::new(cfg.fixed_point);
    let mut adam = AdamState::new(theta.dim(), cfg.adam);
    let mut flat = theta.to_vec();
    let n_pen = penalized_coordinates(&theta);
    let mut trace = RunTrace {
        initial_validation: validate(&theta)?,
        ..RunTrace::default()
    };
    let mut consecutive = 0usize;

    for n in 1..=n_steps {
        let point = LossPoint::draw(sample, cfg.gamma, &mut rng);
        let loss_sample = match cnl_value_and_grad(&mut eval, point.x, &theta, cfg.gamma) {
            Ok((value, mut grad, inner)) => {
                consecutive = 0;
                trace.inner_iterations += inner as u64;
                if cfg.xi > 0.0 {
                    for (g, s) in grad.iter_mut().zip(l1_subgrad(&flat[..n_pen], cfg.xi)) {
                        *g += s;
                    }
                }
                adam.step(&grad, &mut flat)?;
                theta.set_from_slice(&flat)?;
                theta.project();
                flat = theta.to_vec();
                value
            }
            Err(e) if e.is_numerical() => {
                consecutive += 1;
                trace.skipped_steps += 1;
                if consecutive >= cfg.failure_budget {
                    return Err(Error::RunAborted {
                        iteration: n,
                        failures: consecutive,
                        last: Box::new(e),
                    });
                }
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        trace.steps = n;
        if n % cfg.trace_interval == 0 || n == n_steps {
            trace.records.push(TraceRecord {
                iteration: n,
                loss_sample,
                validation_loss: validate(&theta)?,
                inner_iterations: trace.inner_iterations,
            });
        }
    }
    Ok((theta, trace))
}
