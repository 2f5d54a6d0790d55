//! Model parameters and their bounded parameter spaces.

use rand::distr::Uniform;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default box bound for CW parameters.
pub const CW_DEFAULT_BOUND: f64 = 1.0;
/// Default box bound for SPN parameters.
pub const SPN_DEFAULT_BOUND: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cw,
    Spn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cw => "cw",
            ModelKind::Spn => "spn",
        }
    }

    pub fn default_bound(self) -> f64 {
        match self {
            ModelKind::Cw => CW_DEFAULT_BOUND,
            ModelKind::Spn => SPN_DEFAULT_BOUND,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cw" => Ok(ModelKind::Cw),
            "spn" => Ok(ModelKind::Spn),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

/// Scalar field of the Ginibre entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    #[default]
    Real,
    Complex,
}

/// Compound Wishart parameters: `W = Z* diag(v) Z` with `Z` a `p × d` Ginibre
/// matrix, so `p = v.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwParams {
    pub v: Vec<f64>,
    pub d: usize,
    pub bound: f64,
}

impl CwParams {
    pub fn new(v: Vec<f64>, d: usize, bound: f64) -> Result<Self> {
        let params = CwParams { v, d, bound };
        params.validate()?;
        Ok(params)
    }

    pub fn p(&self) -> usize {
        self.v.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.v.is_empty() || self.d == 0 {
            return Err(Error::InvalidArgument("CW model needs p, d >= 1".into()));
        }
        check_bound(self.bound)?;
        check_box("v", &self.v, self.bound)
    }
}

/// Signal-plus-noise parameters: `W = (A + σZ)*(A + σZ)` with `A` the
/// `p × d` rectangular diagonal matrix carrying `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpnParams {
    pub a: Vec<f64>,
    pub sigma: f64,
    pub p: usize,
    pub bound: f64,
}

impl SpnParams {
    pub fn new(a: Vec<f64>, sigma: f64, p: usize, bound: f64) -> Result<Self> {
        let params = SpnParams { a, sigma, p, bound };
        params.validate()?;
        Ok(params)
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(Error::InvalidArgument("SPN model needs d >= 1".into()));
        }
        if self.p < self.a.len() {
            return Err(Error::InvalidArgument(format!(
                "SPN model needs p >= d (p = {}, d = {})",
                self.p,
                self.a.len()
            )));
        }
        check_bound(self.bound)?;
        check_box("a", &self.a, self.bound)?;
        check_box("sigma", &[self.sigma], self.bound)
    }
}

fn check_bound(bound: f64) -> Result<()> {
    if bound > 0.0 && bound.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("bound must be positive, got {bound}")))
    }
}

fn check_box(name: &str, values: &[f64], bound: f64) -> Result<()> {
    for (i, &x) in values.iter().enumerate() {
        if !x.is_finite() || x.abs() > bound {
            return Err(Error::InvalidArgument(format!(
                "{name}[{i}] = {x} lies outside [-{bound}, {bound}]"
            )));
        }
    }
    Ok(())
}

/// A point of either parameter space.
///
/// The flat layout used by the optimizer is `v` for CW and `(a_1, …, a_d, σ)`
/// for SPN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Theta {
    Cw(CwParams),
    Spn(SpnParams),
}

impl Theta {
    pub fn kind(&self) -> ModelKind {
        match self {
            Theta::Cw(_) => ModelKind::Cw,
            Theta::Spn(_) => ModelKind::Spn,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Theta::Cw(c) => c.p(),
            Theta::Spn(s) => s.p,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Theta::Cw(c) => c.d,
            Theta::Spn(s) => s.d(),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Theta::Cw(c) => c.bound,
            Theta::Spn(s) => s.bound,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Theta::Cw(c) => c.v.len(),
            Theta::Spn(s) => s.a.len() + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Theta::Cw(c) => c.validate(),
            Theta::Spn(s) => s.validate(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Theta::Cw(c) => c.v.clone(),
            Theta::Spn(s) => {
                let mut out = s.a.clone();
                out.push(s.sigma);
                out
            }
        }
    }

    /// Overwrite the parameters from the flat layout.
    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: values.len(),
            });
        }
        match self {
            Theta::Cw(c) => c.v.copy_from_slice(values),
            Theta::Spn(s) => {
                let d = s.a.len();
                s.a.copy_from_slice(&values[..d]);
                s.sigma = values[d];
            }
        }
        Ok(())
    }

    /// Clamp every coordinate into `[-M, M]`.
    pub fn project(&mut self) {
        let bound = self.bound();
        match self {
            Theta::Cw(c) => project_box(&mut c.v, bound),
            Theta::Spn(s) => {
                project_box(&mut s.a, bound);
                s.sigma = s.sigma.clamp(-bound, bound);
            }
        }
    }
}

/// A uniform point of the box: CW `v ∈ [-M, M]^p`; SPN `a ∈ [-M, M]^d` and
/// `σ ∈ [0, M]`.
pub fn random_theta<R: Rng + ?Sized>(kind: ModelKind, p: usize, d: usize, bound: f64, rng: &mut R) -> Result<Theta> {
    check_bound(bound)?;
    let coord = Uniform::new_inclusive(-bound, bound).expect("valid range");
    match kind {
        ModelKind::Cw => Ok(Theta::Cw(CwParams::new((0..p).map(|_| rng.sample(coord)).collect(), d, bound)?)),
        ModelKind::Spn => {
            let a = (0..d).map(|_| rng.sample(coord)).collect();
            let sigma = rng.sample(Uniform::new_inclusive(0.0, bound).expect("valid range"));
            Ok(Theta::Spn(SpnParams::new(a, sigma, p, bound)?))
        }
    }
}

/// Nearest point of the ∞-norm box `[-bound, bound]^n`.
pub fn project_box(values: &mut [f64], bound: f64) {
    for x in values.iter_mut() {
        *x = x.clamp(-bound, bound);
    }
}
