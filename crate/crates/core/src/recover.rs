//! Rank recovery for SPN, validation losses and the determination gap.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fde::{FdeEvaluator, FixedPointConfig};
use crate::loss::{ecce_quadrature_with, QuadratureGrid};
use crate::model::{Field, ModelKind, Theta};
use crate::optim::{initial_theta, run_ogd, RunConfig, RunTrace, SpnInit};
use crate::spectra::{poisson_smooth, sample_cw, sample_spn, sample_true_spn_experiment, SpectrumSample};

/// Eigenvalue threshold of the baseline rank estimate.
pub const DEFAULT_DELTA: f64 = 0.1;
/// Default L¹ weight and rank threshold of the recovery pipeline.
pub const DEFAULT_XI: f64 = 1e-3;

/// `#{j : λ_j > δ}`.
pub fn baseline_rank(sample: &SpectrumSample, delta: f64) -> Result<usize> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    Ok(sample.eigenvalues().iter().filter(|&&l| l > delta).count())
}

/// `#{j : |a_j| > ξ₀}`.
pub fn threshold_rank(a: &[f64], xi0: f64) -> usize {
    a.iter().filter(|x| x.abs() > xi0).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub estimated_rank: usize,
    pub a_hat: Vec<f64>,
    pub sigma_hat: f64,
    pub threshold: f64,
}

/// Fits SPN with the L¹ penalty `cfg.xi` and counts signal values above `xi0`
/// (default `cfg.xi`).
pub fn recover_rank(
    sample: &SpectrumSample,
    cfg: &RunConfig,
    xi0: Option<f64>,
    init: SpnInit,
    ground_truth: Option<&Theta>,
) -> Result<(RankResult, RunTrace)> {
    if !(cfg.xi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rank recovery needs xi > 0, got {}",
            cfg.xi
        )));
    }
    let threshold = xi0.unwrap_or(cfg.xi);
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("xi0 must be nonnegative, got {threshold}")));
    }
    let bound = cfg.bound.unwrap_or(ModelKind::Spn.default_bound());
    let theta0 = initial_theta(ModelKind::Spn, sample, bound, cfg.seed, init)?;
    let (theta, trace) = run_ogd(sample, &theta0, cfg, ground_truth)?;
    let Theta::Spn(fit) = theta else {
        unreachable!("SPN run returns SPN parameters")
    };
    Ok((
        RankResult {
            estimated_rank: threshold_rank(&fit.a, threshold),
            a_hat: fit.a,
            sigma_hat: fit.sigma,
            threshold,
        },
        trace,
    ))
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `‖sort(b) − sort(b_true)‖₂`.
pub fn v_cw(b: &[f64], b_true: &[f64]) -> Result<f64> {
    if b.len() != b_true.len() {
        return Err(Error::DimensionMismatch {
            expected: b_true.len(),
            found: b.len(),
        });
    }
    Ok(sorted(b)
        .iter()
        .zip(sorted(b_true))
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// `‖sort(a) − sort(a_true)‖₂ + |σ − σ_true|`.
pub fn v_spn(a: &[f64], sigma: f64, a_true: &[f64], sigma_true: f64) -> Result<f64> {
    Ok(v_cw(a, a_true)? + (sigma - sigma_true).abs())
}

pub fn validation_loss(theta: &Theta, truth: &Theta) -> Result<f64> {
    match (theta, truth) {
        (Theta::Cw(c), Theta::Cw(t)) => v_cw(&c.v, &t.v),
        (Theta::Spn(s), Theta::Spn(t)) => v_spn(&s.a, s.sigma, &t.a, t.sigma),
        _ => Err(Error::InvalidArgument(
            "validation loss needs two parameters of the same model".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gamma: f64,
    pub d: usize,
    /// Cross-entropy of `θ` against the smoothed spectrum of one sample at `θ₀`.
    pub empirical: f64,
    /// Cross-entropy of `θ` against the γ-slice of `θ₀`.
    pub deterministic: f64,
    pub gap: f64,
    /// Tail-truncation bound of each quadrature.
    pub quadrature_bound: f64,
}

/// Difference of the empirical and deterministic cross-entropies of `theta`,
/// both references taken at `theta0`; the sample is drawn from `seed`.
pub fn determination_gap(
    theta0: &Theta,
    theta: &Theta,
    gamma: f64,
    seed: u64,
    grid: &QuadratureGrid,
    cfg: &FixedPointConfig,
) -> Result<GapReport> {
    theta0.validate()?;
    theta.validate()?;
    if theta0.kind() != theta.kind() || theta0.p() != theta.p() || theta0.d() != theta.d() {
        return Err(Error::InvalidArgument(
            "determination gap needs parameters of the same model and shape".into(),
        ));
    }
    let sample = match theta0 {
        Theta::Cw(c) => sample_cw(c, Field::Real, seed)?,
        Theta::Spn(s) => sample_spn(s, Field::Real, seed)?,
    };
    let mut eval = FdeEvaluator::new(*cfg);
    let empirical = ecce_quadrature_with(
        &mut eval,
        |x| Ok(poisson_smooth(x, gamma, &sample)),
        theta,
        gamma,
        grid,
    )?;
    let mut reference = FdeEvaluator::new(*cfg);
    let deterministic = ecce_quadrature_with(
        &mut eval,
        |x| reference.gamma_slice(theta0, x, gamma),
        theta,
        gamma,
        grid,
    )?;
    Ok(GapReport {
        gamma,
        d: theta0.d(),
        empirical: empirical.value,
        deterministic: deterministic.value,
        gap: empirical.value - deterministic.value,
        quadrature_bound: empirical.standard_error,
    })
}

/// One cell of a rank-recovery sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCell {
    pub p: usize,
    pub d: usize,
    pub d_true: usize,
    pub lambda_min: f64,
    pub sigma_true: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub d_true: usize,
    pub lambda_min: f64,
    pub seed: u64,
    pub estimated_rank: usize,
    pub baseline_rank: usize,
    pub v_spn: f64,
    /// Wall-clock seconds; `None` when not recorded.
    pub runtime_seconds: Option<f64>,
}

/// Samples the low-rank experiment of `cell`, runs [`recover_rank`] with the
/// optimizer seeded by `cell.seed`, and the baseline with threshold `delta`.
pub fn run_recovery_cell(
    cell: &RecoveryCell,
    cfg: &RunConfig,
    xi0: Option<f64>,
    delta: f64,
    init: SpnInit,
    record_runtime: bool,
) -> Result<RecoveryRow> {
    let start = Instant::now();
    let (truth, sample) = sample_true_spn_experiment(
        cell.p,
        cell.d,
        cell.d_true,
        cell.lambda_min,
        cell.sigma_true,
        cell.seed,
    )?;
    let run_cfg = RunConfig { seed: cell.seed, ..*cfg };
    let (rank, _) = recover_rank(&sample, &run_cfg, xi0, init, None)?;
    Ok(RecoveryRow {
        d_true: cell.d_true,
        lambda_min: cell.lambda_min,
        seed: cell.seed,
        estimated_rank: rank.estimated_rank,
        baseline_rank: baseline_rank(&sample, delta)?,
        v_spn: v_spn(&rank.a_hat, rank.sigma_hat, &truth.a, truth.sigma)?,
        runtime_seconds: record_runtime.then(|| start.elapsed().as_secs_f64()),
    })
}

pub const SWEEP_HEADER: &str =
    "d_true,lambda_min,seed,estimated_rank,baseline_rank,v_spn,runtime_seconds";

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[RecoveryRow], comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        let runtime = r.runtime_seconds.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.d_true, r.lambda_min, r.seed, r.estimated_rank, r.baseline_rank, r.v_spn, runtime
        )?;
    }
    Ok(())
}

/// Rank estimates from an external method, keyed by `(d_true, lambda_min,
/// seed)`, for side-by-side comparison with a sweep.
///
/// Expected columns: `d_true,lambda_min,seed,rank`; `#` lines are skipped.
pub fn read_external_ranks<R: BufRead>(input: R) -> Result<BTreeMap<(usize, u64, u64), usize>> {
    let mut out = BTreeMap::new();
    let mut header_seen = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line != "d_true,lambda_min,seed,rank" {
                return Err(Error::Format(format!("unexpected header `{line}`")));
            }
            continue;
        }
        let bad = || Error::Format(format!("line {}: cannot parse `{line}`", lineno + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let d_true: usize = fields[0].parse().map_err(|_| bad())?;
        let lambda_min: f64 = fields[1].parse().map_err(|_| bad())?;
        let seed: u64 = fields[2].parse().map_err(|_| bad())?;
        let rank: usize = fields[3].parse().map_err(|_| bad())?;
        out.insert((d_true, lambda_min.to_bits(), seed), rank);
    }
    Ok(out)
}
