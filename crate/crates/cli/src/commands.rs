use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cauchy_fde::fde::FdeEvaluator;
use cauchy_fde::model::{random_theta, ModelKind, Theta};
use cauchy_fde::optim::{initial_theta, run_ogd};
use cauchy_fde::recover::{determination_gap, run_recovery_cell, write_sweep_csv, RecoveryCell};
use cauchy_fde::rng::{stream_rng, Stream};
use cauchy_fde::spectra::{
    cw_protocol_truth, poisson_smooth, sample_cw, sample_spn, spn_protocol_truth, SpectrumSample,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Context {
    pub config: ExperimentConfig,
    pub output_dir: PathBuf,
    pub command: &'static str,
}

impl Context {
    fn comments(&self) -> Vec<String> {
        vec![
            format!("cauchy-fde {VERSION} {}", self.command),
            format!("config {}", self.config.materialized()),
        ]
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| {
            CliError::Io(format!("cannot create {}: {e}", self.output_dir.display()))
        })?;
        let path = self.output_dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
    }
}

fn read_sample(path: &Path) -> Result<SpectrumSample, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    Ok(SpectrumSample::read_csv(BufReader::new(file))?)
}

/// Explicit parameters if configured, else the synthetic protocol truth.
fn truth_for(cfg: &ExperimentConfig, seed: u64) -> Result<Theta, CliError> {
    if let Some(theta) = &cfg.theta {
        return Ok(theta.clone());
    }
    Ok(match cfg.model {
        ModelKind::Cw => Theta::Cw(cw_protocol_truth(cfg.p, cfg.d, seed)?),
        ModelKind::Spn => Theta::Spn(spn_protocol_truth(cfg.p, cfg.d, seed)?),
    })
}

fn draw(theta: &Theta, cfg: &ExperimentConfig, seed: u64) -> Result<SpectrumSample, CliError> {
    Ok(match theta {
        Theta::Cw(c) => sample_cw(c, cfg.field, seed)?,
        Theta::Spn(s) => sample_spn(s, cfg.field, seed)?,
    })
}

fn collect<T: Send>(results: Vec<Result<T, CliError>>) -> Result<Vec<T>, CliError> {
    results.into_iter().collect()
}

pub fn sample(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let results: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let sample = draw(&truth_for(cfg, seed)?, cfg, seed)?;
            let mut out = ctx.create(&format!("sample_{}_seed{seed}.csv", cfg.model))?;
            sample.write_csv(&mut out, &ctx.comments())?;
            out.flush()?;
            Ok(())
        })
        .collect();
    collect(results).map(|_| ())
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    seed: u64,
    theta: &'a Theta,
    steps: usize,
    skipped_steps: usize,
    mean_inner_iterations: f64,
    initial_validation: Option<f64>,
    final_validation: Option<f64>,
}

pub fn estimate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let input = cfg.estimate.input.as_deref().map(read_sample).transpose()?;
    let results: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (sample, truth) = match &input {
                Some(sample) => (sample.clone(), cfg.theta.clone()),
                None => {
                    let truth = truth_for(cfg, seed)?;
                    (draw(&truth, cfg, seed)?, Some(truth))
                }
            };
            let theta0 = initial_theta(cfg.model, &sample, cfg.bound(), seed, cfg.estimate.spn_init)?;
            let run = cfg.run_config(seed, cfg.estimate.xi);
            let (theta, trace) = run_ogd(&sample, &theta0, &run, truth.as_ref())?;

            let name = format!("{}_seed{seed}", cfg.model);
            let mut out = ctx.create(&format!("trace_{name}.csv"))?;
            trace.write_csv(&mut out, &ctx.comments())?;
            out.flush()?;
            let report = EstimateReport {
                seed,
                theta: &theta,
                steps: trace.steps,
                skipped_steps: trace.skipped_steps,
                mean_inner_iterations: trace.mean_inner_iterations(),
                initial_validation: trace.initial_validation,
                final_validation: trace.final_validation(),
            };
            let mut out = ctx.create(&format!("estimate_{name}.json"))?;
            serde_json::to_writer_pretty(&mut out, &report).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(out)?;
            out.flush()?;
            Ok(())
        })
        .collect();
    collect(results).map(|_| ())
}

pub fn recover(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let rc = &cfg.recover;
    let mut cells = Vec::new();
    for &d_true in &rc.d_true {
        for &lambda_min in &rc.lambda_min {
            for &seed in &cfg.seeds {
                cells.push(RecoveryCell { p: cfg.p, d: cfg.d, d_true, lambda_min, sigma_true: rc.sigma_true, seed });
            }
        }
    }
    let run = cfg.run_config(0, rc.xi);
    let rows: Vec<_> = cells
        .par_iter()
        .map(|cell| {
            run_recovery_cell(cell, &run, rc.xi0, rc.delta, rc.spn_init, rc.record_runtime)
                .map_err(CliError::from)
        })
        .collect();
    let rows = collect(rows)?;
    let mut out = ctx.create("recover_sweep.csv")?;
    write_sweep_csv(&mut out, &rows, &ctx.comments())?;
    out.flush()?;
    Ok(())
}

pub fn density(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let ds = &cfg.density;
    let theta = truth_for(cfg, cfg.seeds[0])?;
    let overlay = ds.input.as_deref().map(read_sample).transpose()?;
    let mut eval = FdeEvaluator::new(cfg.fixed_point);
    let mut out = ctx.create(&format!("density_{}.csv", cfg.model))?;
    for c in ctx.comments() {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{}", if overlay.is_some() { "x,slice,smoothed_sample" } else { "x,slice" })?;
    let step = (ds.x_max - ds.x_min) / (ds.points - 1) as f64;
    for i in 0..ds.points {
        let x = ds.x_min + step * i as f64;
        let slice = eval.gamma_slice(&theta, x, cfg.gamma)?;
        match &overlay {
            Some(sample) => writeln!(out, "{x},{slice},{}", poisson_smooth(x, cfg.gamma, sample))?,
            None => writeln!(out, "{x},{slice}")?,
        }
    }
    out.flush()?;
    Ok(())
}

pub fn gap(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let explicit = match (&cfg.gap.theta0, &cfg.theta) {
        (Some(t0), Some(t)) => Some((t0.clone(), t.clone())),
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "gap needs both gap.theta0 and theta, or neither".into(),
            ))
        }
    };
    let dims: Vec<usize> = match &explicit {
        Some((t0, _)) => vec![t0.d()],
        None => cfg.gap.dims.clone(),
    };
    let mut tasks = Vec::new();
    for &d in &dims {
        for &seed in &cfg.seeds {
            tasks.push((d, seed));
        }
    }
    let rows: Vec<_> = tasks
        .par_iter()
        .map(|&(d, seed)| {
            let (theta0, theta) = match &explicit {
                Some(pair) => pair.clone(),
                None => {
                    let mut rng = stream_rng(seed, Stream::Init);
                    let t0 = random_theta(cfg.model, d, d, cfg.bound(), &mut rng)?;
                    let t = random_theta(cfg.model, d, d, cfg.bound(), &mut rng)?;
                    (t0, t)
                }
            };
            let report = determination_gap(&theta0, &theta, cfg.gamma, seed, &cfg.quadrature, &cfg.fixed_point)?;
            Ok((seed, report))
        })
        .collect();
    let rows = collect(rows)?;
    let mut out = ctx.create(&format!("gap_{}.csv", cfg.model))?;
    for c in ctx.comments() {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "d,seed,gamma,empirical,deterministic,gap,quadrature_bound")?;
    for (seed, r) in rows {
        writeln!(
            out,
            "{},{seed},{},{},{},{},{}",
            r.d, r.gamma, r.empirical, r.deterministic, r.gap, r.quadrature_bound
        )?;
    }
    out.flush()?;
    Ok(())
}
