//! Random matrix sampling, self-adjoint eigenvalues, and empirical-measure
//! oracles (empirical Cauchy transform, Poisson smoothing, moments).

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::distr::Uniform;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{CwParams, Field, ModelKind, SpnParams, SPN_DEFAULT_BOUND};
use crate::rng::{stream_rng, Stream};

/// Where a sample came from; written into the CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOrigin {
    pub seed: u64,
    pub model: ModelKind,
}

/// Ascending eigenvalues of one observed `d × d` self-adjoint sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample {
    eigenvalues: Vec<f64>,
    p: usize,
    d: usize,
    origin: Option<SampleOrigin>,
}

impl SpectrumSample {
    /// Builds a sample, sorting the eigenvalues ascending.
    pub fn new(mut eigenvalues: Vec<f64>, p: usize, d: usize) -> Result<Self> {
        if p == 0 || d == 0 {
            return Err(Error::InvalidArgument("p and d must be positive".into()));
        }
        if eigenvalues.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: eigenvalues.len(),
            });
        }
        if let Some(bad) = eigenvalues.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite eigenvalue {bad}")));
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(SpectrumSample {
            eigenvalues,
            p,
            d,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: SampleOrigin) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn origin(&self) -> Option<SampleOrigin> {
        self.origin
    }

    /// Writes the sample as CSV: the `# p=.. d=.. seed=.. model=..` header,
    /// any extra `#` comment lines, then one eigenvalue per line.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        let origin = self.origin.ok_or_else(|| {
            Error::InvalidArgument("sample has no seed/model provenance to write".into())
        })?;
        writeln!(
            out,
            "# p={} d={} seed={} model={}",
            self.p, self.d, origin.seed, origin.model
        )?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        for x in &self.eigenvalues {
            writeln!(out, "{x}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut header: Option<(usize, usize, u64, ModelKind)> = None;
        let mut values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if header.is_none() && comment.trim_start().starts_with("p=") {
                    header = Some(parse_header(comment)?);
                }
                continue;
            }
            let x: f64 = line.parse().map_err(|_| {
                Error::Format(format!("line {}: `{line}` is not a number", lineno + 1))
            })?;
            values.push(x);
        }
        let (p, d, seed, model) =
            header.ok_or_else(|| Error::Format("missing `# p=.. d=..` header".into()))?;
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Format("eigenvalues are not ascending".into()));
        }
        Ok(SpectrumSample::new(values, p, d)?.with_origin(SampleOrigin { seed, model }))
    }
}

fn parse_header(comment: &str) -> Result<(usize, usize, u64, ModelKind)> {
    let mut p = None;
    let mut d = None;
    let mut seed = None;
    let mut model = None;
    for token in comment.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header token `{token}` is not key=value")))?;
        let bad = || Error::Format(format!("header field `{key}` has invalid value `{value}`"));
        match key {
            "p" => p = Some(value.parse().map_err(|_| bad())?),
            "d" => d = Some(value.parse().map_err(|_| bad())?),
            "seed" => seed = Some(value.parse().map_err(|_| bad())?),
            "model" => model = Some(value.parse().map_err(|_| bad())?),
            _ => return Err(Error::Format(format!("unknown header field `{key}`"))),
        }
    }
    match (p, d, seed, model) {
        (Some(p), Some(d), Some(seed), Some(model)) => Ok((p, d, seed, model)),
        _ => Err(Error::Format("header needs p, d, seed and model".into())),
    }
}

/// Shape of a `p × d` Ginibre matrix with entry variance `1/d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GinibreSpec {
    pub p: usize,
    pub d: usize,
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GinibreMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl GinibreMatrix {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            GinibreMatrix::Real(m) => m.shape(),
            GinibreMatrix::Complex(m) => m.shape(),
        }
    }

    /// `(1/d) tr(Z* Z)`.
    pub fn normalized_gram_trace(&self) -> f64 {
        let d = self.shape().1 as f64;
        let sum: f64 = match self {
            GinibreMatrix::Real(m) => m.iter().map(|x| x * x).sum(),
            GinibreMatrix::Complex(m) => m.iter().map(|x| x.norm_sqr()).sum(),
        };
        sum / d
    }
}

fn fill_ginibre<R: Rng>(spec: GinibreSpec, rng: &mut R) -> GinibreMatrix {
    let std = (1.0 / spec.d as f64).sqrt();
    match spec.field {
        Field::Real => GinibreMatrix::Real(DMatrix::from_fn(spec.p, spec.d, |_, _| {
            std * rng.sample::<f64, _>(StandardNormal)
        })),
        Field::Complex => {
            let scale = std / 2f64.sqrt();
            GinibreMatrix::Complex(DMatrix::from_fn(spec.p, spec.d, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(scale * re, scale * im)
            }))
        }
    }
}

pub fn sample_ginibre(spec: GinibreSpec, seed: u64) -> Result<GinibreMatrix> {
    if spec.p == 0 || spec.d == 0 {
        return Err(Error::InvalidArgument("Ginibre shape needs p, d >= 1".into()));
    }
    Ok(fill_ginibre(spec, &mut stream_rng(seed, Stream::Sampling)))
}

/// Eigenvalues of `Z* diag(v) Z` for a fresh `p × d` Ginibre `Z`.
pub fn sample_cw(params: &CwParams, field: Field, seed: u64) -> Result<SpectrumSample> {
    params.validate()?;
    let (p, d) = (params.p(), params.d);
    let z = sample_ginibre(GinibreSpec { p, d, field }, seed)?;
    let eigenvalues = match z {
        GinibreMatrix::Real(z) => {
            let mut scaled = z.clone();
            for (i, mut row) in scaled.row_iter_mut().enumerate() {
                row *= params.v[i];
            }
            eigvals_selfadjoint(&symmetrize(z.transpose() * scaled))?
        }
        GinibreMatrix::Complex(z) => {
            let mut scaled = z.clone();
            for (i, mut row) in scaled.row_iter_mut().enumerate() {
                row *= Complex64::from(params.v[i]);
            }
            eigvals_selfadjoint(&symmetrize(z.adjoint() * scaled))?
        }
    };
    Ok(SpectrumSample::new(eigenvalues, p, d)?.with_origin(SampleOrigin {
        seed,
        model: ModelKind::Cw,
    }))
}

/// Eigenvalues of `(A + σZ)*(A + σZ)` with `A` the rectangular diagonal
/// embedding of `a`.
pub fn sample_spn(params: &SpnParams, field: Field, seed: u64) -> Result<SpectrumSample> {
    params.validate()?;
    let (p, d) = (params.p, params.d());
    let z = sample_ginibre(GinibreSpec { p, d, field }, seed)?;
    let eigenvalues = match z {
        GinibreMatrix::Real(z) => {
            let mut x = z * params.sigma;
            for (k, &ak) in params.a.iter().enumerate() {
                x[(k, k)] += ak;
            }
            eigvals_selfadjoint(&symmetrize(x.transpose() * &x))?
        }
        GinibreMatrix::Complex(z) => {
            let mut x = z * Complex64::from(params.sigma);
            for (k, &ak) in params.a.iter().enumerate() {
                x[(k, k)] += ak;
            }
            eigvals_selfadjoint(&symmetrize(x.adjoint() * &x))?
        }
    };
    Ok(SpectrumSample::new(eigenvalues, p, d)?.with_origin(SampleOrigin {
        seed,
        model: ModelKind::Spn,
    }))
}

/// Ground truth for the CW estimation experiments: `v` uniform on
/// `[-0.1, 0.1]^p`.
pub fn cw_protocol_truth(p: usize, d: usize, seed: u64) -> Result<CwParams> {
    let mut rng = stream_rng(seed, Stream::Truth);
    let dist = Uniform::new_inclusive(-0.1, 0.1).expect("valid range");
    CwParams::new((0..p).map(|_| rng.sample(dist)).collect(), d, 1.0)
}

/// Ground truth for the SPN estimation experiments: `a` uniform on
/// `[0, 1]^d`, `σ = 0.1`.
pub fn spn_protocol_truth(p: usize, d: usize, seed: u64) -> Result<SpnParams> {
    let mut rng = stream_rng(seed, Stream::Truth);
    let dist = Uniform::new_inclusive(0.0, 1.0).expect("valid range");
    SpnParams::new(
        (0..d).map(|_| rng.sample(dist)).collect(),
        0.1,
        p,
        SPN_DEFAULT_BOUND,
    )
}

/// Low-rank SPN ground truth and its sample: `d − d_true` zero signal values
/// followed by `d_true` draws from `Uniform[λ_min, 1]`.
///
/// The random orthogonal factors of the full protocol are not applied: the
/// spectrum of the sample does not depend on them in law.
pub fn sample_true_spn_experiment(
    p: usize,
    d: usize,
    d_true: usize,
    lambda_min: f64,
    sigma_true: f64,
    seed: u64,
) -> Result<(SpnParams, SpectrumSample)> {
    if d_true > d || d > p {
        return Err(Error::InvalidArgument(format!(
            "need d_true <= d <= p, got d_true = {d_true}, d = {d}, p = {p}"
        )));
    }
    if !(lambda_min > 0.0 && lambda_min <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_min must lie in (0, 1], got {lambda_min}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Truth);
    let dist = Uniform::new_inclusive(lambda_min, 1.0).expect("valid range");
    let mut a = vec![0.0; d - d_true];
    a.extend((0..d_true).map(|_| rng.sample(dist)));
    let truth = SpnParams::new(a, sigma_true, p, SPN_DEFAULT_BOUND)?;
    let sample = sample_spn(&truth, Field::Real, seed)?;
    Ok((truth, sample))
}

fn symmetrize<T: ComplexField>(m: DMatrix<T>) -> DMatrix<T> {
    let half = T::from_real(nalgebra::convert(0.5));
    (m.adjoint() + &m) * half
}

/// Ascending eigenvalues of a real symmetric or complex Hermitian matrix.
pub fn eigvals_selfadjoint<T>(matrix: &DMatrix<T>) -> Result<Vec<f64>>
where
    T: ComplexField<RealField = f64>,
{
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: cols,
        });
    }
    let scale = matrix.iter().map(|x| x.clone().modulus()).fold(0.0, f64::max);
    let asymmetry = (matrix - matrix.adjoint())
        .iter()
        .map(|x| x.clone().modulus())
        .fold(0.0, f64::max);
    let threshold = 1e-10 * scale;
    if asymmetry > threshold {
        return Err(Error::NotSelfAdjoint {
            asymmetry,
            threshold,
        });
    }
    let max_iterations = 1000 * rows.max(1);
    let eig = SymmetricEigen::try_new(matrix.clone(), f64::EPSILON, max_iterations)
        .ok_or(Error::EigenSolver { dim: rows, scale })?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `(1/d) Σ_k 1/(z − λ_k)`, the Cauchy transform of the empirical spectral
/// distribution. Requires `Im z > 0`.
pub fn empirical_cauchy(z: Complex64, sample: &SpectrumSample) -> Complex64 {
    let sum: Complex64 = sample.eigenvalues.iter().map(|&l| (z - l).inv()).sum();
    sum / sample.d as f64
}

/// Cauchy density of scale `gamma` at `x`.
pub fn poisson_kernel(x: f64, gamma: f64) -> f64 {
    gamma / (PI * (x * x + gamma * gamma))
}

/// The empirical spectral distribution convolved with the Poisson kernel.
pub fn poisson_smooth(x: f64, gamma: f64, sample: &SpectrumSample) -> f64 {
    let sum: f64 = sample
        .eigenvalues
        .iter()
        .map(|&l| poisson_kernel(x - l, gamma))
        .sum();
    sum / sample.d as f64
}

/// Normalized trace moment `(1/d) Σ λ_j^k`.
pub fn moment(sample: &SpectrumSample, k: u32) -> f64 {
    let sum: f64 = sample.eigenvalues.iter().map(|l| l.powi(k as i32)).sum();
    sum / sample.d as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(values: &[f64]) -> SpectrumSample {
        SpectrumSample::new(values.to_vec(), values.len(), values.len()).unwrap()
    }

    #[test]
    fn eigvals_small_cases() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(eigvals_selfadjoint(&id).unwrap(), vec![1.0, 1.0, 1.0]);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(eigvals_selfadjoint(&diag).unwrap(), vec![1.0, 2.0, 3.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let ev = eigvals_selfadjoint(&m).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigvals_match_characteristic_roots() {
        // [[a, b], [b, c]]: roots (a + c)/2 ± sqrt(((a − c)/2)² + b²)
        let (a, b, c) = (0.3, -1.7, 2.9);
        let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
        let ev = eigvals_selfadjoint(&m).unwrap();
        let mid = (a + c) / 2.0;
        let rad = (((a - c) / 2.0f64).powi(2) + b * b).sqrt();
        assert!(((ev[0] - (mid - rad)) / (mid - rad)).abs() < 1e-10);
        assert!(((ev[1] - (mid + rad)) / (mid + rad)).abs() < 1e-10);

        // 3×3 with eigenvalues 1, 2, 4: Q diag Qᵀ for an explicit rotation.
        let (s, co) = (0.6f64, 0.8f64);
        let q = DMatrix::from_row_slice(3, 3, &[co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0]);
        let dgn = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 2.0]));
        let m = &q * dgn * q.transpose();
        let ev = eigvals_selfadjoint(&symmetrize(m)).unwrap();
        for (got, want) in ev.iter().zip([1.0, 2.0, 4.0]) {
            assert!(((got - want) / want).abs() < 1e-10, "{got} vs {want}");
        }

        // Hermitian 2×2 [[1, i], [−i, 1]] has eigenvalues 0 and 2.
        let i = Complex64::i();
        let one = Complex64::from(1.0);
        let h = DMatrix::from_row_slice(2, 2, &[one, i, -i, one]);
        let ev = eigvals_selfadjoint(&h).unwrap();
        assert!(ev[0].abs() < 1e-14 && (ev[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eigvals_rejects_non_selfadjoint() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            eigvals_selfadjoint(&m),
            Err(Error::NotSelfAdjoint { .. })
        ));
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(eigvals_selfadjoint(&rect).is_err());
    }

    #[test]
    fn eigenvalue_sum_is_trace() {
        let z = match sample_ginibre(GinibreSpec { p: 30, d: 20, field: Field::Real }, 3).unwrap() {
            GinibreMatrix::Real(z) => z,
            _ => unreachable!(),
        };
        let w = symmetrize(z.transpose() * &z);
        let ev = eigvals_selfadjoint(&w).unwrap();
        let sum: f64 = ev.iter().sum();
        assert!(((sum - w.trace()) / w.trace()).abs() < 1e-9);
    }

    #[test]
    fn empirical_cauchy_examples() {
        let g = empirical_cauchy(Complex64::i(), &sample(&[0.0]));
        assert!((g - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        let g = empirical_cauchy(Complex64::i(), &sample(&[1.0, -1.0]));
        assert!((g - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        let s = sample(&[0.3, -2.0, 5.0, 1.1]);
        let z = Complex64::new(0.0, 1e6);
        assert!((z * empirical_cauchy(z, &s) - 1.0).norm() < 1e-4);
        assert!(empirical_cauchy(Complex64::new(0.2, 0.01), &s).im < 0.0);
    }

    #[test]
    fn poisson_smooth_examples() {
        let s = sample(&[0.0]);
        assert!((poisson_smooth(0.0, 0.1, &s) - 3.183_098_861_837_907).abs() < 1e-12);
        let g = 0.37;
        assert!((poisson_smooth(g, g, &s) - 1.0 / (2.0 * PI * g)).abs() < 1e-12);
    }

    #[test]
    fn moment_examples() {
        assert_eq!(moment(&sample(&[1.0, 1.0]), 5), 1.0);
        assert_eq!(moment(&sample(&[0.0, 2.0]), 2), 2.0);
        assert_eq!(moment(&sample(&[-1.0, 1.0]), 3), 0.0);
    }

    #[test]
    fn cw_degenerate_and_scalar_cases() {
        let zero = CwParams::new(vec![0.0; 5], 4, 1.0).unwrap();
        let s = sample_cw(&zero, Field::Real, 11).unwrap();
        assert!(s.eigenvalues().iter().all(|&x| x == 0.0));

        let c = 0.7;
        let scalar = CwParams::new(vec![c], 1, 1.0).unwrap();
        let s = sample_cw(&scalar, Field::Real, 5).unwrap();
        let z = match sample_ginibre(GinibreSpec { p: 1, d: 1, field: Field::Real }, 5).unwrap() {
            GinibreMatrix::Real(z) => z[(0, 0)],
            _ => unreachable!(),
        };
        assert!((s.eigenvalues()[0] - c * z * z).abs() < 1e-15);
    }

    #[test]
    fn spn_noiseless_and_scalar_cases() {
        let params = SpnParams::new(vec![0.9, -0.2, 0.5], 0.0, 4, 1.2).unwrap();
        let s = sample_spn(&params, Field::Real, 2).unwrap();
        let mut want: Vec<f64> = params.a.iter().map(|a| a * a).collect();
        want.sort_by(f64::total_cmp);
        for (got, want) in s.eigenvalues().iter().zip(&want) {
            assert!((got - want).abs() <= 1e-15, "{got} vs {want}");
        }

        let params = SpnParams::new(vec![1.0], 0.1, 1, 1.2).unwrap();
        let s = sample_spn(&params, Field::Real, 9).unwrap();
        let z = match sample_ginibre(GinibreSpec { p: 1, d: 1, field: Field::Real }, 9).unwrap() {
            GinibreMatrix::Real(z) => z[(0, 0)],
            _ => unreachable!(),
        };
        assert!((s.eigenvalues()[0] - (1.0 + 0.1 * z).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn spn_spectra_are_nonnegative_for_both_fields() {
        let params = SpnParams::new(vec![0.5; 20], 0.8, 30, 1.2).unwrap();
        for field in [Field::Real, Field::Complex] {
            let s = sample_spn(&params, field, 4).unwrap();
            assert!(s.eigenvalues().iter().all(|&x| x >= -1e-10));
        }
    }

    #[test]
    fn true_spn_experiment_layout() {
        let (truth, s) = sample_true_spn_experiment(50, 50, 40, 0.3, 0.1, 1).unwrap();
        assert_eq!(truth.a.iter().filter(|&&x| x == 0.0).count(), 10);
        assert!(truth.a[10..].iter().all(|&x| (0.3..=1.0).contains(&x)));
        assert_eq!(s.d(), 50);

        let (truth, _) = sample_true_spn_experiment(8, 8, 8, 1.0 - 1e-12, 0.1, 1).unwrap();
        assert!(truth.a.iter().all(|&x| (x - 1.0).abs() < 1e-11));

        let (truth, s) = sample_true_spn_experiment(6, 6, 0, 0.5, 0.3, 3).unwrap();
        let pure = SpnParams::new(vec![0.0; 6], 0.3, 6, 1.2).unwrap();
        assert_eq!(truth, pure);
        assert_eq!(s, sample_spn(&pure, Field::Real, 3).unwrap());

        assert!(sample_true_spn_experiment(4, 5, 1, 0.5, 0.1, 0).is_err());
    }

    #[test]
    fn csv_round_trip_and_header() {
        let params = CwParams::new(vec![0.3, -0.1, 0.7], 3, 1.0).unwrap();
        let s = sample_cw(&params, Field::Real, 42).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &["version=test".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# p=3 d=3 seed=42 model=cw\n"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
        let back = SpectrumSample::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);

        assert!(SpectrumSample::read_csv("1.0\n2.0\n".as_bytes()).is_err());
        assert!(SpectrumSample::read_csv("# p=2 d=2 seed=1 model=cw\n2.0\n1.0\n".as_bytes()).is_err());
        assert!(SpectrumSample::read_csv("# p=2 d=3 seed=1 model=cw\n1.0\n2.0\n".as_bytes()).is_err());
    }
}
