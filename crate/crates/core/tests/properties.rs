use std::f64::consts::PI;

use cauchy_fde::fde::{fde_cauchy, gamma_slice};
use cauchy_fde::grad::fde_grad;
use cauchy_fde::loss::QuadratureGrid;
use cauchy_fde::model::{CwParams, SpnParams, Theta};
use cauchy_fde::optim::{RunConfig, SpnInit};
use cauchy_fde::recover::{baseline_rank, determination_gap, recover_rank, v_cw};
use cauchy_fde::spectra::{empirical_cauchy, poisson_smooth, SpectrumSample};
use cauchy_fde::{Complex64, FixedPointConfig};
use proptest::prelude::*;

fn cw_theta() -> impl Strategy<Value = Theta> {
    (1usize..8, 1usize..8).prop_flat_map(|(p, d)| {
        prop::collection::vec(-1.0f64..=1.0, p)
            .prop_map(move |v| Theta::Cw(CwParams::new(v, d, 1.0).unwrap()))
    })
}

fn spn_theta() -> impl Strategy<Value = Theta> {
    (1usize..6, 0usize..4).prop_flat_map(|(d, extra)| {
        (prop::collection::vec(-1.2f64..=1.2, d), 0.0f64..=1.2).prop_map(move |(a, sigma)| {
            Theta::Spn(SpnParams::new(a, sigma, d + extra, 1.2).unwrap())
        })
    })
}

fn any_theta() -> impl Strategy<Value = Theta> {
    prop_oneof![cw_theta(), spn_theta()]
}

/// CW transform with complex `v`, by the damped iteration from `−i`.
fn cw_complex_v(z: Complex64, v: &[Complex64], d: usize) -> Complex64 {
    let mut b = Complex64::new(0.0, -1.0);
    for _ in 0..100_000 {
        let r: Complex64 = v.iter().map(|&vi| vi / (1.0 - vi * b)).sum::<Complex64>() / d as f64;
        let next = (z - r).inv();
        if (next - b).norm() < 1e-14 {
            return next;
        }
        b = (b + next) * 0.5;
    }
    panic!("complex-v iteration did not settle at z = {z}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_identity(
        eig in prop::collection::vec(-5.0f64..5.0, 1..40),
        x in -8.0f64..8.0,
        gamma in 0.005f64..5.0,
    ) {
        let n = eig.len();
        let sample = SpectrumSample::new(eig, n, n).unwrap();
        let lhs = -empirical_cauchy(Complex64::new(x, gamma), &sample).im / PI;
        let rhs = poisson_smooth(x, gamma, &sample);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn herglotz_and_bound(theta in any_theta(), x in -4.0f64..6.0, y in 0.01f64..3.0) {
        let z = Complex64::new(x, y);
        let res = fde_cauchy(z, &theta, &FixedPointConfig::default()).unwrap();
        prop_assert!(res.value.im < 0.0);
        prop_assert!(res.value.norm() <= 1.0 / y * (1.0 + 1e-6));
        prop_assert!(res.residual <= 1e-8);
    }

    #[test]
    fn slices_are_permutation_invariant(theta in any_theta(), x in -2.0f64..4.0, seed in any::<u64>()) {
        let mut flat = theta.to_vec();
        let n = match &theta { Theta::Cw(c) => c.v.len(), Theta::Spn(s) => s.a.len() };
        let k = (seed % n as u64) as usize;
        flat[..n].rotate_left(k);
        flat[..n].reverse();
        let mut permuted = theta.clone();
        permuted.set_from_slice(&flat).unwrap();
        let cfg = FixedPointConfig::with_tolerance(1e-12);
        let a = gamma_slice(&theta, x, 0.1, &cfg).unwrap();
        let b = gamma_slice(&permuted, x, 0.1, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn transform_satisfies_cauchy_riemann(theta in any_theta(), x in -2.0f64..4.0, y in 0.1f64..2.0) {
        let cfg = FixedPointConfig::with_tolerance(1e-13);
        let h = 1e-5;
        let g = |dx: f64, dy: f64| fde_cauchy(Complex64::new(x + dx, y + dy), &theta, &cfg).unwrap().value;
        let d_dx = (g(h, 0.0) - g(-h, 0.0)) / (2.0 * h);
        let d_dy = (g(0.0, h) - g(0.0, -h)) / (2.0 * h);
        // holomorphic: ∂G/∂y = i ∂G/∂x
        let diff = (d_dy - Complex64::i() * d_dx).norm();
        prop_assert!(diff <= 1e-5 * (1.0 + d_dx.norm()), "diff {diff}, |G'| {}", d_dx.norm());
    }

    #[test]
    fn cw_gradient_matches_complex_step(
        v in prop::collection::vec(-1.0f64..=1.0, 1..6),
        d in 1usize..6,
        x in -2.0f64..3.0,
        y in 0.05f64..1.0,
    ) {
        let z = Complex64::new(x, y);
        let theta = Theta::Cw(CwParams::new(v.clone(), d, 1.0).unwrap());
        let analytic = fde_grad(z, &theta, &FixedPointConfig::with_tolerance(1e-13)).unwrap();
        let h = 1e-6;
        for k in 0..v.len() {
            let shift = |s: f64| -> Vec<Complex64> {
                v.iter().enumerate()
                    .map(|(i, &vi)| if i == k { Complex64::new(vi, s) } else { Complex64::new(vi, 0.0) })
                    .collect()
            };
            let step = (cw_complex_v(z, &shift(h), d) - cw_complex_v(z, &shift(-h), d)) / Complex64::new(0.0, 2.0 * h);
            let an = analytic.partials[k];
            prop_assert!((step - an).norm() <= (1e-5 * an.norm()).max(1e-8), "k {k}: {step} vs {an}");
        }
    }

    #[test]
    fn projection_is_idempotent_nearest_point(
        values in prop::collection::vec(-5.0f64..5.0, 1..10),
        bound in 0.1f64..3.0,
    ) {
        let n = values.len();
        let mut theta = Theta::Cw(CwParams::new(vec![0.0; n], 1, bound).unwrap());
        theta.set_from_slice(&values).unwrap();
        theta.project();
        let once = theta.clone();
        theta.project();
        prop_assert_eq!(&theta, &once);
        for (p, x) in once.to_vec().iter().zip(&values) {
            prop_assert!(p.abs() <= bound);
            if x.abs() <= bound { prop_assert_eq!(p, x); } else { prop_assert_eq!(*p, bound.copysign(*x)); }
        }
    }

    #[test]
    fn baseline_rank_is_monotone(
        eig in prop::collection::vec(0.0f64..2.0, 1..30),
        d1 in 0.01f64..2.0,
        d2 in 0.01f64..2.0,
    ) {
        let n = eig.len();
        let sample = SpectrumSample::new(eig, n, n).unwrap();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(baseline_rank(&sample, hi).unwrap() <= baseline_rank(&sample, lo).unwrap());
    }

    #[test]
    fn validation_distance_is_a_metric_on_sorted_vectors(
        (a, b, c) in (1usize..8).prop_flat_map(|n| (
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
        )),
    ) {
        prop_assert_eq!(v_cw(&a, &a).unwrap(), 0.0);
        prop_assert!((v_cw(&a, &b).unwrap() - v_cw(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!(v_cw(&a, &c).unwrap() <= v_cw(&a, &b).unwrap() + v_cw(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn sample_csv_round_trips(eig in prop::collection::vec(-1e3f64..1e3, 1..20), seed in any::<u64>()) {
        let n = eig.len();
        let sample = SpectrumSample::new(eig, n + 1, n).unwrap().with_origin(cauchy_fde::spectra::SampleOrigin {
            seed,
            model: cauchy_fde::ModelKind::Cw,
        });
        let mut buf = Vec::new();
        sample.write_csv(&mut buf, &["note".to_string()]).unwrap();
        let back = SpectrumSample::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.eigenvalues(), sample.eigenvalues());
        prop_assert_eq!(back.p(), n + 1);
        prop_assert_eq!(back.origin(), sample.origin());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gap_is_permutation_invariant(v in prop::collection::vec(-1.0f64..=1.0, 4), seed in 0u64..100) {
        let theta0 = Theta::Cw(CwParams::new(vec![0.2, -0.4, 0.6, 0.0], 4, 1.0).unwrap());
        let mut rev = v.clone();
        rev.reverse();
        let grid = QuadratureGrid { half_width: 20.0, points: 401 };
        let cfg = FixedPointConfig::default();
        let a = determination_gap(&theta0, &Theta::Cw(CwParams::new(v, 4, 1.0).unwrap()), 0.1, seed, &grid, &cfg).unwrap();
        let b = determination_gap(&theta0, &Theta::Cw(CwParams::new(rev, 4, 1.0).unwrap()), 0.1, seed, &grid, &cfg).unwrap();
        prop_assert!((a.gap - b.gap).abs() < 1e-8);
    }

    #[test]
    fn recover_rank_ignores_input_order(eig in prop::collection::vec(0.0f64..1.5, 4), seed in 0u64..100) {
        let mut reversed = eig.clone();
        reversed.reverse();
        let cfg = RunConfig { xi: 1e-3, iterations: Some(50), seed, ..Default::default() };
        let a = recover_rank(&SpectrumSample::new(eig, 5, 4).unwrap(), &cfg, None, SpnInit::Eigenvalues, None).unwrap();
        let b = recover_rank(&SpectrumSample::new(reversed, 5, 4).unwrap(), &cfg, None, SpnInit::Eigenvalues, None).unwrap();
        prop_assert_eq!(a.0, b.0);
    }
}
