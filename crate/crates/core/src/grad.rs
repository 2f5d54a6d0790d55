//! Parameter gradients of the deterministic-equivalent Cauchy transforms by
//! implicit differentiation of the fixed-point maps.
//!
//! At a fixed point `G = F(G, θ)` of a holomorphic contraction,
//! `∂G/∂θ = (I − D_G F)⁻¹ ∂F/∂θ`, and `I − D_G F` is invertible because the
//! attracting fixed point has `‖D_G F‖ < 1`. All derivatives here are
//! complex-linear; on `D2 ≅ C²` the derivative of the entrywise inverse is
//! `d(B⁻¹) = −B⁻² dB`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fde::{
    cw_cauchy, eta2, spn_forward, spn_g_a, D2Point, FdeEvaluator, FixedPointConfig,
    Subordination, TransformResult,
};
use crate::model::{CwParams, SpnParams, Theta};

/// Smallest admissible `|det|` in the 2×2 solves.
pub const DET_GUARD: f64 = 1e-30;

/// A complex-linear map on `C²`, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexJacobian2(pub [[Complex64; 2]; 2]);

impl ComplexJacobian2 {
    pub fn identity() -> Self {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        ComplexJacobian2([[o, z], [z, o]])
    }

    pub fn diag(v: D2Point) -> Self {
        let z = Complex64::new(0.0, 0.0);
        ComplexJacobian2([[v.b1, z], [z, v.b2]])
    }

    pub fn apply(&self, x: D2Point) -> D2Point {
        let m = &self.0;
        D2Point::new(
            m[0][0] * x.b1 + m[0][1] * x.b2,
            m[1][0] * x.b1 + m[1][1] * x.b2,
        )
    }

    /// `self ∘ rhs`.
    pub fn compose(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        ComplexJacobian2(out)
    }

    pub fn minus(&self, rhs: &Self) -> Self {
        let mut out = self.0;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry -= rhs.0[i][j];
            }
        }
        ComplexJacobian2(out)
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn spectral_radius(&self) -> f64 {
        let half = self.trace() * 0.5;
        let disc = (half * half - self.det()).sqrt();
        (half + disc).norm().max((half - disc).norm())
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() <= DET_GUARD {
            return Err(Error::SingularDenominator {
                context: "2x2 implicit solve",
                magnitude: det.norm(),
            });
        }
        let m = &self.0;
        let inv = det.inv();
        Ok(ComplexJacobian2([
            [m[1][1] * inv, -m[0][1] * inv],
            [-m[1][0] * inv, m[0][0] * inv],
        ]))
    }
}

/// `(I − J)⁻¹` after checking that `J` is a contraction at the fixed point.
fn resolvent(j: &ComplexJacobian2, context: &'static str) -> Result<ComplexJacobian2> {
    let factor = j.spectral_radius();
    if !(factor < 1.0) {
        return Err(Error::ContractionViolation { context, factor });
    }
    ComplexJacobian2::identity().minus(j).inverse()
}

/// Partial derivatives of `G(z)` in the flat parameter layout of [`Theta`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub partials: Vec<Complex64>,
    /// Largest contraction factor (|D| or spectral radius) met at the fixed
    /// points used; always below 1.
    pub contraction: f64,
}

/// Scalar implicit-function solve `∂G/∂θ = ∂F/∂θ / (1 − ∂F/∂G)`.
pub fn implicit_solve_1d(df_dfix: Complex64, df_dparam: Complex64) -> Result<Complex64> {
    let factor = df_dfix.norm();
    if !(factor < 1.0) {
        return Err(Error::ContractionViolation {
            context: "scalar implicit solve",
            factor,
        });
    }
    Ok(df_dparam / (1.0 - df_dfix))
}

pub fn cw_grad(z: Complex64, params: &CwParams, cfg: &FixedPointConfig) -> Result<GradientVector> {
    let g = cw_cauchy(z, params, cfg)?.value;
    cw_grad_at(params, g)
}

/// CW gradient at a converged transform value `g`:
/// `∂G/∂v_i = G² (1/d)(1 − v_i G)⁻² / (1 − G² R′(G))`.
pub fn cw_grad_at(params: &CwParams, g: Complex64) -> Result<GradientVector> {
    let d = params.d as f64;
    let g2 = g * g;
    let r_prime: Complex64 = params
        .v
        .iter()
        .map(|&vi| {
            let den = 1.0 - vi * g;
            vi * vi / (den * den)
        })
        .sum::<Complex64>()
        / d;
    let dfix = g2 * r_prime;
    let scale = implicit_solve_1d(dfix, g2 / d)?;
    let partials = params
        .v
        .iter()
        .map(|&vi| {
            let den = 1.0 - vi * g;
            scale / (den * den)
        })
        .collect();
    Ok(GradientVector {
        partials,
        contraction: dfix.norm(),
    })
}

/// Derivatives of the subordination fixed point `ψ(Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiGradients {
    pub psi: D2Point,
    pub d_a: Vec<D2Point>,
    pub d_sigma: D2Point,
    /// Spectral radius of `D_ψ Ψ_Z`.
    pub contraction: f64,
}

/// Every Jacobian of the SPN chain at a converged subordination point.
struct SpnJacobians {
    /// `D_B G_σ` at `ψ`.
    dgs_db: ComplexJacobian2,
    /// `∂G_σ/∂σ` at `ψ`.
    dgs_dsigma: D2Point,
    /// `(I − D_ψ Ψ)⁻¹`.
    psi_resolvent: ComplexJacobian2,
    /// `D_W h_a` at `W = h_σ(ψ) + Z`.
    dha_dw: ComplexJacobian2,
    /// `∂h_σ/∂σ` at `ψ`.
    dhs_dsigma: D2Point,
    /// `W` and `G_a(W)`.
    w: D2Point,
    ga: D2Point,
    contraction: f64,
}

fn spn_jacobians(
    zz: D2Point,
    a: &[f64],
    sigma: f64,
    p: usize,
    d: usize,
    psi: D2Point,
    gs: D2Point,
) -> Result<SpnJacobians> {
    let (pf, df) = (p as f64, d as f64);
    let zero = Complex64::new(0.0, 0.0);
    let s2 = sigma * sigma;

    // semicircular block: J = D_X (Z − σ²η(X))⁻¹ = diag(G²) σ² η
    let gs2 = gs * gs;
    let j_sigma = ComplexJacobian2([
        [zero, gs2.b1 * (s2 * pf / df)],
        [gs2.b2 * s2, zero],
    ]);
    let inner_factor = j_sigma.spectral_radius();
    let m = resolvent(&j_sigma, "semicircular block G_sigma")?;
    let dgs_db = m.compose(&ComplexJacobian2::diag(-gs2));
    let dgs_dsigma = m.apply(gs2 * eta2(gs, p, d) * (2.0 * sigma));

    let gs_inv2 = gs2.recip();
    let dhs_db = ComplexJacobian2::diag(-gs_inv2)
        .compose(&dgs_db)
        .minus(&ComplexJacobian2::identity());
    let dhs_dsigma = -(gs_inv2 * dgs_dsigma);

    // signal block at W
    let w = gs.recip() - psi + zz;
    let ga = spn_g_a(w, a, p, d)?;
    let prod = w.b1 * w.b2;
    let (mut s, mut t) = (zero, zero);
    for &ak in a {
        let inv = (prod - ak * ak).inv();
        s += inv;
        t += inv * inv;
    }
    let dga_dw = ComplexJacobian2([
        [-(w.b2 * w.b2) * t / df, (s - prod * t) / df],
        [
            (s - prod * t) / pf,
            -(w.b1 * w.b1) * t / pf - (pf - df) / (pf * w.b2 * w.b2),
        ],
    ]);
    let ga_inv2 = (ga * ga).recip();
    let dha_dw = ComplexJacobian2::diag(-ga_inv2)
        .compose(&dga_dw)
        .minus(&ComplexJacobian2::identity());

    let dpsi = dha_dw.compose(&dhs_db);
    let outer_factor = dpsi.spectral_radius();
    let psi_resolvent = resolvent(&dpsi, "SPN subordination")?;

    Ok(SpnJacobians {
        dgs_db,
        dgs_dsigma,
        psi_resolvent,
        dha_dw,
        dhs_dsigma,
        w,
        ga,
        contraction: inner_factor.max(outer_factor),
    })
}

impl SpnJacobians {
    /// `∂h_a/∂a_k` at `W`.
    fn dha_dak(&self, ak: f64, p: usize, d: usize) -> D2Point {
        let den = self.w.b1 * self.w.b2 - ak * ak;
        let coef = (den * den).inv() * (2.0 * ak);
        let dga = D2Point::new(self.w.b2 * coef / d as f64, self.w.b1 * coef / p as f64);
        -((self.ga * self.ga).recip() * dga)
    }
}

fn psi_gradients(
    zz: D2Point,
    a: &[f64],
    sigma: f64,
    p: usize,
    d: usize,
    sub: &Subordination,
) -> Result<(PsiGradients, SpnJacobians)> {
    let jac = spn_jacobians(zz, a, sigma, p, d, sub.psi, sub.g_sigma)?;
    let d_a = a
        .iter()
        .map(|&ak| jac.psi_resolvent.apply(jac.dha_dak(ak, p, d)))
        .collect();
    let d_sigma = jac.psi_resolvent.apply(jac.dha_dw.apply(jac.dhs_dsigma));
    Ok((
        PsiGradients {
            psi: sub.psi,
            d_a,
            d_sigma,
            contraction: jac.contraction,
        },
        jac,
    ))
}

/// `∂ψ/∂a_k` and `∂ψ/∂σ` at `Z`.
pub fn spn_psi_grads(
    z: D2Point,
    a: &[f64],
    sigma: f64,
    p: usize,
    d: usize,
    cfg: &FixedPointConfig,
) -> Result<PsiGradients> {
    let sub = crate::fde::spn_subordination(z, a, sigma, p, d, cfg)?;
    Ok(psi_gradients(z, a, sigma, p, d, &sub)?.0)
}

pub fn spn_grad(z: Complex64, params: &SpnParams, cfg: &FixedPointConfig) -> Result<GradientVector> {
    let (root, sub) = spn_forward(z, params, cfg, None, None)?;
    spn_grad_at(root, params, &sub)
}

/// SPN gradient from a converged forward pass at `√z = root`:
/// `∂G/∂a_k = [D G_σ · ∂ψ/∂a_k]₁ / √z` and
/// `∂G/∂σ = [D G_σ · ∂ψ/∂σ + ∂G_σ/∂σ]₁ / √z`.
pub fn spn_grad_at(root: Complex64, params: &SpnParams, sub: &Subordination) -> Result<GradientVector> {
    let (p, d) = (params.p, params.d());
    let zz = D2Point::splat(root);
    let (psi_grads, jac) = psi_gradients(zz, &params.a, params.sigma, p, d, sub)?;
    let scale = root.inv();
    let mut partials: Vec<Complex64> = psi_grads
        .d_a
        .iter()
        .map(|dpsi| jac.dgs_db.apply(*dpsi).b1 * scale)
        .collect();
    let total_sigma = jac.dgs_db.apply(psi_grads.d_sigma) + jac.dgs_dsigma;
    partials.push(total_sigma.b1 * scale);
    Ok(GradientVector {
        partials,
        contraction: psi_grads.contraction,
    })
}

/// Gradient of `G(z)` for either model.
pub fn fde_grad(z: Complex64, theta: &Theta, cfg: &FixedPointConfig) -> Result<GradientVector> {
    match theta {
        Theta::Cw(c) => cw_grad(z, c, cfg),
        Theta::Spn(s) => spn_grad(z, s, cfg),
    }
}

impl FdeEvaluator {
    /// Transform value and its parameter gradient from one forward solve.
    pub fn value_and_grad(
        &mut self,
        z: Complex64,
        theta: &Theta,
    ) -> Result<(TransformResult<Complex64>, GradientVector)> {
        match theta {
            Theta::Cw(c) => {
                let res = self.cw(z, c)?;
                let grad = cw_grad_at(c, res.value)?;
                Ok((res, grad))
            }
            Theta::Spn(s) => {
                let (root, sub) = self.spn(z, s)?;
                let grad = spn_grad_at(root, s, &sub)?;
                let res = TransformResult {
                    value: sub.g_sigma.b1 / root,
                    iterations: sub.inner_iterations,
                    residual: sub.residual,
                };
                Ok((res, grad))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fde::{h_a, spn_g_a, spn_subordination};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn implicit_solve_examples() {
        assert_eq!(implicit_solve_1d(c(0.0, 0.0), c(1.5, -2.0)).unwrap(), c(1.5, -2.0));
        assert!((implicit_solve_1d(c(0.5, 0.0), c(1.0, 0.0)).unwrap() - 2.0).norm() < 1e-15);
        assert!(matches!(
            implicit_solve_1d(c(0.6, 0.8), c(1.0, 0.0)),
            Err(Error::ContractionViolation { .. })
        ));
    }

    #[test]
    fn implicit_solve_matches_geometric_series() {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..50 {
            let q = c(next(), next()) * 0.6;
            let rhs = c(next(), next());
            let mut series = c(0.0, 0.0);
            let mut term = rhs;
            for _ in 0..400 {
                series += term;
                term *= q;
            }
            assert!((implicit_solve_1d(q, rhs).unwrap() - series).norm() < 1e-10);
        }
    }

    #[test]
    fn jacobian_algebra() {
        let m = ComplexJacobian2([[c(1.0, 2.0), c(0.5, 0.0)], [c(-1.0, 0.3), c(2.0, -1.0)]]);
        let inv = m.inverse().unwrap();
        let id = m.compose(&inv);
        assert!(id.minus(&ComplexJacobian2::identity()).0.iter().flatten().all(|x| x.norm() < 1e-14));
        let diag = ComplexJacobian2::diag(D2Point::new(c(0.5, 0.0), c(0.0, -0.25)));
        assert!((diag.spectral_radius() - 0.5).abs() < 1e-15);
        let zero = ComplexJacobian2([[c(0.0, 0.0); 2]; 2]);
        assert!(zero.inverse().is_err());
    }

    #[test]
    fn cw_gradient_at_point_mass() {
        let d = 4;
        let params = CwParams::new(vec![0.0; 5], d, 1.0).unwrap();
        let grad = cw_grad(c(0.0, 1.0), &params, &FixedPointConfig::with_tolerance(1e-12)).unwrap();
        for g in &grad.partials {
            assert!((g - c(-1.0 / d as f64, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn cw_gradient_symmetry() {
        let params = CwParams::new(vec![0.4, -0.3, 0.4, 0.9], 3, 1.0).unwrap();
        let grad = cw_grad(c(0.6, 0.1), &params, &FixedPointConfig::default()).unwrap();
        assert_eq!(grad.partials[0], grad.partials[2]);
        assert!(grad.contraction < 1.0);
    }

    #[test]
    fn psi_gradient_noiseless_closed_form() {
        // σ = 0: ψ(Z) = G_a(Z)⁻¹, so ∂ψ/∂a_k = −G_a⁻² ∂G_a/∂a_k = ∂h_a/∂a_k at Z.
        let (p, d) = (5, 3);
        let a = [0.4, -0.9, 0.7];
        let z = D2Point::new(c(0.3, 0.4), c(0.3, 0.4));
        let cfg = FixedPointConfig::with_tolerance(1e-13);
        let grads = spn_psi_grads(z, &a, 0.0, p, d, &cfg).unwrap();
        let h = 1e-6;
        for k in 0..d {
            let mut up = a;
            let mut dn = a;
            up[k] += h;
            dn[k] -= h;
            let fd = (spn_g_a(z, &up, p, d).unwrap().recip() - spn_g_a(z, &dn, p, d).unwrap().recip())
                * (0.5 / h);
            assert!((grads.d_a[k] - fd).norm() < 1e-7 * (1.0 + fd.norm()));
            let fd_h = (h_a(z, &up, p, d).unwrap() - h_a(z, &dn, p, d).unwrap()) * (0.5 / h);
            assert!((grads.d_a[k] - fd_h).norm() < 1e-7 * (1.0 + fd_h.norm()));
        }
        assert!(grads.d_sigma.norm() < 1e-12);
    }

    #[test]
    fn psi_gradient_equivariance() {
        let (p, d) = (6, 4);
        let z = D2Point::splat(c(0.8, 0.2));
        let cfg = FixedPointConfig::with_tolerance(1e-12);
        let a = [0.5, 0.2, 0.5, 0.9];
        let grads = spn_psi_grads(z, &a, 0.3, p, d, &cfg).unwrap();
        assert!((grads.d_a[0] - grads.d_a[2]).norm() < 1e-12);
        let swapped = [0.9, 0.2, 0.5, 0.5];
        let other = spn_psi_grads(z, &swapped, 0.3, p, d, &cfg).unwrap();
        assert!((grads.d_a[3] - other.d_a[0]).norm() < 1e-9);
        assert!(grads.contraction < 1.0);
    }

    #[test]
    fn spn_gradient_noiseless_closed_form() {
        let d = 5;
        let params = SpnParams::new(vec![1.0; d], 0.0, d, 1.2).unwrap();
        let z = c(0.4, 0.2);
        let grad = spn_grad(z, &params, &FixedPointConfig::with_tolerance(1e-13)).unwrap();
        let want = 2.0 / (d as f64 * (z - 1.0) * (z - 1.0));
        for g in &grad.partials[..d] {
            assert!((g - want).norm() < 1e-9 * want.norm(), "{g} vs {want}");
        }
        // σ enters only through σ², so ∂G/∂σ vanishes at σ = 0
        assert!(grad.partials[d].norm() < 1e-12);
    }

    #[test]
    fn spn_sigma_gradient_is_odd() {
        let cfg = FixedPointConfig::with_tolerance(1e-12);
        let plus = SpnParams::new(vec![0.0; 4], 0.3, 4, 1.2).unwrap();
        let minus = SpnParams { sigma: -0.3, ..plus.clone() };
        let z = c(0.5, 0.1);
        let gp = spn_grad(z, &plus, &cfg).unwrap();
        let gm = spn_grad(z, &minus, &cfg).unwrap();
        assert!((gp.partials[4] + gm.partials[4]).norm() < 1e-8 * gp.partials[4].norm());
        let sub = spn_subordination(D2Point::splat(z.sqrt()), &plus.a, 0.3, 4, 4, &cfg).unwrap();
        assert!(sub.residual <= 1e-12);
    }
}
