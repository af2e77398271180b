//! Second variation of `J = (1/p) int |grad u|^p - (1/q) int r^((sigma-1)q) |u|^q`
//! at the radial solution `U`, along directions `h = f(r) g(x/|x|)` with
//! `f = r^alpha U'` and `g` the first nonconstant Neumann eigenfunction of
//! the spherical cross-section.
//!
//! With `W = |U'|^(p-2)` and `g` normalized to `||g||^2 = |D|`,
//!
//! ```text
//! D2J(U; h, h) = |D| ((p-1) A1 + lambda_1 A2 - (q-1) A3)
//! A1 = int W f'^2 r^(n-1),  A2 = int W f^2 r^(n-3),  A3 = int r^((sigma-1)q) U^(q-2) f^2 r^(n-1)
//! ```
//!
//! and `f` satisfies the pointwise equation
//! `-(p-1) div(W grad f) - (q-1) r^((sigma-1)q) U^(q-2) f = Lambda* W f / r^2`,
//! so that `(p-1) A1 - (q-1) A3 = Lambda* A2` after integrating by parts.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::params::DerivedExponents;
use crate::quad::{integrate_log_density, QuadConfig, RadialIntegrals};
use crate::radial::{LocalDerivs, RadialProfile, ResidualReport};
use crate::speceig::EigResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// The radial solution is not a minimizer.
    Breaks,
    /// The sufficient criterion does not apply.
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Breaks => "Breaks",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

/// `(f, f')` at `r > 0`.
pub fn f_derivs(r: f64, profile: &RadialProfile) -> Result<(f64, f64)> {
    if r <= 0.0 || !r.is_finite() {
        return domain(format!("f needs r > 0, got {r}"));
    }
    let alpha = profile.derived.alpha;
    let [_, u1, u2, _] = profile.derivs(r)?;
    let ra = r.powf(alpha);
    Ok((ra * u1, ra * u2 + alpha * ra / r * u1))
}

/// The three terms of the equation for `f` at one point, each divided by
/// the positive factor `W U r^(alpha-3)`: `(div term, mass term, Lambda* term)`.
fn f_equation_terms(d: &DerivedExponents, l: &LocalDerivs, lambda_star: f64) -> (f64, f64, f64) {
    let (n, p, q, alpha) = (d.n(), d.p(), d.q, d.alpha);
    let f1 = l.p2 + alpha * l.p1;
    let f2 = l.p3 + 2.0 * alpha * l.p2 + alpha * (alpha - 1.0) * l.p1;
    // W'/W = (p-2) U''/U' = (p-2) (P2/P1) / r
    let div = f2 + (p - 2.0) * l.p2_over_p1(d) * f1 + (n - 1.0) * f1;
    let term_div = -(p - 1.0) * div;

    // r^((sigma-1)q) U^(q-2) r^2 / W, in logs
    let ln_ratio = (d.hardy_power() + 2.0) * l.rho + (q - 2.0) * l.ln_u
        - (p - 2.0) * (l.ln_u - l.rho + l.ln_abs_p1);
    let term_mass = -(q - 1.0) * ln_ratio.exp() * l.p1;

    let term_lambda = lambda_star * l.p1;
    (term_div, term_mass, term_lambda)
}

fn f_equation_residual(profile: &RadialProfile, grid: &[f64], lambda_star: f64) -> ResidualReport {
    let d = profile.derived;
    ResidualReport::from_pointwise(grid, |r| {
        let l = profile.at_log_radius(r.ln());
        let (a, b, c) = f_equation_terms(&d, &l, lambda_star);
        (a + b - c).abs() / a.abs().max(b.abs()).max(c.abs())
    })
}

/// Pointwise residual of the equation satisfied by `f = r^alpha U'`.
pub fn proposition_residual(profile: &RadialProfile, grid: &[f64]) -> ResidualReport {
    f_equation_residual(profile, grid, profile.derived.lambda_star)
}

/// Same check with a caller-chosen eigenvalue; used to confirm the check
/// rejects wrong values.
pub fn proposition_residual_with(
    profile: &RadialProfile,
    grid: &[f64],
    lambda_star: f64,
) -> ResidualReport {
    f_equation_residual(profile, grid, lambda_star)
}

/// The three weighted integrals of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionIntegrals {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub err_est: f64,
}

impl DirectionIntegrals {
    /// `|(p-1)A1 - (q-1)A3 - Lambda* A2| / ((p-1)A1 + (q-1)A3 + |Lambda*| A2)`.
    pub fn identity_residual(&self, d: &DerivedExponents) -> f64 {
        let (p, q, ls) = (d.p(), d.q, d.lambda_star);
        let lhs = (p - 1.0) * self.a1 - (q - 1.0) * self.a3;
        (lhs - ls * self.a2).abs()
            / ((p - 1.0) * self.a1 + (q - 1.0) * self.a3 + ls.abs() * self.a2)
    }

    /// `D2J(U; h, h)` from the three integrals.
    pub fn d2j(&self, d: &DerivedExponents, lambda1: f64, d_measure: f64) -> f64 {
        d_measure * ((d.p() - 1.0) * self.a1 + lambda1 * self.a2 - (d.q - 1.0) * self.a3)
    }
}

/// Computes `A1`, `A2`, `A3` by log-variable quadrature.
pub fn direction_integrals(
    profile: &RadialProfile,
    cfg: &QuadConfig,
) -> Result<DirectionIntegrals> {
    let d = profile.derived;
    let (n, p, q, alpha) = (d.n(), d.p(), d.q, d.alpha);
    let shared = n - p + 2.0 * alpha - 2.0;

    // W f'^2 r^n = U^p r^(n-p+2 alpha-2) |P1|^p (P2/P1 + alpha)^2
    let a1 = integrate_log_density(
        |rho| {
            let l = profile.at_log_radius(rho);
            let g = l.p2_over_p1(&d) + alpha;
            (p * (l.ln_u + l.ln_abs_p1) + shared * rho).exp() * g * g
        },
        cfg,
    )?;
    // W f^2 r^(n-2) = U^p r^(n-p+2 alpha-2) |P1|^p
    let a2 = integrate_log_density(
        |rho| {
            let l = profile.at_log_radius(rho);
            (p * (l.ln_u + l.ln_abs_p1) + shared * rho).exp()
        },
        cfg,
    )?;
    // r^((sigma-1)q) U^(q-2) f^2 r^n = U^q r^((sigma-1)q + 2 alpha - 2 + n) P1^2
    let a3 = integrate_log_density(
        |rho| {
            let l = profile.at_log_radius(rho);
            (q * l.ln_u + 2.0 * l.ln_abs_p1 + (d.hardy_power() + 2.0 * alpha - 2.0 + n) * rho).exp()
        },
        cfg,
    )?;
    Ok(DirectionIntegrals {
        a1: a1.value,
        a2: a2.value,
        a3: a3.value,
        err_est: a1.err_est + a2.err_est + a3.err_est,
    })
}

/// Boundary flux `r^(n-1) W f f'` of the integration by parts, at `r = e^rho`.
pub fn boundary_flux(profile: &RadialProfile, rho: f64) -> f64 {
    let d = profile.derived;
    let l = profile.at_log_radius(rho);
    let (n, p, alpha) = (d.n(), d.p(), d.alpha);
    // r^(n-1) |U'|^(p-2) f f' = U^p r^(n-p+2alpha-2) |P1|^(p-2) P1 (P2 + alpha P1)
    let g = l.p2_over_p1(&d) + alpha;
    (p * (l.ln_u + l.ln_abs_p1) + (n - p + 2.0 * alpha - 2.0) * rho).exp() * g
}

#[derive(Debug, Clone, Serialize)]
pub struct SecondVariationReport {
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "A3")]
    pub a3: f64,
    pub identity_residual: f64,
    pub lambda1: f64,
    #[serde(rename = "Lambda_star")]
    pub lambda_star: f64,
    pub d_measure: f64,
    pub d2j: f64,
    /// `|D| (lambda_1 + Lambda*) A2`, the cross-check for `d2j`.
    pub d2j_shortcut: f64,
    pub verdict: Verdict,
}

/// Second variation along `h` for a given `lambda_1` and `|D|`.
pub fn second_variation(
    profile: &RadialProfile,
    lambda1: f64,
    d_measure: f64,
    cfg: &QuadConfig,
) -> Result<SecondVariationReport> {
    if !(lambda1 > 0.0) {
        return domain(format!("lambda_1 must be positive, got {lambda1}"));
    }
    if !(d_measure > 0.0) {
        return domain(format!("|D| must be positive, got {d_measure}"));
    }
    let ints = direction_integrals(profile, cfg)?;
    Ok(report_from(&profile.derived, &ints, lambda1, d_measure))
}

/// Assembles a report from integrals that are already available; `d2j` is
/// affine in `lambda_1`, so scans reuse one set of integrals.
pub fn report_from(
    d: &DerivedExponents,
    ints: &DirectionIntegrals,
    lambda1: f64,
    d_measure: f64,
) -> SecondVariationReport {
    SecondVariationReport {
        a1: ints.a1,
        a2: ints.a2,
        a3: ints.a3,
        identity_residual: ints.identity_residual(d),
        lambda1,
        lambda_star: d.lambda_star,
        d_measure,
        d2j: ints.d2j(d, lambda1, d_measure),
        d2j_shortcut: d_measure * (lambda1 + d.lambda_star) * ints.a2,
        verdict: breaking_verdict(lambda1, d),
    }
}

/// `D2J(U; U, U) = |D| ((p-1) - (q-1)) I_grad` on the Nehari manifold.
pub fn d2j_u_direction(integrals: &RadialIntegrals, d: &DerivedExponents, d_measure: f64) -> f64 {
    d_measure * ((d.p() - 1.0) - (d.q - 1.0)) * integrals.i_grad
}

/// `Breaks` iff `lambda_1 < -Lambda*` (strict).
pub fn breaking_verdict(lambda1: f64, d: &DerivedExponents) -> Verdict {
    if lambda1 < d.threshold {
        Verdict::Breaks
    } else {
        Verdict::Inconclusive
    }
}

/// Verdict for a computed eigenvalue: values within the result's resolution
/// of the threshold are not separated from it.
pub fn verdict_for(eig: &EigResult, d: &DerivedExponents) -> Verdict {
    breaking_verdict(eig.best() + eig.resolution, d)
}
