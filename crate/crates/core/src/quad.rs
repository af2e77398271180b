//! Radial quadrature on `(0, inf)` in the logarithmic variable `rho = ln r`,
//! and the quotient, Nehari and measure computations built on it.
//!
//! Integration runs over a central window `[-L0, L0]` followed by strips
//! `[L, 1.5 L]` appended independently on each side until the newest strip
//! is negligible. Every piece uses composite 10-point Gauss-Legendre panels
//! whose count doubles until two successive sums agree. Panel layout and
//! summation order are fixed, so results are bit-reproducible.

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::params::DerivedExponents;
use crate::radial::RadialProfile;

const GL_POINTS: usize = 10;

/// Nodes and weights of the Gauss-Legendre rule on `[-1, 1]`.
pub(crate) fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(m);
    let mf = m as f64;
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_m
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = mf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.reverse();
    rule
}

fn gl10() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_POINTS))
}

/// Tolerances and window limits for [`integrate_log`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadConfig {
    pub rel_tol: f64,
    /// Absolute floor added to both stopping tests. Normalized profiles can
    /// have integrals far below 1e-14, so the default is 0.
    pub abs_tol: f64,
    /// Initial half-width of the log window.
    pub l0: f64,
    /// Largest admissible half-width.
    pub l_max: f64,
    /// Panel-doubling rounds allowed per piece.
    pub max_refine: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            l0: 10.0,
            l_max: 4000.0,
            max_refine: 24,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol >= 0.0) {
            return domain("need rel_tol > 0 and abs_tol >= 0");
        }
        if !(self.l0 > 0.0 && self.l0 <= self.l_max) {
            return domain(format!(
                "need 0 < L0 = {} <= L_max = {}",
                self.l0, self.l_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub err_est: f64,
    /// Largest `|rho|` reached on either side.
    pub l_used: f64,
    pub panels: usize,
}

fn composite(g: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let mut s = 0.0;
        for &(x, wt) in gl10() {
            s += wt * g(mid + 0.5 * h * x);
        }
        sum += 0.5 * h * s;
    }
    sum
}

/// Integrates one piece by panel doubling.
fn refine_piece(
    g: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<(f64, f64, usize)> {
    let mut panels = ((b - a) / 2.0).ceil().max(1.0) as usize;
    let mut prev = composite(g, a, b, panels);
    for _ in 0..cfg.max_refine {
        panels *= 2;
        let cur = composite(g, a, b, panels);
        if !cur.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        let diff = (cur - prev).abs();
        if diff <= cfg.rel_tol * cur.abs() + cfg.abs_tol {
            return Ok((cur, diff, panels));
        }
        prev = cur;
    }
    Err(Error::NoConvergence {
        reason: format!(
            "panel refinement on [{a}, {b}] exhausted {} rounds",
            cfg.max_refine
        ),
        partial: prev,
        estimate: f64::NAN,
    })
}

/// `int_R g(rho) d rho` for an integrand already expressed in the log variable.
pub fn integrate_log_density(g: impl Fn(f64) -> f64, cfg: &QuadConfig) -> Result<QuadResult> {
    cfg.validate()?;
    let (mut value, mut err, mut panels) = refine_piece(&g, -cfg.l0, cfg.l0, cfg)?;
    let mut l_used: f64 = cfg.l0;

    for side in [1.0, -1.0] {
        let mut l = cfg.l0;
        loop {
            if l >= cfg.l_max {
                return Err(Error::NoConvergence {
                    reason: format!("tail still significant at |rho| = {l}"),
                    partial: value,
                    estimate: err,
                });
            }
            let next = (1.5 * l).min(cfg.l_max);
            let (a, b) = if side > 0.0 { (l, next) } else { (-next, -l) };
            let (strip, strip_err, strip_panels) = refine_piece(&g, a, b, cfg)?;
            value += strip;
            err += strip_err;
            panels += strip_panels;
            l = next;
            if strip.abs() <= cfg.abs_tol + cfg.rel_tol * value.abs() {
                // what lies beyond decays at least as fast as this strip
                err += strip.abs();
                break;
            }
        }
        l_used = l_used.max(l);
    }

    Ok(QuadResult {
        value,
        err_est: err,
        l_used,
        panels,
    })
}

/// `int_0^inf f(r) dr` through the substitution `r = e^rho`.
pub fn integrate_log(f: impl Fn(f64) -> f64, cfg: &QuadConfig) -> Result<QuadResult> {
    integrate_log_density(
        |rho| {
            let r = rho.exp();
            let v = f(r) * r;
            // beyond the range of f64 radii the integrand has long decayed
            if r == 0.0 || r.is_infinite() {
                0.0
            } else {
                v
            }
        },
        cfg,
    )
}

/// Energy and weighted mass of a radial profile, angular factor split off.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RadialIntegrals {
    /// `int |U'|^p r^(n-1) dr`.
    pub i_grad: f64,
    /// `int r^((sigma-1)q) U^q r^(n-1) dr`.
    pub i_mass: f64,
    /// `|I_grad - I_mass| / I_grad`.
    pub nehari_defect: f64,
    pub err_est: f64,
}

/// Computes [`RadialIntegrals`] for `profile`.
pub fn radial_integrals(profile: &RadialProfile, cfg: &QuadConfig) -> Result<RadialIntegrals> {
    let d = profile.derived;
    let (n, p, q) = (d.n(), d.p(), d.q);
    let grad = integrate_log_density(
        |rho| {
            let l = profile.at_log_radius(rho);
            (p * (l.ln_u + l.ln_abs_p1) + (n - p) * rho).exp()
        },
        cfg,
    )?;
    let mass = integrate_log_density(
        |rho| {
            let l = profile.at_log_radius(rho);
            (q * l.ln_u + (d.hardy_power() + n) * rho).exp()
        },
        cfg,
    )?;
    Ok(RadialIntegrals {
        i_grad: grad.value,
        i_mass: mass.value,
        nehari_defect: (grad.value - mass.value).abs() / grad.value,
        err_est: grad.err_est + mass.err_est,
    })
}

/// Quotient `|D|^(1-p/q) I_grad / I_mass^(p/q)` of a radial function on the
/// cone spanned by a spherical domain of measure `d_measure`.
pub fn quotient_radial(d: &DerivedExponents, integrals: &RadialIntegrals, d_measure: f64) -> f64 {
    let ratio = d.p() / d.q;
    d_measure.powf(1.0 - ratio) * integrals.i_grad / integrals.i_mass.powf(ratio)
}

/// Factor `t_u` placing `t_u u` on the Nehari manifold.
pub fn nehari_scale(i_grad: f64, i_mass: f64, d: &DerivedExponents) -> Result<f64> {
    if !(i_grad > 0.0) || !(i_mass > 0.0) {
        return domain(format!(
            "Nehari scaling needs positive integrals, got {i_grad}, {i_mass}"
        ));
    }
    Ok((i_grad / i_mass).powf(1.0 / (d.q - d.p())))
}

/// `J(t_u u) = |D| (t^p I_grad / p - t^q I_mass / q)` evaluated directly.
pub fn nehari_energy(
    i_grad: f64,
    i_mass: f64,
    d_measure: f64,
    d: &DerivedExponents,
) -> Result<f64> {
    let t = nehari_scale(i_grad, i_mass, d)?;
    let (p, q) = (d.p(), d.q);
    Ok(d_measure * (t.powf(p) * i_grad / p - t.powf(q) * i_mass / q))
}

/// `|S^(n-1)|` for `n >= 1`.
fn sphere_area(n: u32) -> f64 {
    // |S^(k+1)| = 2 pi / k |S^(k-1)|
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / f64::from(n - 2) * sphere_area(n - 2),
    }
}

/// `(|S^(n-1)|, |S^(n-1)_+|)`.
pub fn sphere_measures(n: u32) -> Result<(f64, f64)> {
    if n < 2 {
        return domain(format!("sphere measures need n >= 2, got {n}"));
    }
    let full = sphere_area(n);
    Ok((full, 0.5 * full))
}

/// `int_0^theta sin^k`, by the reduction formula.
fn sin_power_integral(k: u32, theta: f64) -> f64 {
    match k {
        0 => theta,
        1 => 1.0 - theta.cos(),
        _ => {
            let kf = f64::from(k);
            -theta.sin().powi(k as i32 - 1) * theta.cos() / kf
                + (kf - 1.0) / kf * sin_power_integral(k - 2, theta)
        }
    }
}

/// Measure of the geodesic cap `{theta < cap}` on `S^(n-1)`.
pub fn cap_measure(n: u32, cap: f64) -> Result<f64> {
    if n < 2 {
        return domain(format!("cap measure needs n >= 2, got {n}"));
    }
    if !(cap > 0.0 && cap < std::f64::consts::PI) {
        return domain(format!("cap opening {cap} must lie in (0, pi)"));
    }
    Ok(sphere_area(n - 1) * sin_power_integral(n - 2, cap))
}

/// Length of a planar arc of opening `theta0`.
pub fn arc_measure(theta0: f64) -> Result<f64> {
    if !(theta0 > 0.0 && theta0 < 2.0 * std::f64::consts::PI) {
        return domain(format!("arc opening {theta0} must lie in (0, 2 pi)"));
    }
    Ok(theta0)
}

/// For `sigma = 1`: true when `|D|` is strictly below the half-sphere, which
/// certifies that the cone constant lies below the half-space constant.
/// Larger domains are left undecided (`false`).
pub fn sufficient_condition_sigma1(n: u32, _p: f64, d_measure: f64) -> Result<bool> {
    let (_, half) = sphere_measures(n)?;
    Ok(d_measure < half)
}
