//! The radial extremal family `U_a(r) = C a^((n-p)/p) w(a r)` with
//! `w(r) = (1 + r^beta)^(-gamma)`.
//!
//! Derivatives are carried in a scale-free form. With `s = (a r)^beta` and
//! `t = s / (1 + s)`, every derivative factors as
//!
//! ```text
//! U^(k)(r) = U(r) r^(-k) P_k(t)
//! P_1 = -gamma beta t
//! P_(k+1) = (P_1 - k) P_k + beta t (1 - t) dP_k/dt
//! ```
//!
//! so all quantities stay bounded in `t` and `ln U` can be evaluated at any
//! log-radius without overflow. `1 - t` is always computed directly, never
//! by subtraction.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::params::DerivedExponents;

/// `ln(1 + e^x)` without overflow or cancellation.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `(t, 1 - t)` for the logistic `t = 1 / (1 + e^-x)`.
pub(crate) fn logistic_pair(x: f64) -> (f64, f64) {
    if x >= 0.0 {
        let e = (-x).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = x.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// Scale-free derivative data of a radial profile at one log-radius.
#[derive(Debug, Clone, Copy)]
pub struct LocalDerivs {
    /// `ln r`.
    pub rho: f64,
    /// `ln U(r)`.
    pub ln_u: f64,
    /// `t = s/(1+s)`.
    pub t: f64,
    /// `1 - t`.
    pub tc: f64,
    /// `ln t`.
    pub ln_t: f64,
    /// `ln |P_1|`.
    pub ln_abs_p1: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl LocalDerivs {
    /// `P_2 / P_1`, finite even where `P_1 -> 0`.
    pub fn p2_over_p1(&self, d: &DerivedExponents) -> f64 {
        let gb = d.gamma * d.beta;
        -(gb * self.t + 1.0 - d.beta * self.tc)
    }

    /// `U(r)`, `U'(r)`, `U''(r)`, `U'''(r)`.
    pub fn values(&self) -> [f64; 4] {
        let u = self.ln_u.exp();
        let inv_r = (-self.rho).exp();
        [
            u,
            u * inv_r * self.p1,
            u * inv_r * inv_r * self.p2,
            u * inv_r * inv_r * inv_r * self.p3,
        ]
    }
}

fn local_derivs(d: &DerivedExponents, ln_scale: f64, ln_a: f64, rho: f64) -> LocalDerivs {
    let beta = d.beta;
    let gamma = d.gamma;
    let x = beta * (rho + ln_a);
    let (t, tc) = logistic_pair(x);
    let ln_t = -softplus(-x);
    let gb = gamma * beta;

    let p1 = -gb * t;
    let p2 = gb * t * (gb * t + 1.0 - beta * tc);
    let dp2 = 2.0 * gb * gb * t + gb - gb * beta * (tc - t);
    let p3 = (p1 - 2.0) * p2 + beta * t * tc * dp2;

    LocalDerivs {
        rho,
        ln_u: ln_scale - gamma * softplus(x),
        t,
        tc,
        ln_t,
        ln_abs_p1: gb.ln() + ln_t,
        p1,
        p2,
        p3,
    }
}

/// `w(r)`; defined at `r = 0` where it equals 1.
pub fn w(r: f64, d: &DerivedExponents) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return domain(format!("w evaluated at r = {r}"));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    Ok((-d.gamma * softplus(d.beta * r.ln())).exp())
}

/// `(w, w', w'', w''')` in closed form at `r > 0`.
pub fn w_derivs(r: f64, d: &DerivedExponents) -> Result<[f64; 4]> {
    if r <= 0.0 || !r.is_finite() {
        return domain(format!("derivatives of w need r > 0, got {r}"));
    }
    Ok(local_derivs(d, 0.0, 0.0, r.ln()).values())
}

/// Log-spaced radii, endpoints included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default check grid: 201 radii over `[1e-3, 1e3]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 201)
}

/// `(-Delta_p u, r^((sigma-1)q) u^(q-1))` for a radial `u` given by its
/// scale-free derivative data.
fn equation_sides(d: &DerivedExponents, l: &LocalDerivs) -> (f64, f64) {
    let p = d.p();
    // -Delta_p u = |u'|^(p-2) u r^-2 [-(p-1) P_2 - (n-1) P_1],  |u'| = u r^-1 |P_1|.
    // The two terms cancel as t -> 1. Expanding in 1 - t and using
    // gb = (n-p)/(p-1), the bracket is gb (p-1)(gb+beta) t (1-t).
    let gb = d.gamma * d.beta;
    let bracket = gb * (p - 1.0) * (gb + d.beta) * l.t * l.tc;
    let ln_mag = (p - 1.0) * l.ln_u - p * l.rho + (p - 2.0) * l.ln_abs_p1;
    let lhs = ln_mag.exp() * bracket;
    let rhs = (d.hardy_power() * l.rho + (d.q - 1.0) * l.ln_u).exp();
    (lhs, rhs)
}

/// The multiplier `lambda_w` for which `-Delta_p w = lambda_w r^((sigma-1)q) w^(q-1)`.
///
/// Returns the median of the pointwise ratio over `grid` together with its
/// maximum relative deviation from that median.
pub fn lagrange_multiplier(d: &DerivedExponents, grid: &[f64]) -> Result<(f64, f64)> {
    if grid.len() < 50 {
        return domain(format!(
            "multiplier grid needs at least 50 radii, got {}",
            grid.len()
        ));
    }
    let mut ratios = Vec::with_capacity(grid.len());
    for &r in grid {
        if r <= 0.0 || !r.is_finite() {
            return domain(format!("grid radius {r} is not positive"));
        }
        let l = local_derivs(d, 0.0, 0.0, r.ln());
        let (lhs, rhs) = equation_sides(d, &l);
        ratios.push(lhs / rhs);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    let max_dev = ratios
        .iter()
        .map(|x| ((x - median) / median).abs())
        .fold(0.0, f64::max);
    if !(median > 0.0) || !max_dev.is_finite() || max_dev > 1e-6 {
        return Err(Error::Numerical(format!(
            "multiplier ratio is not constant (median {median}, relative deviation {max_dev:e})"
        )));
    }
    Ok((median, max_dev))
}

/// A member of the radial solution family, normalized so that
/// `-Delta_p U = r^((sigma-1)q) U^(q-1)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RadialProfile {
    #[serde(skip)]
    pub derived: DerivedExponents,
    /// Amplitude `lambda_w^(1/(q-p))`.
    pub c: f64,
    /// Scale parameter.
    pub a: f64,
}

/// Builds `U_a` from the multiplier of `w`.
pub fn normalize(d: &DerivedExponents, lambda_w: f64, a: f64) -> RadialProfile {
    RadialProfile {
        derived: *d,
        c: lambda_w.powf(1.0 / (d.q - d.p())),
        a,
    }
}

impl RadialProfile {
    /// Multiplier on the default grid, then [`normalize`].
    pub fn new(d: &DerivedExponents, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return domain(format!("scale a = {a} must be positive"));
        }
        let (lambda_w, _) = lagrange_multiplier(d, &default_grid())?;
        Ok(normalize(d, lambda_w, a))
    }

    /// Same profile with a different amplitude (no longer a solution unless
    /// `c` is the normalized value).
    pub fn with_amplitude(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_scale(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    fn ln_scale(&self) -> f64 {
        self.c.ln() + self.derived.scale_power() * self.a.ln()
    }

    /// Derivative data at log-radius `rho = ln r`.
    pub fn at_log_radius(&self, rho: f64) -> LocalDerivs {
        local_derivs(&self.derived, self.ln_scale(), self.a.ln(), rho)
    }

    /// `U(r)` for `r >= 0`.
    pub fn u(&self, r: f64) -> Result<f64> {
        let scale = self.c * self.a.powf(self.derived.scale_power());
        Ok(scale * w(self.a * r, &self.derived)?)
    }

    /// `(U, U', U'', U''')` at `r > 0`.
    pub fn derivs(&self, r: f64) -> Result<[f64; 4]> {
        if r <= 0.0 || !r.is_finite() {
            return domain(format!("derivatives of U need r > 0, got {r}"));
        }
        Ok(self.at_log_radius(r.ln()).values())
    }
}

/// Worst pointwise relative residual of an identity over a grid.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    #[serde(skip)]
    pub grid: Vec<f64>,
    pub points: usize,
    pub max_rel_residual: f64,
    /// Radius of the worst residual.
    pub location: f64,
}

impl ResidualReport {
    pub(crate) fn from_pointwise(grid: &[f64], mut residual: impl FnMut(f64) -> f64) -> Self {
        let mut worst = 0.0;
        let mut location = grid.first().copied().unwrap_or(0.0);
        for &r in grid {
            let e = residual(r);
            // NaN counts as the worst possible residual
            if !(e <= worst) {
                worst = if e.is_nan() { f64::INFINITY } else { e };
                location = r;
            }
        }
        ResidualReport {
            grid: grid.to_vec(),
            points: grid.len(),
            max_rel_residual: worst,
            location,
        }
    }
}

/// Relative residual of `-Delta_p U = r^((sigma-1)q) U^(q-1)` on `grid`.
pub fn ode_residual(profile: &RadialProfile, grid: &[f64]) -> ResidualReport {
    let d = profile.derived;
    ResidualReport::from_pointwise(grid, |r| {
        let l = profile.at_log_radius(r.ln());
        let (lhs, rhs) = equation_sides(&d, &l);
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_exponents, validate};

    fn derived(n: u32, p: f64, sigma: f64) -> DerivedExponents {
        derive_exponents(validate(n, p, sigma).unwrap())
    }

    // Closed form of the multiplier obtained by differentiating the flux
    // r^(n-1)|w'|^(p-1) by hand: (gamma beta)^(p-1) (n-p)(1 + sigma q / n).
    fn multiplier_by_hand(d: &DerivedExponents) -> f64 {
        (d.gamma * d.beta).powf(d.p() - 1.0) * (d.n() - d.p()) * (1.0 + d.sigma() * d.q / d.n())
    }

    #[test]
    fn w_values() {
        let d = derived(3, 2.0, 1.0);
        assert_eq!(w(0.0, &d).unwrap(), 1.0);
        assert!((w(1.0, &d).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let [w0, w1, _, _] = w_derivs(1.0, &d).unwrap();
        assert!((w0 - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((w1 + 2f64.powf(-1.5)).abs() < 1e-15);
        assert!(w_derivs(0.0, &d).is_err());
        assert!(w(-1.0, &d).is_err());
    }

    #[test]
    fn derivatives_match_hand_formulas_for_sobolev_case() {
        // w = (1+r^2)^(-1/2): w' = -r(1+r^2)^(-3/2), w'' = (2r^2-1)(1+r^2)^(-5/2),
        // w''' = 3r(3-2r^2)(1+r^2)^(-7/2)
        let d = derived(3, 2.0, 1.0);
        for &r in &[0.01, 0.3, 1.0, 2.5, 40.0] {
            let s: f64 = 1.0 + r * r;
            let exact = [
                s.powf(-0.5),
                -r * s.powf(-1.5),
                (2.0 * r * r - 1.0) * s.powf(-2.5),
                3.0 * r * (3.0 - 2.0 * r * r) * s.powf(-3.5),
            ];
            let got = w_derivs(r, &d).unwrap();
            for k in 0..4 {
                assert!(
                    (got[k] - exact[k]).abs() <= 1e-13 * (1.0 + exact[k].abs()),
                    "k={k} r={r}: {} vs {}",
                    got[k],
                    exact[k]
                );
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        for d in [
            derived(3, 2.0, 1.0),
            derived(2, 1.5, 0.9),
            derived(4, 2.5, 0.3),
            derived(6, 1.3, 0.7),
        ] {
            for r in log_grid(0.1, 10.0, 41) {
                let got = w_derivs(r, &d).unwrap();
                let plus = w_derivs(r + h, &d).unwrap();
                let minus = w_derivs(r - h, &d).unwrap();
                for k in 1..4 {
                    let fd = (plus[k - 1] - minus[k - 1]) / (2.0 * h);
                    let err = (got[k] - fd).abs() / (1.0 + got[k].abs());
                    assert!(err < 1e-6, "{:?} r={r} k={k}: {} vs {fd}", d.params, got[k]);
                }
            }
        }
    }

    #[test]
    fn multiplier_sobolev_case_is_three() {
        let d = derived(3, 2.0, 1.0);
        let (lw, dev) = lagrange_multiplier(&d, &default_grid()).unwrap();
        assert!((lw - 3.0).abs() < 1e-10);
        assert!(dev < 1e-10);
    }

    #[test]
    fn multiplier_matches_hand_formula() {
        for (n, p, s) in [(2, 1.5, 0.9), (4, 2.5, 0.3), (6, 5.8, 0.7), (3, 1.3, 1.0)] {
            let d = derived(n, p, s);
            let (lw, dev) = lagrange_multiplier(&d, &default_grid()).unwrap();
            let exact = multiplier_by_hand(&d);
            assert!(lw > 0.0);
            assert!(dev < 1e-8);
            assert!(
                ((lw - exact) / exact).abs() < 1e-10,
                "{n} {p} {s}: {lw} vs {exact}"
            );
        }
    }

    #[test]
    fn multiplier_needs_enough_points() {
        let d = derived(3, 2.0, 1.0);
        assert!(lagrange_multiplier(&d, &log_grid(1e-3, 1e3, 10)).is_err());
    }

    #[test]
    fn normalization_constants() {
        let d = derived(3, 2.0, 1.0);
        let prof = normalize(&d, 3.0, 1.0);
        assert!((prof.c - 1.316074).abs() < 1e-6);
        assert_eq!(normalize(&d, 1.0, 1.0).c, 1.0);
        // prefactor a^((n-p)/p) at a = 2, n = 3, p = 2
        let two = normalize(&d, 1.0, 2.0);
        assert!((two.u(0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ode_residual_small_and_scale_covariant() {
        let d = derived(3, 2.0, 1.0);
        for a in [1.0, 5.0, 0.01] {
            let prof = RadialProfile::new(&d, a).unwrap();
            let rep = ode_residual(&prof, &default_grid());
            assert!(
                rep.max_rel_residual < 1e-8,
                "a={a}: {}",
                rep.max_rel_residual
            );
        }
    }

    #[test]
    fn ode_residual_detects_wrong_amplitude() {
        let d = derived(3, 2.0, 1.0);
        let prof = RadialProfile::new(&d, 1.0).unwrap();
        let bad = prof.with_amplitude(1.1 * prof.c);
        assert!(ode_residual(&bad, &default_grid()).max_rel_residual > 1e-2);
    }

    #[test]
    fn profile_derivs_agree_with_scaled_w() {
        let d = derived(2, 1.5, 0.9);
        let prof = RadialProfile::new(&d, 3.0).unwrap();
        let k = prof.c * 3f64.powf(d.scale_power());
        for r in [0.05, 0.7, 4.0] {
            let u = prof.derivs(r).unwrap();
            let wd = w_derivs(3.0 * r, &d).unwrap();
            for j in 0..4 {
                let expect = k * 3f64.powi(j as i32) * wd[j];
                assert!((u[j] - expect).abs() <= 1e-13 * expect.abs());
            }
        }
    }

    #[test]
    fn w_strictly_decreasing() {
        let d = derived(4, 3.8, 0.3);
        let g = log_grid(1e-4, 1e4, 300);
        let vals: Vec<f64> = g.iter().map(|&r| w(r, &d).unwrap()).collect();
        assert!(vals.windows(2).all(|p| p[1] < p[0]));
        assert!(g.iter().all(|&r| w_derivs(r, &d).unwrap()[1] < 0.0));
    }
}
