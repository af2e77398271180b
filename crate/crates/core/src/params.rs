//! Admissible parameter triples `(n, p, sigma)` and the scalar constants
//! derived from them.
//!
//! Every downstream module takes a [`DerivedExponents`] record instead of
//! recomputing exponents locally.

use serde::Serialize;

use crate::error::{domain, Result};

/// A validated parameter triple: dimension `n >= 2`, exponent `1 < p < n`,
/// Hardy parameter `0 < sigma <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeParams {
    n: u32,
    p: f64,
    sigma: f64,
}

impl ConeParams {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// True for the pure Sobolev case `sigma = 1`.
    pub fn is_sobolev(&self) -> bool {
        self.sigma == 1.0
    }
}

/// Checks the admissible range and returns the parameter triple.
pub fn validate(n: u32, p: f64, sigma: f64) -> Result<ConeParams> {
    if n < 2 {
        return domain(format!("dimension n = {n} must be at least 2"));
    }
    let nf = f64::from(n);
    if !p.is_finite() || p <= 1.0 || p >= nf {
        return domain(format!("exponent p = {p} must satisfy 1 < p < n = {n}"));
    }
    if !sigma.is_finite() || sigma <= 0.0 || sigma > 1.0 {
        return domain(format!("sigma = {sigma} must satisfy 0 < sigma <= 1"));
    }
    Ok(ConeParams { n, p, sigma })
}

/// Scalar constants shared by the radial profile, the second variation and
/// the breaking criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedExponents {
    #[serde(flatten)]
    pub params: ConeParams,
    /// Critical exponent `np / (n - sigma p)`.
    pub q: f64,
    /// Power of `r` in the separated direction `r^alpha U'(r)`.
    pub alpha: f64,
    /// Eigenvalue attached to that direction; always negative.
    pub lambda_star: f64,
    /// `-lambda_star`; breaking is certified when `lambda_1(D)` is below it.
    pub threshold: f64,
    /// Inner power of `r` in `w(r) = (1 + r^beta)^(-gamma)`.
    pub beta: f64,
    /// Outer exponent of `w`.
    pub gamma: f64,
}

impl DerivedExponents {
    pub fn n(&self) -> f64 {
        self.params.nf()
    }

    pub fn p(&self) -> f64 {
        self.params.p()
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma()
    }

    /// Exponent of the Hardy weight, `(sigma - 1) q`.
    pub fn hardy_power(&self) -> f64 {
        (self.sigma() - 1.0) * self.q
    }

    /// Exponent `(n - p)/p` of the scale prefactor in `U_a`.
    pub fn scale_power(&self) -> f64 {
        (self.n() - self.p()) / self.p()
    }
}

/// Derives every constant used downstream from a validated triple.
pub fn derive_exponents(params: ConeParams) -> DerivedExponents {
    let n = params.nf();
    let p = params.p();
    let sigma = params.sigma();

    let q = n * p / (n - sigma * p);
    let alpha = (1.0 - sigma) * q / p;
    let lambda_star = -(1.0 - alpha) * (n - 1.0 - alpha * (p - 1.0));
    let beta = sigma * (n - p) * q / (n * (p - 1.0));
    let gamma = n / (sigma * q);

    DerivedExponents {
        params,
        q,
        alpha,
        lambda_star,
        threshold: -lambda_star,
        beta,
        gamma,
    }
}

/// Second route to `alpha`, free of `q`: `(1 - sigma) n / (n - sigma p)`.
pub fn alpha_direct(params: &ConeParams) -> f64 {
    let n = params.nf();
    (1.0 - params.sigma()) * n / (n - params.sigma() * params.p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn validate_accepts_and_rejects() {
        assert!(validate(3, 2.0, 1.0).is_ok());
        assert!(validate(3, 3.0, 1.0).is_err());
        assert!(validate(2, 1.5, 0.0).is_err());
        assert!(validate(1, 0.5, 0.5).is_err());
        assert!(validate(3, 1.0, 0.5).is_err());
        assert!(validate(3, 2.0, 1.0 + 1e-12).is_err());
        assert!(validate(3, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn sobolev_three_two() {
        let d = derive_exponents(validate(3, 2.0, 1.0).unwrap());
        assert_eq!(d.q, 6.0);
        assert_eq!(d.alpha, 0.0);
        assert_eq!(d.lambda_star, -2.0);
        assert_eq!(d.threshold, 2.0);
        assert_eq!(d.beta, 2.0);
        assert_eq!(d.gamma, 0.5);
    }

    #[test]
    fn hardy_four_two_half() {
        let d = derive_exponents(validate(4, 2.0, 0.5).unwrap());
        assert!(close(d.q, 8.0 / 3.0, 1e-15));
        assert!(close(d.alpha, 2.0 / 3.0, 1e-15));
        assert!(close(d.lambda_star, -7.0 / 9.0, 1e-15));
        assert!(close(d.threshold, 7.0 / 9.0, 1e-15));
    }

    #[test]
    fn planar_example() {
        // q = 3/0.65, alpha = 0.1 q / 1.5, threshold = (1 - alpha)(1 - alpha/2)
        let d = derive_exponents(validate(2, 1.5, 0.9).unwrap());
        let q = 3.0 / 0.65;
        let alpha = 0.1 * q / 1.5;
        assert!(close(d.q, q, 1e-15));
        assert!(close(d.alpha, alpha, 1e-15));
        assert!(close(
            d.threshold,
            (1.0 - alpha) * (1.0 - alpha / 2.0),
            1e-14
        ));
        assert!((d.q - 4.615385).abs() < 1e-6);
        assert!((d.alpha - 0.307692).abs() < 1e-6);
        assert!((d.lambda_star + 0.585799).abs() < 1e-6);
    }

    fn admissible() -> impl Strategy<Value = ConeParams> {
        (2u32..=9, 0.001f64..0.999, 0.001f64..=1.0).prop_map(|(n, t, sigma)| {
            let p = 1.0 + t * (f64::from(n) - 1.0);
            validate(n, p, sigma).unwrap()
        })
    }

    proptest! {
        #[test]
        fn derived_invariants(params in admissible()) {
            let d = derive_exponents(params);
            prop_assert!(d.q > d.p());
            prop_assert!(d.alpha < 1.0);
            prop_assert!(d.lambda_star < 0.0);
            prop_assert!(d.threshold > 0.0 && d.threshold <= d.n() - 1.0 + 1e-12);
            prop_assert!(d.beta > 0.0);
            let gb = (d.n() - d.p()) / (d.p() - 1.0);
            prop_assert!(close(d.gamma * d.beta, gb, 1e-12));
            let a2 = alpha_direct(&params);
            prop_assert!((d.alpha - a2).abs() <= 1e-14 * d.alpha.abs());
        }

        #[test]
        fn threshold_is_n_minus_one_only_at_sigma_one(params in admissible()) {
            let d = derive_exponents(params);
            if params.is_sobolev() {
                prop_assert_eq!(d.threshold, d.n() - 1.0);
            } else {
                prop_assert!(d.threshold < d.n() - 1.0);
            }
        }
    }
}
