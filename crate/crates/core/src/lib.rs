//! Numerical toolkit for symmetry breaking of Hardy-Sobolev minimizers on
//! cones `{t x : x in D, t > 0}` spanned by a spherical domain `D`.
//!
//! * [`params`]: admissible `(n, p, sigma)` and derived exponents.
//! * [`radial`]: the explicit radial extremal family and its residuals.
//! * [`quad`]: log-variable quadrature, quotient, Nehari and measures.
//! * [`speceig`]: first nonzero Neumann eigenvalue of arcs and caps.
//! * [`secondvar`]: second variation along `r^alpha U'(r) g(x/|x|)` and the
//!   breaking verdict.
//! * [`sectorfem`]: direct minimization of the quotient on planar sectors.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod params;
pub mod quad;
pub mod radial;
pub mod secondvar;
pub mod sectorfem;
pub mod speceig;

pub use error::{Error, Result};
pub use params::{derive_exponents, validate, ConeParams, DerivedExponents};
pub use quad::{QuadConfig, QuadResult, RadialIntegrals};
pub use radial::{RadialProfile, ResidualReport};
pub use secondvar::{SecondVariationReport, Verdict};
pub use sectorfem::{BreakingExperimentReport, DiscreteField, MinimizeConfig, SectorMesh};
pub use speceig::{Branch, CapSpec, EigResult};
