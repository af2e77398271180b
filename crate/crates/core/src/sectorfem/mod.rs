//! Direct minimization of the quotient on planar sectors.
//!
//! In log-polar coordinates `rho = ln r` the sector becomes the rectangle
//! `[-L, L] x [0, theta0]`, with `dx = e^(2 rho) d rho d phi` and
//! `|grad u|^2 = e^(-2 rho) (u_rho^2 + u_phi^2)`.

mod banded;
mod energy;
mod mesh;
mod minimize;

pub use energy::{assemble, AssembleOptions, OuterBoundary, SectorQuotient};
pub use mesh::{DiscreteField, SectorMesh};
pub use minimize::{
    best_radial, descend, minimize, perturbed_init, radial_reference, run_breaking_experiment,
    BreakingExperimentReport, DescentOutcome, MinimizeConfig,
};
