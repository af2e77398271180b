use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::params::DerivedExponents;
use crate::quad::{quotient_radial, radial_integrals, QuadConfig};
use crate::radial::RadialProfile;
use crate::secondvar::f_derivs;

use super::banded::BandedSpd;
use super::energy::{assemble, AssembleOptions, OuterBoundary, SectorQuotient};
use super::mesh::{DiscreteField, SectorMesh};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeConfig {
    pub eps_reg: f64,
    pub max_iter: usize,
    /// Stop once the relative gradient norm drops below this.
    pub grad_tol: f64,
    /// Amplitude of the angular perturbation, relative to `max U`.
    pub init_perturb: f64,
    pub backtrack: f64,
    pub armijo: f64,
    /// Number of stored L-BFGS pairs.
    pub memory: usize,
    /// Coarser regularizations to pass through before `eps_reg`.
    pub eps_schedule: Vec<f64>,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            eps_reg: 1e-8,
            max_iter: 5000,
            grad_tol: 1e-8,
            init_perturb: 0.05,
            backtrack: 0.5,
            armijo: 1e-4,
            memory: 12,
            eps_schedule: Vec::new(),
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_reg", self.eps_reg),
            ("grad_tol", self.grad_tol),
            ("init_perturb", self.init_perturb),
            ("backtrack", self.backtrack),
            ("armijo", self.armijo),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("{name} = {v} must be positive"));
            }
        }
        if self.backtrack >= 1.0 || self.armijo >= 1.0 {
            return domain("backtrack and armijo must be below 1");
        }
        if self.max_iter == 0 || self.memory == 0 {
            return domain("max_iter and memory must be positive");
        }
        if let Some(e) = self.eps_schedule.iter().find(|e| !(**e > 0.0)) {
            return domain(format!("eps_schedule entry {e} must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one descent run.
#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub quotient: f64,
    pub iterations: usize,
    pub grad_norm_rel: f64,
    pub converged: bool,
    /// The line search found no admissible step.
    pub stalled: bool,
    /// Quotient after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

impl DescentOutcome {
    /// Fails when the run ended with the gradient above `10 grad_tol`.
    pub fn check(&self, grad_tol: f64) -> Result<()> {
        if self.converged || self.grad_norm_rel <= 10.0 * grad_tol {
            return Ok(());
        }
        let why = if self.stalled {
            "line search stalled"
        } else {
            "iteration budget exhausted"
        };
        Err(Error::NoConvergence {
            reason: format!("{why} after {} steps", self.iterations),
            partial: self.quotient,
            estimate: self.grad_norm_rel,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A scale-invariant objective restricted to a normalization surface.
trait Descent {
    /// Value, with the gradient written into `g`.
    fn value_grad(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64>;
    /// `f(x + dx) - f(x)` without cancellation.
    fn change(&self, x: &[f64], dx: &[f64]) -> Result<f64>;
    /// Scale factor that puts `x` back on the surface.
    fn normalizer(&self, x: &[f64]) -> Result<f64>;
    /// Zeroes pinned entries.
    fn constrain(&self, x: &mut [f64]);
    /// Applies an approximate inverse Hessian at `x` to `v`.
    fn precondition(&mut self, x: &[f64], v: &mut [f64]) -> Result<()>;
    /// Scale-free stationarity measure.
    fn rel_norm(&self, x: &[f64], g: &[f64], value: f64) -> f64;
}

/// L-BFGS with Armijo backtracking and a preconditioner in place of the
/// scaled identity. Every trial point is rescaled onto the surface; the
/// sufficient-decrease test uses [`Descent::change`] so that progress below
/// the rounding level of the value is still seen.
fn lbfgs(
    x0: Vec<f64>,
    obj: &mut dyn Descent,
    cfg: &MinimizeConfig,
) -> Result<(Vec<f64>, DescentOutcome)> {
    let len = x0.len();
    let mut x = x0;
    obj.constrain(&mut x);
    let c = obj.normalizer(&x)?;
    x.iter_mut().for_each(|v| *v *= c);
    let mut g = vec![0.0; len];
    let mut value = obj.value_grad(&x, &mut g)?;
    let mut trace = vec![value];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut gnorm = obj.rel_norm(&x, &g, value);
    let mut stalled = false;
    let mut trial = vec![0.0; len];
    let mut step = vec![0.0; len];
    let mut g_new = vec![0.0; len];

    while gnorm > cfg.grad_tol && iterations < cfg.max_iter {
        // two-loop recursion
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yk)| *d -= a * yk);
            alphas.push(a);
        }
        obj.precondition(&x, &mut dir)?;
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, sk)| *d += (a - b) * sk);
        }
        obj.constrain(&mut dir);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = g.iter().map(|v| -v).collect();
            obj.precondition(&x, &mut dir)?;
            obj.constrain(&mut dir);
            slope = dot(&g, &dir);
        }

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for k in 0..len {
                trial[k] = x[k] + t * dir[k];
            }
            if let Ok(c) = obj.normalizer(&trial) {
                // step = c (x + t d) - x, with c - 1 kept exact
                let cm1 = c - 1.0;
                for k in 0..len {
                    step[k] = cm1 * x[k] + c * t * dir[k];
                }
                if let Ok(delta) = obj.change(&x, &step) {
                    if delta <= cfg.armijo * t * slope {
                        accepted = true;
                        break;
                    }
                }
            }
            t *= cfg.backtrack;
        }
        if !accepted {
            stalled = true;
            break;
        }
        for k in 0..len {
            trial[k] = x[k] + step[k];
        }
        let v = obj.value_grad(&trial, &mut g_new)?;
        iterations += 1;

        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &y);
        if sy > 1e-12 * dot(&step, &step).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((step.clone(), y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        value = v;
        trace.push(value);
        gnorm = obj.rel_norm(&x, &g, value);
    }

    let converged = gnorm <= cfg.grad_tol;
    Ok((
        x,
        DescentOutcome {
            quotient: value,
            iterations,
            grad_norm_rel: gnorm,
            converged,
            stalled,
            trace,
        },
    ))
}

/// `|grad Q|_{L2} |u|_{L2} / Q` with the nodal trapezoid areas, so that the
/// measure does not drift with the mesh size.
fn relative_grad_norm(mesh: &SectorMesh, u: &[f64], g: &[f64], q: f64) -> f64 {
    let (mut gg, mut uu) = (0.0, 0.0);
    for i in 0..mesh.n_rho {
        for j in 0..mesh.n_phi {
            let k = mesh.index(i, j);
            let a = mesh.node_area(i, j);
            gg += g[k] * g[k] / a;
            uu += a * u[k] * u[k];
        }
    }
    (gg * uu).sqrt() / q.abs()
}

/// Energy Hessian with the pinned row removed and the hourglass mode lifted.
fn energy_preconditioner(ev: &SectorQuotient, u: &[f64]) -> BandedSpd {
    let mesh = ev.mesh;
    let mut h = ev.energy_hessian(u);
    h.scale_diagonal(1.0 + 1e-8);
    if ev.outer == OuterBoundary::Dirichlet {
        for j in 0..mesh.n_phi {
            h.pin(mesh.index(mesh.n_rho - 1, j));
        }
    }
    h
}

fn unit_mass_factor(ev: &SectorQuotient, u: &[f64]) -> Result<f64> {
    let m = ev.mass(u);
    if !(m > 0.0 && m.is_finite()) {
        return domain("field has no mass");
    }
    Ok(m.powf(-1.0 / ev.q))
}

struct FullField<'a> {
    ev: &'a SectorQuotient,
}

impl Descent for FullField<'_> {
    fn value_grad(&mut self, u: &[f64], g: &mut [f64]) -> Result<f64> {
        let q = self.ev.quotient_with_grad(u, g)?;
        self.ev.apply_constraints(g);
        Ok(q)
    }

    fn change(&self, u: &[f64], du: &[f64]) -> Result<f64> {
        self.ev.quotient_change(u, du)
    }

    fn normalizer(&self, u: &[f64]) -> Result<f64> {
        unit_mass_factor(self.ev, u)
    }

    fn constrain(&self, u: &mut [f64]) {
        self.ev.apply_constraints(u);
    }

    fn precondition(&mut self, u: &[f64], v: &mut [f64]) -> Result<()> {
        let mut h = energy_preconditioner(self.ev, u);
        h.factor()?;
        h.solve(v);
        Ok(())
    }

    fn rel_norm(&self, u: &[f64], g: &[f64], q: f64) -> f64 {
        relative_grad_norm(&self.ev.mesh, u, g, q)
    }
}

/// Fields constant in `phi`, one unknown per `rho` row.
struct RowField<'a> {
    ev: &'a SectorQuotient,
    full_g: Vec<f64>,
}

impl RowField<'_> {
    fn expand(&self, v: &[f64]) -> Vec<f64> {
        let n_phi = self.ev.mesh.n_phi;
        v.iter()
            .flat_map(|&vi| std::iter::repeat_n(vi, n_phi))
            .collect()
    }
}

impl Descent for RowField<'_> {
    fn value_grad(&mut self, v: &[f64], g: &mut [f64]) -> Result<f64> {
        let n_phi = self.ev.mesh.n_phi;
        let u = self.expand(v);
        let q = self.ev.quotient_with_grad(&u, &mut self.full_g)?;
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = self.full_g[i * n_phi..(i + 1) * n_phi].iter().sum();
        }
        self.constrain(g);
        Ok(q)
    }

    fn change(&self, v: &[f64], dv: &[f64]) -> Result<f64> {
        self.ev.quotient_change(&self.expand(v), &self.expand(dv))
    }

    fn normalizer(&self, v: &[f64]) -> Result<f64> {
        unit_mass_factor(self.ev, &self.expand(v))
    }

    fn constrain(&self, v: &mut [f64]) {
        if self.ev.outer == OuterBoundary::Dirichlet {
            v[self.ev.mesh.n_rho - 1] = 0.0;
        }
    }

    fn precondition(&mut self, v: &[f64], x: &mut [f64]) -> Result<()> {
        let mesh = self.ev.mesh;
        let full = energy_preconditioner(self.ev, &self.expand(v));
        // S^T H S with S copying a row value across phi
        let mut h = BandedSpd::zeros(mesh.n_rho, 1);
        for k in 0..full.len() {
            for dk in 0..=full.bandwidth().min(k) {
                let (i, i2) = (k / mesh.n_phi, (k - dk) / mesh.n_phi);
                if i - i2 > 1 {
                    continue;
                }
                let val = full.get(k, k - dk);
                // a stored off-diagonal entry stands for (k, k-dk) and (k-dk, k)
                h.add(i, i2, if dk > 0 && i == i2 { 2.0 * val } else { val });
            }
        }
        if self.ev.is_fixed_row(mesh.n_rho - 1) {
            h.pin(mesh.n_rho - 1);
        }
        h.factor()?;
        h.solve(x);
        Ok(())
    }

    fn rel_norm(&self, v: &[f64], g: &[f64], q: f64) -> f64 {
        // g holds row sums of the nodal gradient; a row spans theta0
        let mesh = self.ev.mesh;
        let (mut gg, mut vv) = (0.0, 0.0);
        for i in 0..v.len() {
            let a = mesh.h_rho() * mesh.theta0 * SectorMesh::edge_factor(i, v.len());
            gg += g[i] * g[i] / a;
            vv += a * v[i] * v[i];
        }
        (gg * vv).sqrt() / q.abs()
    }
}

/// Minimizes the discrete quotient from `init`, renormalizing to unit mass
/// after every step.
pub fn minimize(
    ev: &SectorQuotient,
    init: &DiscreteField,
    cfg: &MinimizeConfig,
) -> Result<(DiscreteField, DescentOutcome)> {
    let (u, out) = descend(ev, init, cfg)?;
    out.check(cfg.grad_tol)?;
    Ok((u, out))
}

/// [`minimize`] without the convergence check.
pub fn descend(
    ev: &SectorQuotient,
    init: &DiscreteField,
    cfg: &MinimizeConfig,
) -> Result<(DiscreteField, DescentOutcome)> {
    cfg.validate()?;
    if init.mesh != ev.mesh {
        return domain("initial field lives on a different mesh");
    }
    let (u, out) = lbfgs(init.values.clone(), &mut FullField { ev }, cfg)?;
    Ok((
        DiscreteField {
            mesh: ev.mesh,
            values: u,
        },
        out,
    ))
}

/// Lowest discrete quotient over fields constant in `phi`, starting from
/// `start`'s angular mean. Convergence is reported, not enforced.
pub fn best_radial(
    ev: &SectorQuotient,
    start: &DiscreteField,
    cfg: &MinimizeConfig,
) -> Result<(DiscreteField, DescentOutcome)> {
    cfg.validate()?;
    let mesh = ev.mesh;
    let row_mean: Vec<f64> = (0..mesh.n_rho)
        .map(|i| (0..mesh.n_phi).map(|j| start.at(i, j)).sum::<f64>() / mesh.n_phi as f64)
        .collect();
    let mut rows = RowField {
        ev,
        full_g: vec![0.0; mesh.nodes()],
    };
    let (v, out) = lbfgs(row_mean, &mut rows, cfg)?;
    Ok((
        DiscreteField {
            mesh,
            values: rows.expand(&v),
        },
        out,
    ))
}

/// Nodal interpolant of `U(e^rho)`, constant in `phi`. Under a Dirichlet
/// outer arc the value at `rho = L` is subtracted.
pub fn radial_reference(
    mesh: SectorMesh,
    profile: &RadialProfile,
    outer: OuterBoundary,
) -> DiscreteField {
    let shift = match outer {
        OuterBoundary::Dirichlet => profile.at_log_radius(mesh.l).ln_u.exp(),
        OuterBoundary::Neumann => 0.0,
    };
    DiscreteField::from_fn(mesh, |rho, _| profile.at_log_radius(rho).ln_u.exp() - shift)
}

/// Radial reference plus `delta max(U) f(r) cos(pi phi / theta0) / max|f|`,
/// where `f = r^alpha U'` is the radial factor of the negative direction.
pub fn perturbed_init(
    ev: &SectorQuotient,
    profile: &RadialProfile,
    delta: f64,
) -> Result<DiscreteField> {
    let mesh = ev.mesh;
    let base = radial_reference(mesh, profile, ev.outer);
    let f_row = (0..mesh.n_rho)
        .map(|i| f_derivs(mesh.rho(i).exp(), profile).map(|(f, _)| f))
        .collect::<Result<Vec<f64>>>()?;
    let f_max = f_row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let u_max = base.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(f_max > 0.0) {
        return domain("perturbation profile vanishes on the mesh");
    }
    let amp = delta * u_max / f_max;
    let mut field = base;
    for i in 0..mesh.n_rho {
        for j in 0..mesh.n_phi {
            let k = mesh.index(i, j);
            field.values[k] += amp * f_row[i] * (PI * mesh.phi(j) / mesh.theta0).cos();
        }
    }
    ev.apply_constraints(&mut field.values);
    Ok(field)
}

#[derive(Debug, Clone, Serialize)]
pub struct BreakingExperimentReport {
    pub mesh: SectorMesh,
    pub eps_reg: f64,
    pub outer_boundary: OuterBoundary,
    /// Continuum quotient of the radial extremal on the full sector.
    pub q_continuum: f64,
    /// Discrete quotient of the radial interpolant.
    #[serde(rename = "Q_radial_h")]
    pub q_radial_h: f64,
    /// Lowest discrete quotient among angularly constant fields.
    #[serde(rename = "Q_radial_best_h")]
    pub q_radial_best_h: f64,
    #[serde(rename = "Q_init_h")]
    pub q_init_h: f64,
    #[serde(rename = "Q_min_h")]
    pub q_min_h: f64,
    /// `(Q_radial_h - Q_min_h) / Q_radial_h`.
    pub delta_q_rel: f64,
    /// `(Q_radial_best_h - Q_min_h) / Q_radial_best_h`.
    pub delta_q_best_rel: f64,
    pub consistency_rel: f64,
    pub asym: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm_rel: f64,
    pub warnings: Vec<String>,
}

/// Full constructive run on a planar sector: radial references, perturbed
/// (or supplied) start, descent, statistics.
pub fn run_breaking_experiment(
    d: &DerivedExponents,
    mesh: SectorMesh,
    cfg: &MinimizeConfig,
    opts: AssembleOptions,
    init: Option<DiscreteField>,
) -> Result<(DiscreteField, BreakingExperimentReport)> {
    cfg.validate()?;
    let opts = AssembleOptions {
        eps_reg: cfg.eps_reg,
        ..opts
    };
    let ev = assemble(mesh, d, opts)?;
    let profile = RadialProfile::new(d, 1.0)?;

    let ints = radial_integrals(&profile, &QuadConfig::default())?;
    let q_continuum = quotient_radial(d, &ints, mesh.theta0);
    let reference = radial_reference(mesh, &profile, ev.outer);
    let q_radial_h = ev.quotient(&reference.values)?;
    let (_, radial_best) = best_radial(&ev, &reference, cfg)?;

    let start = match init {
        Some(f) => f,
        None => perturbed_init(&ev, &profile, cfg.init_perturb)?,
    };
    let q_init_h = ev.quotient(&start.values)?;

    let mut field = start;
    for &eps in &cfg.eps_schedule {
        let coarse = assemble(
            mesh,
            d,
            AssembleOptions {
                eps_reg: eps,
                ..opts
            },
        )?;
        // warm starts only; convergence is judged at the final eps
        field = descend(&coarse, &field, cfg)?.0;
    }
    let (field, out) = minimize(&ev, &field, cfg)?;

    let q_min_h = out.quotient;
    let report = BreakingExperimentReport {
        mesh,
        eps_reg: cfg.eps_reg,
        outer_boundary: ev.outer,
        q_continuum,
        q_radial_h,
        q_radial_best_h: radial_best.quotient,
        q_init_h,
        q_min_h,
        delta_q_rel: (q_radial_h - q_min_h) / q_radial_h,
        delta_q_best_rel: (radial_best.quotient - q_min_h) / radial_best.quotient,
        consistency_rel: (q_radial_h - q_continuum) / q_continuum,
        asym: ev.asymmetry(&field),
        iterations: out.iterations,
        converged: out.converged,
        grad_norm_rel: out.grad_norm_rel,
        warnings: ev.warnings.clone(),
    };
    Ok((field, report))
}
