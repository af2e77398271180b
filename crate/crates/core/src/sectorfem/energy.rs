use serde::Serialize;

use crate::error::{domain, Result};
use crate::params::DerivedExponents;

use super::banded::BandedSpd;
use super::mesh::{DiscreteField, SectorMesh};

/// Condition imposed on the outer arc `rho = L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterBoundary {
    /// `u = 0`: the truncated space embeds in the full cone's space.
    Dirichlet,
    /// Natural condition. Constants become admissible and drive the
    /// discrete quotient to zero; kept for experiments only.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssembleOptions {
    pub eps_reg: f64,
    pub outer: OuterBoundary,
    /// Permit `sigma = 1`, where attainability on planar sectors is not known.
    pub allow_sigma_one: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            eps_reg: 1e-8,
            outer: OuterBoundary::Dirichlet,
            allow_sigma_one: false,
        }
    }
}

/// Discrete energy and mass on a sector mesh, in log-polar coordinates:
///
/// ```text
/// E(u) = int e^((2-p) rho) (u_rho^2 + u_phi^2 + eps^2)^(p/2)
/// M(u) = int e^(((sigma-1) q + 2) rho) |u|^q
/// ```
///
/// Bilinear elements, one midpoint quadrature point per cell.
#[derive(Debug, Clone)]
pub struct SectorQuotient {
    pub mesh: SectorMesh,
    pub p: f64,
    pub q: f64,
    pub eps_reg: f64,
    pub outer: OuterBoundary,
    energy_weight: Vec<f64>,
    mass_weight: Vec<f64>,
    /// Exponent of the mass weight, `(sigma-1) q + 2`.
    mass_power: f64,
    pub warnings: Vec<String>,
}

/// Builds the evaluators for `n = 2`.
pub fn assemble(
    mesh: SectorMesh,
    d: &DerivedExponents,
    opts: AssembleOptions,
) -> Result<SectorQuotient> {
    if d.params.n() != 2 {
        return domain(format!(
            "sector minimization is planar; got n = {}",
            d.params.n()
        ));
    }
    if !(opts.eps_reg >= 0.0) {
        return domain(format!("eps_reg = {} must be non-negative", opts.eps_reg));
    }
    let mut warnings = Vec::new();
    if d.params.is_sobolev() {
        if !opts.allow_sigma_one {
            return domain("sigma = 1 on a planar sector needs the explicit override");
        }
        warnings.push(
            "sigma = 1: existence of a minimizer on this sector is not established".to_string(),
        );
    }
    let (p, q) = (d.p(), d.q);
    let mass_power = d.hardy_power() + 2.0;
    let h = mesh.h_rho();
    let mut energy_weight = Vec::with_capacity(mesh.n_rho - 1);
    let mut mass_weight = Vec::with_capacity(mesh.n_rho - 1);
    for i in 0..mesh.n_rho - 1 {
        let mid = mesh.rho(i) + 0.5 * h;
        energy_weight.push(((2.0 - p) * mid).exp());
        mass_weight.push((mass_power * mid).exp());
    }
    Ok(SectorQuotient {
        mesh,
        p,
        q,
        eps_reg: opts.eps_reg,
        outer: opts.outer,
        energy_weight,
        mass_weight,
        mass_power,
        warnings,
    })
}

struct Cell {
    i: usize,
    corners: [usize; 4],
}

impl SectorQuotient {
    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let m = self.mesh;
        (0..m.n_rho - 1).flat_map(move |i| {
            (0..m.n_phi - 1).map(move |j| Cell {
                i,
                corners: [
                    m.index(i, j),
                    m.index(i + 1, j),
                    m.index(i, j + 1),
                    m.index(i + 1, j + 1),
                ],
            })
        })
    }

    fn check(&self, u: &[f64]) {
        assert_eq!(u.len(), self.mesh.nodes(), "field does not match the mesh");
    }

    /// Energy, accumulating its nodal gradient into `grad` when given.
    pub fn energy_with_grad(&self, u: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        self.check(u);
        let (hr, hp) = (self.mesh.h_rho(), self.mesh.h_phi());
        let area = hr * hp;
        let eps2 = self.eps_reg * self.eps_reg;
        let half_p = 0.5 * self.p;
        let mut total = 0.0;
        for cell in self.cells() {
            let [a, b, c, e] = cell.corners.map(|k| u[k]);
            let gr = (b + e - a - c) / (2.0 * hr);
            let gp = (c + e - a - b) / (2.0 * hp);
            let s = gr * gr + gp * gp + eps2;
            let wgt = area * self.energy_weight[cell.i];
            total += wgt * s.powf(half_p);
            if let Some(g) = grad.as_deref_mut() {
                if s > 0.0 {
                    // d/dg of s^(p/2) = p s^(p/2-1) g
                    let k = wgt * self.p * s.powf(half_p - 1.0);
                    let dr = k * gr / (2.0 * hr);
                    let dp = k * gp / (2.0 * hp);
                    g[cell.corners[0]] += -dr - dp;
                    g[cell.corners[1]] += dr - dp;
                    g[cell.corners[2]] += -dr + dp;
                    g[cell.corners[3]] += dr + dp;
                }
            }
        }
        total
    }

    /// Hessian of the energy, a band matrix of width `n_phi + 1`. Convex for
    /// `p > 1`, but singular on the hourglass mode that midpoint quadrature
    /// cannot see.
    pub(crate) fn energy_hessian(&self, u: &[f64]) -> BandedSpd {
        self.check(u);
        let (hr, hp) = (self.mesh.h_rho(), self.mesh.h_phi());
        let area = hr * hp;
        let eps2 = self.eps_reg * self.eps_reg;
        let p = self.p;
        let dr = [-1.0, 1.0, -1.0, 1.0].map(|v: f64| v / (2.0 * hr));
        let dp = [-1.0, -1.0, 1.0, 1.0].map(|v: f64| v / (2.0 * hp));
        let mut h = BandedSpd::zeros(self.mesh.nodes(), self.mesh.n_phi + 1);
        for cell in self.cells() {
            let vals = cell.corners.map(|k| u[k]);
            let gr: f64 = dr.iter().zip(&vals).map(|(a, b)| a * b).sum();
            let gp: f64 = dp.iter().zip(&vals).map(|(a, b)| a * b).sum();
            let s = gr * gr + gp * gp + eps2;
            if !(s > 0.0) {
                continue;
            }
            let c = area * self.energy_weight[cell.i] * p * s.powf(0.5 * p - 1.0);
            let k = (p - 2.0) / s;
            let (krr, kpp, krp) = (
                c * (1.0 + k * gr * gr),
                c * (1.0 + k * gp * gp),
                c * k * gr * gp,
            );
            for a in 0..4 {
                for b in 0..=a {
                    let v = krr * dr[a] * dr[b]
                        + kpp * dp[a] * dp[b]
                        + krp * (dr[a] * dp[b] + dp[a] * dr[b]);
                    h.add(cell.corners[a], cell.corners[b], v);
                }
            }
        }
        h
    }

    /// Weighted `q`-mass, accumulating its gradient into `grad` when given.
    pub fn mass_with_grad(&self, u: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        self.check(u);
        let area = self.mesh.h_rho() * self.mesh.h_phi();
        let q = self.q;
        let mut total = 0.0;
        for cell in self.cells() {
            let mid = 0.25 * cell.corners.iter().map(|&k| u[k]).sum::<f64>();
            let wgt = area * self.mass_weight[cell.i];
            let abs = mid.abs();
            total += wgt * abs.powf(q);
            if let Some(g) = grad.as_deref_mut() {
                let dm = 0.25 * wgt * q * abs.powf(q - 1.0) * mid.signum();
                for &k in &cell.corners {
                    g[k] += dm;
                }
            }
        }
        total
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.energy_with_grad(u, None)
    }

    pub fn mass(&self, u: &[f64]) -> f64 {
        self.mass_with_grad(u, None)
    }

    /// `Q_h = E / M^(p/q)`.
    pub fn quotient(&self, u: &[f64]) -> Result<f64> {
        let m = self.mass(u);
        if !(m > 0.0) {
            return domain("quotient of a field with zero mass");
        }
        Ok(self.energy(u) / m.powf(self.p / self.q))
    }

    /// `Q_h` and its gradient (overwrites `grad`).
    pub fn quotient_with_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let nodes = u.len();
        let mut ge = vec![0.0; nodes];
        let mut gm = vec![0.0; nodes];
        let e = self.energy_with_grad(u, Some(&mut ge));
        let m = self.mass_with_grad(u, Some(&mut gm));
        if !(m > 0.0) {
            return domain("quotient of a field with zero mass");
        }
        let ratio = self.p / self.q;
        let mp = m.powf(ratio);
        let qv = e / mp;
        for k in 0..nodes {
            grad[k] = ge[k] / mp - ratio * qv / m * gm[k];
        }
        Ok(qv)
    }

    /// `Q(u + du) - Q(u)`, computed cell by cell from differences so that
    /// changes far below the rounding level of `Q` itself stay resolved.
    pub fn quotient_change(&self, u: &[f64], du: &[f64]) -> Result<f64> {
        self.check(u);
        self.check(du);
        let (hr, hp) = (self.mesh.h_rho(), self.mesh.h_phi());
        let area = hr * hp;
        let eps2 = self.eps_reg * self.eps_reg;
        let (p, q) = (self.p, self.q);
        let (mut e, mut de, mut m, mut dm) = (0.0, 0.0, 0.0, 0.0);
        for cell in self.cells() {
            let [a, b, c, d] = cell.corners.map(|k| u[k]);
            let [da, db, dc, dd] = cell.corners.map(|k| du[k]);
            let gr = (b + d - a - c) / (2.0 * hr);
            let gp = (c + d - a - b) / (2.0 * hp);
            let dgr = (db + dd - da - dc) / (2.0 * hr);
            let dgp = (dc + dd - da - db) / (2.0 * hp);
            let s = gr * gr + gp * gp + eps2;
            let ds = (2.0 * gr + dgr) * dgr + (2.0 * gp + dgp) * dgp;
            let we = area * self.energy_weight[cell.i];
            if s > 0.0 {
                let base = s.powf(0.5 * p);
                e += we * base;
                de += we * base * (0.5 * p * (ds / s).ln_1p()).exp_m1();
            } else {
                de += we * ds.powf(0.5 * p);
            }

            let mid = 0.25 * (a + b + c + d);
            let dmid = 0.25 * (da + db + dc + dd);
            let wm = area * self.mass_weight[cell.i];
            let base = mid.abs().powf(q);
            m += wm * base;
            let ratio = dmid / mid;
            dm += wm
                * if mid != 0.0 && ratio > -1.0 {
                    base * (q * ratio.ln_1p()).exp_m1()
                } else {
                    (mid + dmid).abs().powf(q) - base
                };
        }
        if !(m > 0.0) || !(m + dm > 0.0) {
            return domain("quotient of a field with zero mass");
        }
        let qv = e / m.powf(p / q);
        Ok(qv * ((de / e).ln_1p() - p / q * (dm / m).ln_1p()).exp_m1())
    }

    /// Mass-weighted nodal measure used by the asymmetry statistic.
    pub fn node_mass_weight(&self, i: usize, j: usize) -> f64 {
        (self.mass_power * self.mesh.rho(i)).exp() * self.mesh.node_area(i, j)
    }

    /// Whether node `(i, *)` is held fixed.
    pub fn is_fixed_row(&self, i: usize) -> bool {
        self.outer == OuterBoundary::Dirichlet && i + 1 == self.mesh.n_rho
    }

    /// Zeroes the pinned outer row when Dirichlet.
    pub fn apply_constraints(&self, u: &mut [f64]) {
        if self.outer == OuterBoundary::Dirichlet {
            let m = self.mesh;
            for j in 0..m.n_phi {
                u[m.index(m.n_rho - 1, j)] = 0.0;
            }
        }
    }

    /// `||u - mean_phi(u)|| / ||u||` in the mass-weighted discrete `L2` norm.
    pub fn asymmetry(&self, field: &DiscreteField) -> f64 {
        let m = self.mesh;
        let mut dev = 0.0;
        let mut norm = 0.0;
        for i in 0..m.n_rho {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..m.n_phi {
                let wj = SectorMesh::edge_factor(j, m.n_phi);
                num += wj * field.at(i, j);
                den += wj;
            }
            let mean = num / den;
            for j in 0..m.n_phi {
                let w = self.node_mass_weight(i, j);
                let v = field.at(i, j);
                dev += w * (v - mean) * (v - mean);
                norm += w * v * v;
            }
        }
        if norm == 0.0 {
            0.0
        } else {
            (dev / norm).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_exponents, validate};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn planar() -> DerivedExponents {
        derive_exponents(validate(2, 1.5, 0.9).unwrap())
    }

    fn noise(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    #[test]
    fn rejects_other_dimensions_and_unflagged_sobolev() {
        let mesh = SectorMesh::new(5.0, 8.0, 16, 8).unwrap();
        let d3 = derive_exponents(validate(3, 2.0, 0.5).unwrap());
        assert!(assemble(mesh, &d3, AssembleOptions::default()).is_err());
        let d1 = derive_exponents(validate(2, 1.5, 1.0).unwrap());
        assert!(assemble(mesh, &d1, AssembleOptions::default()).is_err());
        let ok = assemble(
            mesh,
            &d1,
            AssembleOptions {
                allow_sigma_one: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ok.warnings.len(), 1);
    }

    #[test]
    fn constants_have_only_regularization_energy() {
        let mesh = SectorMesh::new(5.0, 8.0, 32, 16).unwrap();
        let ev = assemble(mesh, &planar(), AssembleOptions::default()).unwrap();
        let u = vec![1.0; mesh.nodes()];
        assert!(ev.energy(&u) < 1e-8);
        assert!(ev.mass(&u) > 0.0);
        let exact = assemble(
            mesh,
            &planar(),
            AssembleOptions {
                eps_reg: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(exact.energy(&u), 0.0);
    }

    #[test]
    fn quotient_is_scale_free_without_regularization() {
        let mesh = SectorMesh::new(5.0, 6.0, 24, 12).unwrap();
        let ev = assemble(
            mesh,
            &planar(),
            AssembleOptions {
                eps_reg: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        let u: Vec<f64> = noise(3, mesh.nodes()).iter().map(|v| v + 1.0).collect();
        let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let (a, b) = (ev.quotient(&u).unwrap(), ev.quotient(&u2).unwrap());
        assert!(((a - b) / a).abs() < 1e-12);
        assert!(ev.quotient(&vec![0.0; mesh.nodes()]).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let mesh = SectorMesh::new(5.0, 6.0, 12, 10).unwrap();
        let ev = assemble(
            mesh,
            &planar(),
            AssembleOptions {
                eps_reg: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
        for seed in 0..20u64 {
            let u: Vec<f64> = noise(seed, mesh.nodes()).iter().map(|v| v + 0.7).collect();
            let dir = noise(seed + 1000, mesh.nodes());
            let mut ge = vec![0.0; mesh.nodes()];
            let mut gm = vec![0.0; mesh.nodes()];
            ev.energy_with_grad(&u, Some(&mut ge));
            ev.mass_with_grad(&u, Some(&mut gm));
            let h = 1e-6;
            let shift =
                |s: f64| -> Vec<f64> { u.iter().zip(&dir).map(|(a, b)| a + s * b).collect() };
            let (up, um) = (shift(h), shift(-h));
            let fd_e = (ev.energy(&up) - ev.energy(&um)) / (2.0 * h);
            let fd_m = (ev.mass(&up) - ev.mass(&um)) / (2.0 * h);
            let an_e: f64 = ge.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let an_m: f64 = gm.iter().zip(&dir).map(|(a, b)| a * b).sum();
            assert!(
                ((an_e - fd_e) / an_e).abs() < 1e-5,
                "seed {seed}: {an_e} vs {fd_e}"
            );
            assert!(
                ((an_m - fd_m) / an_m).abs() < 1e-5,
                "seed {seed}: {an_m} vs {fd_m}"
            );
        }
    }

    #[test]
    fn quotient_change_matches_direct_difference() {
        let mesh = SectorMesh::new(5.0, 6.0, 12, 10).unwrap();
        let ev = assemble(mesh, &planar(), AssembleOptions::default()).unwrap();
        let u: Vec<f64> = noise(7, mesh.nodes()).iter().map(|v| v + 0.7).collect();
        let du: Vec<f64> = noise(8, mesh.nodes()).iter().map(|v| 0.05 * v).collect();
        let moved: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + b).collect();
        let direct = ev.quotient(&moved).unwrap() - ev.quotient(&u).unwrap();
        let stable = ev.quotient_change(&u, &du).unwrap();
        assert!(((stable - direct) / direct).abs() < 1e-10);
        // far below rounding of Q: still first-order accurate
        let tiny: Vec<f64> = du.iter().map(|v| 1e-12 * v).collect();
        let mut g = vec![0.0; mesh.nodes()];
        ev.quotient_with_grad(&u, &mut g).unwrap();
        let linear: f64 = g.iter().zip(&tiny).map(|(a, b)| a * b).sum();
        let small = ev.quotient_change(&u, &tiny).unwrap();
        assert!(((small - linear) / linear).abs() < 1e-6);
    }

    #[test]
    fn asymmetry_properties() {
        let mesh = SectorMesh::new(4.0, 5.0, 16, 12).unwrap();
        let ev = assemble(mesh, &planar(), AssembleOptions::default()).unwrap();
        let radial = DiscreteField::from_fn(mesh, |rho, _| (-rho * rho).exp());
        assert!(ev.asymmetry(&radial) < 1e-15);
        let bumpy = DiscreteField::from_fn(mesh, |rho, phi| {
            (-rho * rho).exp() * (1.0 + 0.3 * phi.cos())
        });
        let a = ev.asymmetry(&bumpy);
        assert!(a > 0.01);
        assert!((ev.asymmetry(&bumpy.scaled(-3.5)) - a).abs() < 1e-14);
    }
}
