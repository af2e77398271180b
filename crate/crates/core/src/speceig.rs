//! First nonzero Neumann eigenvalue of the Laplace-Beltrami operator on
//! planar arcs (closed form) and geodesic caps of `S^(n-1)`.
//!
//! On a cap `{theta < cap}` separation in the azimuthal harmonic of degree
//! `m` leaves the weighted Sturm-Liouville problem
//!
//! ```text
//! -(s phi')' + m (m + n - 3) s phi / sin^2 = lambda s phi,   s = sin^(n-2)
//! ```
//!
//! with `phi'(cap) = 0`, and regularity at the pole (`phi(0) = 0` for
//! `m >= 1`). It is discretized with linear finite elements on a uniform
//! grid, which gives a symmetric tridiagonal pencil `K - lambda M` with `M`
//! positive definite. Eigenvalues come from bisection on the inertia of
//! `K - x M` (Sylvester's law), so the count is exact for every shift.
//!
//! Only `m = 0` (second eigenvalue; the first is the constant mode) and
//! `m = 1` enter the minimum: the potential grows with `m`, so higher
//! harmonics sit above `m = 1`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::quad::gauss_legendre;

/// Relative band inside which a discretized cap eigenvalue is not
/// distinguished from a threshold.
pub const CAP_RESOLUTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    AxisymmetricSecond,
    AzimuthalFirst,
    AnalyticArc,
    UserSupplied,
}

impl Branch {
    pub fn label(&self) -> &'static str {
        match self {
            Branch::AxisymmetricSecond => "axisymmetric-second",
            Branch::AzimuthalFirst => "azimuthal-first",
            Branch::AnalyticArc => "analytic-arc",
            Branch::UserSupplied => "user-supplied",
        }
    }
}

/// Geodesic cap of polar opening `cap` on `S^(n-1)`, `n >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapSpec {
    n: u32,
    cap: f64,
}

impl CapSpec {
    pub fn new(n: u32, cap: f64) -> Result<Self> {
        if n < 3 {
            return domain(format!("caps need n >= 3 (use an arc for n = 2), got {n}"));
        }
        if !(cap > 0.0 && cap < PI) {
            return domain(format!("cap opening {cap} must lie in (0, pi)"));
        }
        Ok(CapSpec { n, cap })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigResult {
    /// Value on the requested grid (exact for arcs and user input).
    pub lambda1: f64,
    pub branch: Branch,
    /// Number of grid cells; 0 when no discretization is involved.
    #[serde(rename = "N")]
    pub n_grid: usize,
    /// Richardson value from grids `N` and `2N`.
    pub lambda1_extrap: f64,
    pub err_est: f64,
    /// `log2` of successive differences over `N/2, N, 2N`.
    pub observed_order: Option<f64>,
    /// Half-width of the band around a threshold where no verdict is drawn.
    pub resolution: f64,
}

impl EigResult {
    /// The value downstream consumers should use.
    pub fn best(&self) -> f64 {
        self.lambda1_extrap
    }
}

/// `(pi / theta0)^2`, the first nonzero eigenvalue of `-g'' = lambda g` on
/// an arc with Neumann ends.
pub fn lambda1_arc(theta0: f64) -> Result<EigResult> {
    if !(theta0 > 0.0 && theta0 < 2.0 * PI) {
        return domain(format!("arc opening {theta0} must lie in (0, 2 pi)"));
    }
    let lam = (PI / theta0).powi(2);
    Ok(exact(lam, Branch::AnalyticArc))
}

/// Pass-through for a `lambda_1` computed elsewhere.
pub fn lambda1_user(value: f64) -> Result<EigResult> {
    if !(value > 0.0) || !value.is_finite() {
        return domain(format!("lambda_1 must be positive, got {value}"));
    }
    Ok(exact(value, Branch::UserSupplied))
}

fn exact(lam: f64, branch: Branch) -> EigResult {
    EigResult {
        lambda1: lam,
        branch,
        n_grid: 0,
        lambda1_extrap: lam,
        err_est: 0.0,
        observed_order: None,
        resolution: 0.0,
    }
}

/// Symmetric tridiagonal pencil `K - x M`.
#[derive(Debug, Clone)]
struct Pencil {
    k_diag: Vec<f64>,
    k_off: Vec<f64>,
    m_diag: Vec<f64>,
    m_off: Vec<f64>,
}

impl Pencil {
    fn len(&self) -> usize {
        self.k_diag.len()
    }

    /// Number of eigenvalues strictly below `x`: negative pivots of the
    /// `LDL^T` factorization of `K - x M`.
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..self.len() {
            let a = self.k_diag[i] - x * self.m_diag[i];
            d = if i == 0 {
                a
            } else {
                let b = self.k_off[i - 1] - x * self.m_off[i - 1];
                a - b * b / d
            };
            if d == 0.0 {
                d = -f64::EPSILON * (a.abs() + 1e-300);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// `k`-th smallest eigenvalue (0-based).
    fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len());
        let mut lo = -1.0;
        while self.count_below(lo) > k {
            lo *= 2.0;
        }
        let mut hi = 1.0;
        while self.count_below(hi) <= k {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Linear-element pencil for azimuthal degree `m` on `cells` uniform cells.
fn assemble_cap(spec: &CapSpec, m: u32, cells: usize) -> Pencil {
    let n = f64::from(spec.n);
    let h = spec.cap / cells as f64;
    let mf = f64::from(m);
    let potential = mf * (mf + n - 3.0);
    let rule = gauss_legendre(6);

    let nodes = cells + 1;
    let mut k_diag = vec![0.0; nodes];
    let mut k_off = vec![0.0; cells];
    let mut m_diag = vec![0.0; nodes];
    let mut m_off = vec![0.0; cells];

    for e in 0..cells {
        let left = e as f64 * h;
        let (mut kaa, mut kab, mut kbb) = (0.0, 0.0, 0.0);
        let (mut maa, mut mab, mut mbb) = (0.0, 0.0, 0.0);
        for &(x, wt) in &rule {
            let xi = 0.5 * (x + 1.0);
            let theta = left + xi * h;
            let weight = 0.5 * wt * h;
            let sn = theta.sin();
            let s = sn.powf(n - 2.0);
            let (pa, pb) = (1.0 - xi, xi);
            let grad2 = s / (h * h);
            let v = if potential > 0.0 {
                potential * sn.powf(n - 4.0)
            } else {
                0.0
            };
            kaa += weight * (grad2 + v * pa * pa);
            kab += weight * (-grad2 + v * pa * pb);
            kbb += weight * (grad2 + v * pb * pb);
            maa += weight * s * pa * pa;
            mab += weight * s * pa * pb;
            mbb += weight * s * pb * pb;
        }
        k_diag[e] += kaa;
        k_diag[e + 1] += kbb;
        k_off[e] += kab;
        m_diag[e] += maa;
        m_diag[e + 1] += mbb;
        m_off[e] += mab;
    }

    if m == 0 {
        Pencil {
            k_diag,
            k_off,
            m_diag,
            m_off,
        }
    } else {
        // phi(0) = 0: drop the pole node
        Pencil {
            k_diag: k_diag[1..].to_vec(),
            k_off: k_off[1..].to_vec(),
            m_diag: m_diag[1..].to_vec(),
            m_off: m_off[1..].to_vec(),
        }
    }
}

/// Lowest `count` eigenvalues of azimuthal degree `m` on `cells` cells.
pub fn cap_branch_eigenvalues(spec: &CapSpec, m: u32, cells: usize, count: usize) -> Vec<f64> {
    let pencil = assemble_cap(spec, m, cells);
    (0..count.min(pencil.len()))
        .map(|k| pencil.eigenvalue(k))
        .collect()
}

/// The eigenvalue a branch contributes: second for `m = 0`, first otherwise.
pub fn cap_branch_value(spec: &CapSpec, m: u32, cells: usize) -> f64 {
    let k = if m == 0 { 1 } else { 0 };
    assemble_cap(spec, m, cells).eigenvalue(k)
}

struct BranchRun {
    coarse: f64,
    mid: f64,
    fine: f64,
}

impl BranchRun {
    fn new(spec: &CapSpec, m: u32, cells: usize) -> Self {
        BranchRun {
            coarse: cap_branch_value(spec, m, cells / 2),
            mid: cap_branch_value(spec, m, cells),
            fine: cap_branch_value(spec, m, 2 * cells),
        }
    }

    fn extrapolated(&self) -> f64 {
        (4.0 * self.fine - self.mid) / 3.0
    }
}

/// `lambda_1` of a cap: minimum over the axisymmetric and first azimuthal
/// branches, each Richardson-extrapolated from `N` and `2N` cells.
pub fn lambda1_cap(spec: &CapSpec, cells: usize) -> Result<EigResult> {
    if cells < 64 {
        return domain(format!("cap grid needs at least 64 cells, got {cells}"));
    }
    let axi = BranchRun::new(spec, 0, cells);
    let azi = BranchRun::new(spec, 1, cells);
    let (run, branch) = if azi.extrapolated() <= axi.extrapolated() {
        (azi, Branch::AzimuthalFirst)
    } else {
        (axi, Branch::AxisymmetricSecond)
    };

    let extrap = run.extrapolated();
    let d_coarse = run.coarse - run.mid;
    let d_fine = run.mid - run.fine;
    let settled = d_fine.abs() <= 1e-12 * extrap.abs();
    let observed_order = if settled || d_coarse / d_fine <= 0.0 {
        None
    } else {
        Some((d_coarse / d_fine).log2())
    };
    if !settled {
        // second order predicts d_coarse = 4 d_fine
        let ratio = d_coarse / (4.0 * d_fine);
        if !(0.1..=10.0).contains(&ratio) {
            return Err(Error::NoConvergence {
                reason: format!(
                    "cap eigenvalue not in the asymptotic regime (grid differences {d_coarse:e}, {d_fine:e})"
                ),
                partial: extrap,
                estimate: d_fine.abs(),
            });
        }
    }

    let err_est = (extrap - run.fine).abs();
    Ok(EigResult {
        lambda1: run.mid,
        branch,
        n_grid: cells,
        lambda1_extrap: extrap,
        err_est,
        observed_order,
        resolution: (10.0 * err_est).max(CAP_RESOLUTION * extrap.abs()),
    })
}
