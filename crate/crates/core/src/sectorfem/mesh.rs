use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Uniform grid on the log-polar rectangle `[-L, L] x [0, theta0]` of a
/// planar sector. Node `(i, j)` sits at `rho = -L + i h_rho`,
/// `phi = j h_phi`; values are stored row-major by `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorMesh {
    pub theta0: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub n_rho: usize,
    pub n_phi: usize,
}

impl SectorMesh {
    pub fn new(theta0: f64, l: f64, n_rho: usize, n_phi: usize) -> Result<Self> {
        if !(theta0 > 0.0 && theta0 < 2.0 * std::f64::consts::PI) {
            return domain(format!("sector angle {theta0} must lie in (0, 2 pi)"));
        }
        if !(l >= 4.0) || !l.is_finite() {
            return domain(format!("log-radius half-width L = {l} must be at least 4"));
        }
        if n_rho < 8 || n_phi < 8 {
            return domain(format!("grid {n_rho} x {n_phi} is below the 8 x 8 minimum"));
        }
        Ok(SectorMesh {
            theta0,
            l,
            n_rho,
            n_phi,
        })
    }

    pub fn nodes(&self) -> usize {
        self.n_rho * self.n_phi
    }

    pub fn h_rho(&self) -> f64 {
        2.0 * self.l / (self.n_rho - 1) as f64
    }

    pub fn h_phi(&self) -> f64 {
        self.theta0 / (self.n_phi - 1) as f64
    }

    pub fn rho(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.h_rho()
    }

    pub fn phi(&self, j: usize) -> f64 {
        j as f64 * self.h_phi()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    /// Trapezoid weight of a node along one axis.
    pub(crate) fn edge_factor(k: usize, len: usize) -> f64 {
        if k == 0 || k + 1 == len {
            0.5
        } else {
            1.0
        }
    }

    /// Trapezoid area of the dual cell of node `(i, j)`.
    pub fn node_area(&self, i: usize, j: usize) -> f64 {
        self.h_rho()
            * self.h_phi()
            * Self::edge_factor(i, self.n_rho)
            * Self::edge_factor(j, self.n_phi)
    }
}

/// Nodal values over a [`SectorMesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub mesh: SectorMesh,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(mesh: SectorMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nodes() {
            return domain(format!(
                "field has {} values, mesh has {} nodes",
                values.len(),
                mesh.nodes()
            ));
        }
        Ok(DiscreteField { mesh, values })
    }

    pub fn from_fn(mesh: SectorMesh, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(mesh.nodes());
        for i in 0..mesh.n_rho {
            for j in 0..mesh.n_phi {
                values.push(f(mesh.rho(i), mesh.phi(j)));
            }
        }
        DiscreteField { mesh, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.mesh.index(i, j)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        DiscreteField {
            mesh: self.mesh,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// CSV: a `theta0,L,Nrho,Nphi` header, its values, then one line of
    /// `Nphi` values per `rho` row.
    pub fn to_csv(&self) -> String {
        let m = &self.mesh;
        let mut out = String::new();
        out.push_str("theta0,L,Nrho,Nphi\n");
        let _ = writeln!(out, "{},{},{},{}", m.theta0, m.l, m.n_rho, m.n_phi);
        for i in 0..m.n_rho {
            let row: Vec<String> = (0..m.n_phi)
                .map(|j| format!("{:e}", self.at(i, j)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Domain(format!("field CSV: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["theta0", "L", "Nrho", "Nphi"] {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let meta = lines
            .next()
            .ok_or_else(|| bad("missing mesh line".into()))?;
        let meta: Vec<&str> = meta.split(',').map(str::trim).collect();
        if meta.len() != 4 {
            return Err(bad("mesh line needs 4 entries".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
        let mesh = SectorMesh::new(num(meta[0])?, num(meta[1])?, int(meta[2])?, int(meta[3])?)?;

        let mut values = Vec::with_capacity(mesh.nodes());
        let mut rows = 0;
        for line in lines {
            let row: Vec<f64> = line
                .split(',')
                .map(|s| num(s.trim()))
                .collect::<Result<_>>()?;
            if row.len() != mesh.n_phi {
                return Err(bad(format!(
                    "row {rows} has {} values, expected {}",
                    row.len(),
                    mesh.n_phi
                )));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != mesh.n_rho {
            return Err(bad(format!("{rows} rows, expected {}", mesh.n_rho)));
        }
        DiscreteField::new(mesh, values)
    }
}
