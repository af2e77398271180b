use crate::error::{Error, Result};

/// Symmetric positive definite band matrix, lower band stored row by row:
/// entry `(i, i - d)` for `d <= bw` lives at `i * (bw + 1) + d`.
#[derive(Debug, Clone)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
            factored: false,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn at(&self, i: usize, d: usize) -> usize {
        i * (self.bw + 1) + d
    }

    /// Adds `v` to `(i, j)` and, implicitly, to `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw);
        let k = self.at(i, i - j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.at(i, i - j)]
        }
    }

    /// Replaces row and column `i` with the identity.
    pub fn pin(&mut self, i: usize) {
        for d in 0..=self.bw {
            if d <= i {
                let k = self.at(i, d);
                self.data[k] = 0.0;
            }
            if i + d < self.n {
                let k = self.at(i + d, d);
                self.data[k] = 0.0;
            }
        }
        let k = self.at(i, 0);
        self.data[k] = 1.0;
    }

    /// Multiplies every diagonal entry by `factor`.
    pub fn scale_diagonal(&mut self, factor: f64) {
        for i in 0..self.n {
            let k = self.at(i, 0);
            self.data[k] *= factor;
        }
    }

    /// In-place Cholesky `A = L L^T`.
    pub fn factor(&mut self) -> Result<()> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[self.at(i, i - j)];
                let kl = lo.max(j.saturating_sub(bw));
                for k in kl..j {
                    s -= self.data[self.at(i, i - k)] * self.data[self.at(j, j - k)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::Numerical(format!(
                            "band matrix not positive definite at row {i}"
                        )));
                    }
                    let idx = self.at(i, 0);
                    self.data[idx] = s.sqrt();
                } else {
                    let idx = self.at(i, i - j);
                    self.data[idx] = s / self.data[self.at(j, 0)];
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves in place with the factor from [`factor`](Self::factor).
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored && b.len() == self.n);
        let bw = self.bw;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[self.at(i, i - k)] * b[k];
            }
            b[i] = s / self.data[self.at(i, 0)];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(self.n) {
                s -= self.data[self.at(k, k - i)] * b[k];
            }
            b[i] = s / self.data[self.at(i, 0)];
        }
    }
}
