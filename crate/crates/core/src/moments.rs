//! Mergeable first and second moments of `(a_x, a_p, X, P)` sample tuples.

use nalgebra::Matrix4;

use crate::error::{Error, Result};

/// Streaming mean and co-moment accumulator (Chan et al. pairwise update).
///
/// Merging is associative up to floating-point rounding, so frames can be reduced in any
/// grouping; the simulation always merges in frame order to stay bit-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    n: u64,
    mean: [f64; 4],
    m2: [[f64; 4]; 4],
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_columns(ax: &[f64], ap: &[f64], bx: &[f64], bp: &[f64]) -> Result<Self> {
        let n = ax.len();
        if ap.len() != n || bx.len() != n || bp.len() != n {
            return Err(Error::InvalidArgument(
                "sample columns differ in length".into(),
            ));
        }
        let mut m = Moments::new();
        if n == 0 {
            return Ok(m);
        }
        // Two passes: exact means first, then centred co-moments.
        let cols = [ax, ap, bx, bp];
        let mut mean = [0.0; 4];
        for (k, c) in cols.iter().enumerate() {
            mean[k] = c.iter().sum::<f64>() / n as f64;
        }
        let mut m2 = [[0.0; 4]; 4];
        for i in 0..n {
            let d = [
                ax[i] - mean[0],
                ap[i] - mean[1],
                bx[i] - mean[2],
                bp[i] - mean[3],
            ];
            for r in 0..4 {
                for c in r..4 {
                    m2[r][c] += d[r] * d[c];
                }
            }
        }
        for r in 0..4 {
            for c in 0..r {
                m2[r][c] = m2[c][r];
            }
        }
        m.n = n as u64;
        m.mean = mean;
        m.m2 = m2;
        Ok(m)
    }

    /// Moments from `n`, the column sums and the matrix of raw product sums.
    pub fn from_raw_sums(n: u64, sum: [f64; 4], sum_sq: [[f64; 4]; 4]) -> Self {
        if n == 0 {
            return Moments::new();
        }
        let nf = n as f64;
        let mean = sum.map(|s| s / nf);
        let m2 =
            std::array::from_fn(|r| std::array::from_fn(|c| sum_sq[r][c] - nf * mean[r] * mean[c]));
        Moments { n, mean, m2 }
    }

    pub fn push(&mut self, v: [f64; 4]) {
        self.n += 1;
        let n = self.n as f64;
        let mut delta = [0.0; 4];
        for k in 0..4 {
            delta[k] = v[k] - self.mean[k];
            self.mean[k] += delta[k] / n;
        }
        for r in 0..4 {
            for c in 0..4 {
                self.m2[r][c] += delta[r] * (v[c] - self.mean[c]);
            }
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let mut delta = [0.0; 4];
        for k in 0..4 {
            delta[k] = other.mean[k] - self.mean[k];
        }
        for r in 0..4 {
            for c in 0..4 {
                self.m2[r][c] += other.m2[r][c] + delta[r] * delta[c] * na * nb / n;
            }
        }
        for k in 0..4 {
            self.mean[k] += delta[k] * nb / n;
        }
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> [f64; 4] {
        self.mean
    }

    /// Unbiased sample covariance, ordered `(a_x, a_p, X, P)`.
    pub fn covariance(&self) -> Result<Matrix4<f64>> {
        if self.n < 2 {
            return Err(Error::Estimation(format!(
                "need at least two samples for a covariance, have {}",
                self.n
            )));
        }
        let d = (self.n - 1) as f64;
        Ok(Matrix4::from_fn(|r, c| self.m2[r][c] / d))
    }

    /// Moments of the linearly transformed samples `T v`.
    pub fn transformed(&self, t: &Matrix4<f64>) -> Moments {
        let m2 = Matrix4::from_fn(|r, c| self.m2[r][c]);
        let m2 = t * m2 * t.transpose();
        let mean = t * nalgebra::Vector4::from(self.mean);
        Moments {
            n: self.n,
            mean: [mean[0], mean[1], mean[2], mean[3]],
            m2: std::array::from_fn(|r| std::array::from_fn(|c| 0.5 * (m2[(r, c)] + m2[(c, r)]))),
        }
    }
}
