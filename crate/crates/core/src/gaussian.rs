//! Gaussian-state linear algebra on covariance matrices in shot-noise units.
//!
//! Quadratures are interleaved, `(x_1, p_1, x_2, p_2, ...)`, and the vacuum has
//! unit variance. Every routine here is a pure function of its inputs.

use nalgebra::{DMatrix, Matrix2};

use crate::error::{invalid, Error, Result};

/// Tolerance below which a symplectic eigenvalue is treated as exactly 1.
pub const PURE_TOLERANCE: f64 = 1e-9;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const SYMPLECTIC_TOLERANCE: f64 = 1e-10;

/// Which quadrature a homodyne detector reads out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }
}

/// The standard symplectic form for `n` modes in interleaved ordering.
pub fn omega(n_modes: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

fn mode_indices(modes: &[usize]) -> Vec<usize> {
    modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect()
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Covariance matrix of an N-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMat {
    n_modes: usize,
    m: DMatrix<f64>,
}

impl CovMat {
    /// Validates symmetry, positive definiteness and the uncertainty relation.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        if dim == 0 || !dim.is_multiple_of(2) || m.ncols() != dim {
            return Err(invalid(format!(
                "covariance matrix must be square with even positive dimension, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(
                "covariance matrix has non-finite entries".into(),
            ));
        }
        let scale = m.amax().max(1.0);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::InvalidState(format!(
                        "covariance matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let mut m = m;
        symmetrize(&mut m);
        let gamma = CovMat {
            n_modes: dim / 2,
            m,
        };
        let nu = gamma.symplectic_eigenvalues()?;
        if let Some(&bad) = nu.iter().find(|&&v| v < 1.0 - PURE_TOLERANCE) {
            return Err(Error::InvalidState(format!(
                "uncertainty relation violated: symplectic eigenvalue {bad}"
            )));
        }
        Ok(gamma)
    }

    /// Wraps a matrix produced by exact Gaussian operations, skipping validation.
    pub(crate) fn from_raw(mut m: DMatrix<f64>) -> Self {
        symmetrize(&mut m);
        CovMat {
            n_modes: m.nrows() / 2,
            m,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// Variance of quadrature `q` of `mode`.
    pub fn variance(&self, mode: usize, q: Quadrature) -> f64 {
        let i = 2 * mode + q.offset();
        self.m[(i, i)]
    }

    /// The 2x2 block of a single mode.
    pub fn mode_block(&self, mode: usize) -> Matrix2<f64> {
        let i = 2 * mode;
        Matrix2::new(
            self.m[(i, i)],
            self.m[(i, i + 1)],
            self.m[(i + 1, i)],
            self.m[(i + 1, i + 1)],
        )
    }

    /// Two-mode squeezed vacuum with arm variance `v`.
    pub fn two_mode_squeezed(v: f64) -> Result<Self> {
        if !(v >= 1.0) {
            return Err(invalid(format!("TMSV variance must be >= 1, got {v}")));
        }
        let c = (v * v - 1.0).sqrt();
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(4, 4, &[
            v,   0.0, c,   0.0,
            0.0, v,   0.0, -c,
            c,   0.0, v,   0.0,
            0.0, -c,  0.0, v,
        ]);
        Ok(CovMat::from_raw(m))
    }

    /// Single-mode thermal state with variance `v` in both quadratures.
    pub fn thermal(v: f64) -> Result<Self> {
        if !(v >= 1.0) {
            return Err(invalid(format!("thermal variance must be >= 1, got {v}")));
        }
        Ok(CovMat::from_raw(DMatrix::from_diagonal_element(2, 2, v)))
    }

    /// Direct sum: the modes of `other` are appended after those of `self`.
    pub fn append(&self, other: &CovMat) -> CovMat {
        let a = 2 * self.n_modes;
        let b = 2 * other.n_modes;
        let mut m = DMatrix::zeros(a + b, a + b);
        m.view_mut((0, 0), (a, a)).copy_from(&self.m);
        m.view_mut((a, a), (b, b)).copy_from(&other.m);
        CovMat::from_raw(m)
    }

    /// Appends `extra` vacuum modes.
    pub fn append_vacuum(&self, extra: usize) -> CovMat {
        if extra == 0 {
            return self.clone();
        }
        self.append(&CovMat::from_raw(DMatrix::identity(2 * extra, 2 * extra)))
    }

    /// Returns `S γ Sᵀ`.
    pub fn apply(&self, s: &Symplectic) -> Result<CovMat> {
        if s.n_modes != self.n_modes {
            return Err(invalid(format!(
                "symplectic acts on {} modes but state has {}",
                s.n_modes, self.n_modes
            )));
        }
        Ok(CovMat::from_raw(&s.m * &self.m * s.m.transpose()))
    }

    /// Single-mode Gaussian channel on `mode`: `X γ Xᵀ + Y` with X and Y acting on that mode.
    pub fn apply_mode_channel(
        &self,
        mode: usize,
        x: &Matrix2<f64>,
        y: &Matrix2<f64>,
    ) -> Result<CovMat> {
        self.check_mode(mode)?;
        let dim = 2 * self.n_modes;
        let mut xf = DMatrix::<f64>::identity(dim, dim);
        let i = 2 * mode;
        xf.view_mut((i, i), (2, 2)).copy_from(x);
        let mut out = &xf * &self.m * xf.transpose();
        for r in 0..2 {
            for c in 0..2 {
                out[(i + r, i + c)] += y[(r, c)];
            }
        }
        Ok(CovMat::from_raw(out))
    }

    /// Reduced state on `keep`, in the order given.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<CovMat> {
        if keep.is_empty() {
            return Err(invalid("partial trace must keep at least one mode"));
        }
        for (k, &m) in keep.iter().enumerate() {
            self.check_mode(m)?;
            if keep[..k].contains(&m) {
                return Err(invalid(format!("mode {m} listed twice in partial trace")));
            }
        }
        let idx = mode_indices(keep);
        Ok(CovMat::from_raw(submatrix(&self.m, &idx, &idx)))
    }

    fn split(&self, mode: usize) -> Result<(DMatrix<f64>, DMatrix<f64>, Matrix2<f64>)> {
        self.check_mode(mode)?;
        if self.n_modes < 2 {
            return Err(invalid(
                "cannot condition a single-mode state on its only mode",
            ));
        }
        let rest: Vec<usize> = (0..self.n_modes).filter(|&k| k != mode).collect();
        let ri = mode_indices(&rest);
        let mi = [2 * mode, 2 * mode + 1];
        Ok((
            submatrix(&self.m, &ri, &ri),
            submatrix(&self.m, &ri, &mi),
            self.mode_block(mode),
        ))
    }

    /// State of the other modes after a homodyne measurement of `q` on `mode`.
    pub fn condition_homodyne(&self, mode: usize, q: Quadrature) -> Result<CovMat> {
        let (a, c, b) = self.split(mode)?;
        let k = q.offset();
        let pivot = b[(k, k)];
        if !(pivot > 0.0) {
            return Err(Error::NumericalDomain(format!(
                "measured quadrature variance {pivot} is not positive"
            )));
        }
        let col = c.column(k);
        Ok(CovMat::from_raw(a - (col * col.transpose()) / pivot))
    }

    /// State of the other modes after a heterodyne measurement on `mode`.
    pub fn condition_heterodyne(&self, mode: usize) -> Result<CovMat> {
        let (a, c, b) = self.split(mode)?;
        let inv = (b + Matrix2::identity())
            .try_inverse()
            .ok_or_else(|| Error::NumericalDomain("heterodyne block is singular".into()))?;
        let inv = DMatrix::from_fn(2, 2, |i, j| inv[(i, j)]);
        Ok(CovMat::from_raw(a - &c * inv * c.transpose()))
    }

    /// Symplectic spectrum in descending order, one value per mode.
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        // With M = γ^{1/2} Ω γ^{1/2} antisymmetric, MᵀM has every ν_k² twice.
        let eig = self.m.clone().symmetric_eigen();
        if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| !(l > 0.0)) {
            return Err(Error::InvalidState(format!(
                "covariance matrix not positive definite (eigenvalue {bad})"
            )));
        }
        let root_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let root = &eig.eigenvectors * root_diag * eig.eigenvectors.transpose();
        let mm = &root * omega(self.n_modes) * &root;
        let sq = (mm.transpose() * &mm).symmetric_eigen().eigenvalues;
        let mut vals: Vec<f64> = sq.iter().map(|v| v.max(0.0).sqrt()).collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        Ok(vals.into_iter().step_by(2).collect())
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self) -> Result<f64> {
        let nu = self.symplectic_eigenvalues()?;
        let mut s = 0.0;
        for v in nu {
            if v < 1.0 - PURE_TOLERANCE {
                return Err(Error::InvalidState(format!(
                    "symplectic eigenvalue {v} below 1"
                )));
            }
            s += g_function(v);
        }
        Ok(s)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes {
            return Err(invalid(format!(
                "mode {mode} out of range for {}-mode state",
                self.n_modes
            )));
        }
        Ok(())
    }
}

/// The vacuum state on `n_modes` modes.
pub fn vacuum_state(n_modes: usize) -> Result<CovMat> {
    if n_modes == 0 {
        return Err(invalid("vacuum state needs at least one mode"));
    }
    Ok(CovMat::from_raw(DMatrix::identity(
        2 * n_modes,
        2 * n_modes,
    )))
}

/// Entropy of a thermal mode with symplectic eigenvalue `nu`, in bits.
pub fn g_function(nu: f64) -> f64 {
    if nu <= 1.0 + PURE_TOLERANCE {
        return 0.0;
    }
    let a = 0.5 * (nu + 1.0);
    let b = 0.5 * (nu - 1.0);
    a * a.log2() - b * b.log2()
}

/// A linear symplectic map on N modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Symplectic {
    n_modes: usize,
    m: DMatrix<f64>,
}

impl Symplectic {
    /// Validates `S Ω Sᵀ = Ω`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        if dim == 0 || !dim.is_multiple_of(2) || m.ncols() != dim {
            return Err(invalid(
                "symplectic matrix must be square with even dimension",
            ));
        }
        let n_modes = dim / 2;
        let w = omega(n_modes);
        let err = (&m * &w * m.transpose() - &w).amax();
        if !(err < SYMPLECTIC_TOLERANCE) {
            return Err(invalid(format!(
                "matrix is not symplectic (deviation {err:e})"
            )));
        }
        Ok(Symplectic { n_modes, m })
    }

    pub fn identity(n_modes: usize) -> Self {
        Symplectic {
            n_modes,
            m: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    fn check_mode(n_modes: usize, mode: usize) -> Result<()> {
        if mode >= n_modes {
            return Err(invalid(format!(
                "mode {mode} out of range for {n_modes} modes"
            )));
        }
        Ok(())
    }

    /// Single-mode squeezer that maps vacuum to `diag(variance_x, 1/variance_x)`.
    pub fn squeezer(n_modes: usize, mode: usize, variance_x: f64) -> Result<Self> {
        Self::check_mode(n_modes, mode)?;
        if !(variance_x > 0.0) || !variance_x.is_finite() {
            return Err(invalid(format!(
                "squeezer variance must be positive, got {variance_x}"
            )));
        }
        let mut s = Self::identity(n_modes);
        let r = variance_x.sqrt();
        s.m[(2 * mode, 2 * mode)] = r;
        s.m[(2 * mode + 1, 2 * mode + 1)] = 1.0 / r;
        Ok(s)
    }

    /// Beamsplitter of transmittance `t`:
    /// `a' = √t a + √(1−t) b`, `b' = −√(1−t) a + √t b` for both quadratures.
    pub fn beamsplitter(n_modes: usize, mode_a: usize, mode_b: usize, t: f64) -> Result<Self> {
        Self::check_mode(n_modes, mode_a)?;
        Self::check_mode(n_modes, mode_b)?;
        if mode_a == mode_b {
            return Err(invalid("beamsplitter needs two distinct modes"));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("transmittance must lie in [0,1], got {t}")));
        }
        let mut s = Self::identity(n_modes);
        let (ct, rt) = (t.sqrt(), (1.0 - t).sqrt());
        for q in 0..2 {
            let (i, j) = (2 * mode_a + q, 2 * mode_b + q);
            s.m[(i, i)] = ct;
            s.m[(i, j)] = rt;
            s.m[(j, i)] = -rt;
            s.m[(j, j)] = ct;
        }
        Ok(s)
    }

    /// Phase-space rotation `x' = x cosθ − p sinθ`, `p' = x sinθ + p cosθ`.
    pub fn rotation(n_modes: usize, mode: usize, theta: f64) -> Result<Self> {
        Self::check_mode(n_modes, mode)?;
        let mut s = Self::identity(n_modes);
        let (sn, cs) = theta.sin_cos();
        let i = 2 * mode;
        s.m[(i, i)] = cs;
        s.m[(i, i + 1)] = -sn;
        s.m[(i + 1, i)] = sn;
        s.m[(i + 1, i + 1)] = cs;
        Ok(s)
    }

    /// Controlled-Z: `p_a += g x_b`, `p_b += g x_a`.
    pub fn controlled_z(n_modes: usize, mode_a: usize, mode_b: usize, g: f64) -> Result<Self> {
        Self::check_mode(n_modes, mode_a)?;
        Self::check_mode(n_modes, mode_b)?;
        if mode_a == mode_b {
            return Err(invalid("controlled-Z needs two distinct modes"));
        }
        let mut s = Self::identity(n_modes);
        s.m[(2 * mode_a + 1, 2 * mode_b)] = g;
        s.m[(2 * mode_b + 1, 2 * mode_a)] = g;
        Ok(s)
    }

    /// The map that applies `self` first and then `next`.
    pub fn then(&self, next: &Symplectic) -> Result<Self> {
        if self.n_modes != next.n_modes {
            return Err(invalid("cannot compose symplectic maps of different sizes"));
        }
        Ok(Symplectic {
            n_modes: self.n_modes,
            m: &next.m * &self.m,
        })
    }

    pub fn inverse(&self) -> Self {
        // S⁻¹ = Ω Sᵀ Ωᵀ for any symplectic S.
        let w = omega(self.n_modes);
        Symplectic {
            n_modes: self.n_modes,
            m: &w * self.m.transpose() * w.transpose(),
        }
    }
}
