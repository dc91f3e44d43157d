//! Small dense symmetric linear algebra.
//!
//! The optimizer only ever needs `N x N` systems with `N` in the tens, so
//! everything here is a straightforward row-major implementation. Systems are
//! solved through an `LDL^T` factorization; an inverse is never formed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pivots below this fraction of the largest diagonal entry are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Absolute tolerance used when checking that user input is symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is singular: pivot {pivot} is below tolerance")]
    SingularMatrix { pivot: usize },
    #[error("matrix is not positive semidefinite (pivot {pivot})")]
    NotPositiveSemidefinite { pivot: usize },
}

/// Dense symmetric matrix stored row-major in full.
///
/// Symmetry is exact: constructors average `(a_ij + a_ji) / 2` after checking
/// the input is symmetric to [`SYMMETRY_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut m = Self::filled(dim, 0.0);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self {
            dim,
            data: vec![value; dim * dim],
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::filled(dim, 0.0);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(LinalgError::NotSquare {
                    row,
                    len: r.len(),
                    expected: dim,
                });
            }
            for (col, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(LinalgError::NonFinite { row, col });
                }
            }
            data.extend_from_slice(r);
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > SYMMETRY_TOLERANCE {
                    return Err(LinalgError::NotSymmetric { row: i, col: j });
                }
                let avg = 0.5 * (a + b);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from a function of `(i, j)` evaluated on the upper
    /// triangle and mirrored.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_len(self.dim, v.len())?;
        Ok((0..self.dim).map(|i| dot(self.row(i), v)).collect())
    }

    /// `v^T M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64, LinalgError> {
        let mv = self.mul_vec(v)?;
        Ok(dot(&mv, v))
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.get(i, i).abs())
            .fold(0.0, f64::max)
    }

    /// Applies `f` to the entries of the upper triangle, mirroring the result.
    pub fn map_upper(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        Self::from_upper_fn(self.dim, |i, j| f(i, j, self.get(i, j)))
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = LinalgError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

/// Element-by-element product of two values of the same shape.
pub trait Hadamard: Sized {
    fn hadamard(&self, other: &Self) -> Result<Self, LinalgError>;
}

impl Hadamard for Vec<f64> {
    fn hadamard(&self, other: &Self) -> Result<Self, LinalgError> {
        check_len(self.len(), other.len())?;
        Ok(self.iter().zip(other).map(|(a, b)| a * b).collect())
    }
}

impl Hadamard for SymMatrix {
    fn hadamard(&self, other: &Self) -> Result<Self, LinalgError> {
        check_len(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }
}

/// Solution of a symmetric system together with the definiteness verdict of
/// the factorization that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSolve {
    pub solution: Vec<f64>,
    /// True when every `LDL^T` pivot was strictly positive.
    pub positive_definite: bool,
}

/// Solves `m w = v` for symmetric `m` using an unpivoted `LDL^T`
/// factorization followed by one step of iterative refinement.
///
/// Negative pivots do not stop the solve; they clear
/// [`SymSolve::positive_definite`] so callers that need a concave quadratic
/// form can reject the result.
pub fn solve_symmetric(m: &SymMatrix, v: &[f64]) -> Result<SymSolve, LinalgError> {
    let n = m.dim();
    check_len(n, v.len())?;
    let ldl = Ldl::factor(m)?;
    let mut w = ldl.solve(v);

    // one refinement pass
    let mw = m.mul_vec(&w)?;
    let residual: Vec<f64> = v.iter().zip(&mw).map(|(a, b)| a - b).collect();
    let correction = ldl.solve(&residual);
    for (wi, ci) in w.iter_mut().zip(correction) {
        *wi += ci;
    }

    Ok(SymSolve {
        solution: w,
        positive_definite: ldl.d.iter().all(|&d| d > 0.0),
    })
}

struct Ldl {
    n: usize,
    // unit lower triangle, row-major, diagonal implicit
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    fn factor(m: &SymMatrix) -> Result<Self, LinalgError> {
        let n = m.dim();
        let scale = m.max_abs_diag();
        if n > 0 && scale == 0.0 {
            return Err(LinalgError::SingularMatrix { pivot: 0 });
        }
        let tol = PIVOT_TOLERANCE * scale;
        let mut l = vec![0.0; n * n];
        let mut d = vec![0.0; n];
        for j in 0..n {
            let mut dj = m.get(j, j);
            for k in 0..j {
                dj -= l[j * n + k] * l[j * n + k] * d[k];
            }
            if dj.abs() <= tol || !dj.is_finite() {
                return Err(LinalgError::SingularMatrix { pivot: j });
            }
            d[j] = dj;
            for i in (j + 1)..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k] * d[k];
                }
                l[i * n + j] = s / dj;
            }
        }
        Ok(Self { n, l, d })
    }

    fn solve(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = v.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
        }
        y
    }
}

/// Lower-triangular factor `L` with `L L^T = M` for a positive semidefinite `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    data: Vec<f64>,
}

impl CholeskyFactor {
    /// Factors a positive semidefinite matrix. Zero pivots (rank deficiency,
    /// e.g. perfectly correlated assets) produce zero columns instead of an
    /// error; a negative pivot beyond tolerance is an error.
    pub fn factor_psd(m: &SymMatrix) -> Result<Self, LinalgError> {
        let n = m.dim();
        let tol = 1e-10 * m.max_abs_diag().max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut dj = m.get(j, j);
            for k in 0..j {
                dj -= l[j * n + k] * l[j * n + k];
            }
            if dj < -tol {
                return Err(LinalgError::NotPositiveSemidefinite { pivot: j });
            }
            if dj <= tol {
                // the remainder of this column must vanish for a PSD input
                for i in (j + 1)..n {
                    let mut s = m.get(i, j);
                    for k in 0..j {
                        s -= l[i * n + k] * l[j * n + k];
                    }
                    if s.abs() > 1e-8 * m.max_abs_diag().max(1.0) {
                        return Err(LinalgError::NotPositiveSemidefinite { pivot: j });
                    }
                }
                continue;
            }
            let ljj = dj.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { dim: n, data: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Computes `L z`.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..=i).map(|k| self.get(i, k) * z[k]).sum())
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(expected: usize, actual: usize) -> Result<(), LinalgError> {
    if expected == actual {
        Ok(())
    } else {
        Err(LinalgError::ShapeMismatch { expected, actual })
    }
}
