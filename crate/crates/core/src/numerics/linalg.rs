//! Small dense symmetric linear algebra.
//!
//! Every matrix in the estimation pipeline has dimension at most a handful,
//! so storage is dense and the eigen-solver is a cyclic Jacobi sweep.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e12;

/// Dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps `m` after checking symmetry to 1e-12 relative; the stored
    /// matrix is the exact symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if !(asym <= SYMMETRY_TOL * scale) {
            return Err(Error::invalid(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Takes the symmetric part `(m + mᵀ)/2` without checking.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let s = (&m + m.transpose()) * 0.5;
        SymmetricMatrix(s)
    }

    pub fn identity(dim: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `vᵀ A v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }

    /// Congruence `Bᵀ A B` for a p×r matrix `B`.
    pub fn congruence(&self, b: &DMatrix<f64>) -> SymmetricMatrix {
        SymmetricMatrix::symmetrize(b.transpose() * &self.0 * b)
    }

    /// Eigenvalues sorted descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = jacobi_eigenvalues(&self.0);
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn is_positive_definite(&self) -> bool {
        self.0.clone().cholesky().is_some()
    }
}

impl std::ops::Index<(usize, usize)> for SymmetricMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations (unsorted).
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-32 * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

/// Inverse of a symmetric positive-definite matrix.
///
/// `role` names the matrix in error messages (e.g. `"J_beta"`).
pub fn invert_spd(m: &SymmetricMatrix, role: &str) -> Result<SymmetricMatrix> {
    let ev = m.eigenvalues();
    let (max, min) = (ev[0], ev[ev.len() - 1]);
    if !(min > 0.0) || !max.is_finite() {
        return Err(Error::NotPositiveDefinite { role: role.into() });
    }
    let condition = max / min;
    if condition >= MAX_CONDITION {
        return Err(Error::IllConditioned {
            role: role.into(),
            condition,
        });
    }
    let chol = m
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { role: role.into() })?;
    Ok(SymmetricMatrix::symmetrize(chol.inverse()))
}

/// Eigenvalues of the symmetric-definite pencil `a v = λ b v`, i.e. of
/// `b⁻¹a`, sorted descending.
pub fn generalized_eigenvalues(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "pencil dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let chol = b
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            role: "pencil right-hand matrix".into(),
        })?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Cholesky factor not invertible".into()))?;
    let c = &linv * a.as_matrix() * linv.transpose();
    let mut ev = jacobi_eigenvalues(&SymmetricMatrix::symmetrize(c).0);
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev)
}

/// Rank of a rectangular matrix from its singular values (relative cutoff).
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let svd = m.clone().svd(false, false);
    let sv = svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cutoff = smax * 1e-10 * (m.nrows().max(m.ncols()) as f64);
    sv.iter().filter(|&&s| s > cutoff).count()
}
