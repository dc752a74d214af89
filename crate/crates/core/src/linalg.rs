//! Dense symmetric linear algebra.
//!
//! Everything here works on `ndarray::Array2<f64>`. [`SymMatrix`] and
//! [`SpdMatrix`] are thin validated wrappers used where a type should carry
//! its invariant; all routines also accept plain arrays through `Deref`.

use std::ops::Deref;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sweep budget for the cyclic Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative pivot tolerance below which Cholesky reports a non-PD input.
pub const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// A square, finite, exactly symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Array2<f64>", into = "Array2<f64>")]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        check_symmetric(&a)?;
        Ok(Self(a))
    }

    /// Builds a symmetric matrix from `(a + aᵀ)/2`; the input must be square and finite.
    pub fn symmetrize(mut a: Array2<f64>) -> Result<Self> {
        check_square_finite(&a)?;
        symmetrize_in_place(&mut a);
        Ok(Self(a))
    }

    pub fn identity(n: usize) -> Self {
        Self(Array2::eye(n))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        Self(Array2::from_diag(&Array1::from(d.to_vec())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

impl Deref for SymMatrix {
    type Target = Array2<f64>;
    fn deref(&self) -> &Array2<f64> {
        &self.0
    }
}

impl TryFrom<Array2<f64>> for SymMatrix {
    type Error = Error;
    fn try_from(a: Array2<f64>) -> Result<Self> {
        Self::new(a)
    }
}

impl From<SymMatrix> for Array2<f64> {
    fn from(m: SymMatrix) -> Self {
        m.0
    }
}

/// A symmetric positive-definite matrix; definiteness is certified by a
/// successful Cholesky factorization at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Array2<f64>", into = "Array2<f64>")]
pub struct SpdMatrix(Array2<f64>);

impl SpdMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        check_symmetric(&a)?;
        cholesky(&a)?;
        Ok(Self(a))
    }

    pub fn identity(n: usize) -> Self {
        Self(Array2::eye(n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix(self.0.clone())
    }
}

impl Deref for SpdMatrix {
    type Target = Array2<f64>;
    fn deref(&self) -> &Array2<f64> {
        &self.0
    }
}

impl TryFrom<Array2<f64>> for SpdMatrix {
    type Error = Error;
    fn try_from(a: Array2<f64>) -> Result<Self> {
        Self::new(a)
    }
}

impl From<SpdMatrix> for Array2<f64> {
    fn from(m: SpdMatrix) -> Self {
        m.0
    }
}

fn check_square_finite(a: &Array2<f64>) -> Result<()> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::DimensionMismatch {
            expected: r,
            actual: c,
        });
    }
    if r == 0 {
        return Err(Error::InvalidInput("matrix has dimension 0".into()));
    }
    for ((i, j), v) in a.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
    }
    Ok(())
}

/// Checks that `a` is square, finite and exactly symmetric.
pub fn check_symmetric(a: &Array2<f64>) -> Result<()> {
    check_square_finite(a)?;
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if a[[i, j]] != a[[j, i]] {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Replaces `a` by `(a + aᵀ)/2`.
pub fn symmetrize_in_place(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Lower-triangular `L` with `A = L·Lᵀ`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to or below
/// `1e-12 · max diag(A)`.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    check_square_finite(a)?;
    let n = a.nrows();
    let max_diag = a.diag().iter().fold(0.0_f64, |m, v| m.max(*v));
    let tol = CHOLESKY_PIVOT_TOL * max_diag;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tol) || max_diag <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

pub fn is_positive_definite(a: &Array2<f64>) -> bool {
    cholesky(a).is_ok()
}

/// `log det A = 2 Σ log L_ii`.
pub fn log_det(a: &Array2<f64>) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>())
}

fn cholesky_solve_in_place(l: &Array2<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
}

/// Solves `A x = b` through the Cholesky factor.
pub fn spd_solve(a: &Array2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    let l = cholesky(a)?;
    let mut x = b.to_vec();
    cholesky_solve_in_place(&l, &mut x);
    Ok(Array1::from(x))
}

/// Inverse of a positive-definite matrix, symmetrized.
pub fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let l = cholesky(a)?;
    let n = a.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        cholesky_solve_in_place(&l, &mut col);
        for i in 0..n {
            inv[[i, j]] = col[i];
        }
    }
    symmetrize_in_place(&mut inv);
    Ok(inv)
}

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Nonincreasing.
    pub values: Array1<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: Array2<f64>,
}

impl SymEigen {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let n = self.values.len();
        let mut out = Array2::<f64>::zeros((n, n));
        for k in 0..n {
            let g = f(self.values[k]);
            if g == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for i in 0..n {
                let gi = g * v[i];
                for j in 0..n {
                    out[[i, j]] += gi * v[j];
                }
            }
        }
        symmetrize_in_place(&mut out);
        out
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Stops once the off-diagonal Frobenius norm is at most `1e-12·‖A‖_F`.
/// Eigenvalues are returned in nonincreasing order (stable on the original
/// diagonal position), and each eigenvector is signed so that its
/// largest-magnitude entry is positive.
pub fn sym_eigen(a: &Array2<f64>) -> Result<SymEigen> {
    sym_eigen_with_sweeps(a, JACOBI_MAX_SWEEPS)
}

pub fn sym_eigen_with_sweeps(a: &Array2<f64>, max_sweeps: usize) -> Result<SymEigen> {
    check_symmetric(a)?;
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let target = 1e-12 * frobenius(a);

    let off_norm = |m: &Array2<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[[i, j]] * m[[i, j]];
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&m) <= target;
    let mut sweep = 0;
    while !converged {
        if sweep == max_sweeps {
            return Err(Error::ConvergenceFailure { sweeps: max_sweeps });
        }
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    m[[p, q]] = 0.0;
                    m[[q, p]] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&m) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    // sort_by is stable, so equal eigenvalues keep their original index order.
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());

    let mut values = Array1::<f64>::zeros(n);
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (k, &src) in order.iter().enumerate() {
        values[k] = m[[src, src]];
        let col = v.column(src);
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, k]] = sign * col[i];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix; eigenvalues at or
/// below `rel_tol · λ_max` are treated as zero.
pub fn sym_pseudo_inverse(a: &Array2<f64>, rel_tol: f64) -> Result<Array2<f64>> {
    let eig = sym_eigen(a)?;
    let cutoff = rel_tol * eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(eig.reconstruct_with(|l| if l > cutoff { 1.0 / l } else { 0.0 }))
}
