//! Symmetric matrices stored by their upper triangle.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use libm::{fabs, sqrt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues below `-PSD_TOL` make a matrix non-PSD.
pub const PSD_TOL: f64 = 1e-10;
/// Eigenvalues below this magnitude are treated as zero by [`SymMatrix::sqrt_psd`].
pub const EIG_CLAMP: f64 = 1e-12;

/// A real symmetric `n × n` matrix. Symmetry is exact because only the upper
/// triangle is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

/// Eigen-decomposition; `vectors[k]` is the unit eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from full rows; rows must be exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::validation("matrix rows must form a square"));
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::validation(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("matrix entries must be finite"));
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    /// Symmetric part `(a + aᵀ)/2` of a row-major dense matrix.
    pub fn symmetrize(n: usize, dense: &[f64]) -> Self {
        Self::from_fn(n, |i, j| 0.5 * (dense[i * n + j] + dense[j * n + i]))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.get(i, j);
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[tri_index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = tri_index(self.n, i, j);
        self.data[k] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Frobenius inner product `Σ_ij a_ij b_ij`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.get(i, i) * other.get(i, i);
            for j in i + 1..self.n {
                s += 2.0 * self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    /// `vᵀ A v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.get(i, i) * v[i] * v[i];
            for j in i + 1..self.n {
                s += 2.0 * self.get(i, j) * v[i] * v[j];
            }
        }
        s
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(self.dot(self))
    }

    /// Largest absolute entry.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, fabs(*v)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Cyclic Jacobi eigen-decomposition, eigenvalues ascending.
    pub fn eigen(&self) -> Eigen {
        let n = self.n;
        let mut a = self.to_dense();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            let mut scale = 0.0;
            for i in 0..n {
                scale += a[i * n + i] * a[i * n + i];
                for j in i + 1..n {
                    off += a[i * n + j] * a[i * n + j];
                }
            }
            if off <= 1e-32 * scale || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + sqrt(1.0 + theta * theta))
                    } else {
                        -1.0 / (-theta + sqrt(1.0 + theta * theta))
                    };
                    let c = 1.0 / sqrt(1.0 + t * t);
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
        Eigen {
            values: order.iter().map(|&k| a[k * n + k]).collect(),
            vectors: order
                .iter()
                .map(|&k| (0..n).map(|i| v[i * n + k]).collect())
                .collect(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.n == 1 {
            return self.data[0];
        }
        self.eigen().values[0]
    }

    /// Spectral norm.
    pub fn op_norm(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let e = self.eigen();
        f64::max(fabs(e.values[0]), fabs(e.values[self.n - 1]))
    }

    pub fn is_psd(&self) -> bool {
        self.n == 0 || self.min_eigenvalue() >= -PSD_TOL
    }

    /// Rebuilds `Σ f(λ_k) v_k v_kᵀ`.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        if self.n == 1 {
            return SymMatrix {
                n: 1,
                data: vec![f(self.data[0])],
            };
        }
        let e = self.eigen();
        let mut out = SymMatrix::zeros(self.n);
        for (lam, vec) in e.values.iter().zip(&e.vectors) {
            let fl = f(*lam);
            if fl == 0.0 {
                continue;
            }
            for i in 0..self.n {
                for j in i..self.n {
                    let k = tri_index(self.n, i, j);
                    out.data[k] += fl * vec[i] * vec[j];
                }
            }
        }
        out
    }

    /// Symmetric PSD square root; eigenvalues within `EIG_CLAMP` of zero (or
    /// negative within `PSD_TOL`) are clamped to zero.
    pub fn sqrt_psd(&self) -> Result<SymMatrix> {
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::validation(format!(
                "matrix is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        if self.data.iter().all(|&v| v == 0.0) {
            return Ok(SymMatrix::zeros(self.n));
        }
        Ok(self.spectral_map(|l| if l <= EIG_CLAMP { 0.0 } else { sqrt(l) }))
    }

    /// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
    pub fn project_psd(&self) -> SymMatrix {
        if self.min_eigenvalue() >= 0.0 {
            return self.clone();
        }
        self.spectral_map(|l| f64::max(l, 0.0))
    }

    /// Raw upper-triangle storage (row-major).
    pub fn upper(&self) -> &[f64] {
        &self.data
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, c: f64) -> SymMatrix {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        fabs(a - b) <= tol
    }

    #[test]
    fn eigen_of_2x2() {
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = m.eigen();
        assert!(close(e.values[0], 1.0, 1e-14));
        assert!(close(e.values[1], 3.0, 1e-14));
    }

    #[test]
    fn sqrt_squares_back() {
        let m = SymMatrix::from_rows(&[
            vec![0.5, 0.1, 0.0],
            vec![0.1, 0.3, 0.05],
            vec![0.0, 0.05, 0.2],
        ])
        .unwrap();
        let s = m.sqrt_psd().unwrap();
        let d = s.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| d[i * 3 + k] * d[k * 3 + j]).sum();
                assert!(close(v, m.get(i, j), 1e-14));
            }
        }
    }

    #[test]
    fn sqrt_rejects_negative() {
        let m = SymMatrix::diag(&[1.0, -0.1]);
        assert!(m.sqrt_psd().is_err());
        let tiny = SymMatrix::diag(&[1.0, -1e-13]);
        let s = tiny.sqrt_psd().unwrap();
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn rows_must_be_symmetric() {
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).is_err());
    }

    #[test]
    fn frobenius_dot_counts_off_diagonal_twice() {
        let a = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(a.dot(&a), 1.0 + 4.0 + 4.0 + 9.0);
        assert_eq!(a.quad_form(&[1.0, 1.0]), 8.0);
    }

    #[test]
    fn projection_clips() {
        let m = SymMatrix::diag(&[0.3, -0.2]);
        let p = m.project_psd();
        assert!(close(p.get(0, 0), 0.3, 1e-15));
        assert!(close(p.get(1, 1), 0.0, 1e-15));
    }
}
