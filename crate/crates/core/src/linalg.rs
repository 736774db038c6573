//! Fixed-size dense matrices for d ≤ 3.
//!
//! Deformation gradients, rank-one directions and orthogonal frames all live
//! here. Storage is a 3×3 array with an active dimension, so every matrix is
//! `Copy` and allocation free.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    dim: usize,
    a: [[f64; MAX_DIM]; MAX_DIM],
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self {
            dim,
            a: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i][i] = s;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m.a[i][i] = e;
        }
        m
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be d².
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return invalid(format!("matrix dimension {dim} not in 1..=3"));
        }
        if entries.len() != dim * dim {
            return invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            ));
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i][j] = entries[i * dim + j];
            }
        }
        Ok(m)
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    /// Counter-clockwise rotation of the plane.
    pub fn rotation2(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_fn(2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => c,
            (0, 1) => -s,
            _ => s,
        })
    }

    /// Outer product `a ⊗ n`.
    pub fn outer(a: &[f64], n: &[f64]) -> Self {
        assert_eq!(a.len(), n.len());
        Self::from_fn(a.len(), |i, j| a[i] * n[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
    }

    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            out.extend_from_slice(&self.a[i][..self.dim]);
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.a[j][i])
    }

    pub fn mul(&self, other: &Mat) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_fn(self.dim, |i, j| {
            (0..self.dim).map(|k| self.a[i][k] * other.a[k][j]).sum()
        })
    }

    pub fn add(&self, other: &Mat) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_fn(self.dim, |i, j| self.a[i][j] + other.a[i][j])
    }

    pub fn sub(&self, other: &Mat) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_fn(self.dim, |i, j| self.a[i][j] - other.a[i][j])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(self.dim, |i, j| s * self.a[i][j])
    }

    /// `F x` for a vector of matching length, written into `out`.
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            let mut acc = 0.0;
            for k in 0..self.dim {
                acc += self.a[i][k] * x[k];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    /// |F x| without allocating.
    #[inline]
    pub fn apply_norm(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut r = 0.0;
            for k in 0..self.dim {
                r += self.a[i][k] * x[k];
            }
            acc += r * r;
        }
        acc.sqrt()
    }

    pub fn frobenius_sq(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.a[i][j] * self.a[i][j];
            }
        }
        acc
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.a[i][i]).sum()
    }

    pub fn determinant(&self) -> f64 {
        let a = &self.a;
        match self.dim {
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let a = &self.a;
        let inv = match self.dim {
            1 => Self::diag(&[1.0 / a[0][0]]),
            2 => Self::from_fn(2, |i, j| match (i, j) {
                (0, 0) => a[1][1] / det,
                (0, 1) => -a[0][1] / det,
                (1, 0) => -a[1][0] / det,
                _ => a[0][0] / det,
            }),
            _ => {
                // adjugate / det
                let c = |r0: usize, r1: usize, c0: usize, c1: usize| {
                    a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]
                };
                let mut m = Self::zeros(3);
                m.a[0][0] = c(1, 2, 1, 2) / det;
                m.a[0][1] = -c(0, 2, 1, 2) / det;
                m.a[0][2] = c(0, 1, 1, 2) / det;
                m.a[1][0] = -c(1, 2, 0, 2) / det;
                m.a[1][1] = c(0, 2, 0, 2) / det;
                m.a[1][2] = -c(0, 1, 0, 2) / det;
                m.a[2][0] = c(1, 2, 0, 1) / det;
                m.a[2][1] = -c(0, 2, 0, 1) / det;
                m.a[2][2] = c(0, 1, 0, 1) / det;
                m
            }
        };
        Some(inv)
    }

    /// Frobenius norm of `FᵀF − I`.
    pub fn orthogonality_defect(&self) -> f64 {
        self.transpose()
            .mul(self)
            .sub(&Self::identity(self.dim))
            .frobenius()
    }

    pub fn is_orthogonal(&self, tol: f64) -> bool {
        self.orthogonality_defect() <= tol
    }

    /// Singular values in descending order, by one-sided Jacobi rotations
    /// applied to the columns until they are mutually orthogonal.
    pub fn singular_values(&self) -> Vec<f64> {
        let d = self.dim;
        let mut u = self.a;
        for _sweep in 0..60 {
            let mut off = 0.0_f64;
            for p in 0..d {
                for q in (p + 1)..d {
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for row in u.iter().take(d) {
                        alpha += row[p] * row[p];
                        beta += row[q] * row[q];
                        gamma += row[p] * row[q];
                    }
                    if gamma == 0.0 {
                        continue;
                    }
                    let scale = (alpha * beta).sqrt();
                    if scale > 0.0 {
                        off = off.max(gamma.abs() / scale);
                    }
                    if gamma.abs() <= f64::EPSILON * scale {
                        continue;
                    }
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for row in u.iter_mut().take(d) {
                        let up = row[p];
                        let uq = row[q];
                        row[p] = c * up - s * uq;
                        row[q] = s * up + c * uq;
                    }
                }
            }
            if off <= 1e-15 {
                break;
            }
        }
        let mut sv: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|i| u[i][j] * u[i][j]).sum::<f64>().sqrt())
            .collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        sv
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values()[0]
    }

    pub fn is_finite(&self) -> bool {
        self.row_major().iter().all(|x| x.is_finite())
    }
}

/// Euclidean norm of a short vector.
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn singular_values_of_diagonal_and_rotated() {
        let f = Mat::diag(&[0.3, 2.0]);
        let q = Mat::rotation2(0.7);
        let g = q.mul(&f).mul(&Mat::rotation2(-1.9));
        let sv = g.singular_values();
        assert_abs_diff_eq!(sv[0], 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(sv[1], 0.3, epsilon = 1e-13);
    }

    #[test]
    fn singular_values_3d_match_eigenvalues_of_gram() {
        let f = Mat::from_row_major(3, &[1.0, 2.0, 0.5, -0.3, 0.8, 1.1, 0.0, 0.4, -2.0]).unwrap();
        let sv = f.singular_values();
        let prod: f64 = sv.iter().product();
        assert_abs_diff_eq!(prod, f.determinant().abs(), epsilon = 1e-12);
        let sum_sq: f64 = sv.iter().map(|s| s * s).sum();
        assert_abs_diff_eq!(sum_sq, f.frobenius_sq(), epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_matrix() {
        let f = Mat::outer(&[1.0, 2.0], &[3.0, -1.0]);
        let sv = f.singular_values();
        assert_abs_diff_eq!(sv[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sv[0], 5f64.sqrt() * 10f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn inverse_3d() {
        let f = Mat::from_row_major(3, &[2.0, 1.0, 0.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0]).unwrap();
        let id = f.mul(&f.inverse().unwrap());
        assert!(id.sub(&Mat::identity(3)).frobenius() < 1e-14);
    }

    #[test]
    fn rotation_is_orthogonal() {
        assert!(Mat::rotation2(1.234).is_orthogonal(1e-15));
        assert!(!Mat::diag(&[1.0, 1.1]).is_orthogonal(1e-3));
    }
}
