//! Small dense and banded linear algebra.
//!
//! The proposal covariances are 6x6 and the column solver matrices are
//! narrow-banded, so hand-rolled kernels beat pulling in a full linear
//! algebra stack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix, intended for small dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            let mut acc = T::zero();
            for j in 0..self.cols {
                acc = acc + self[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add_diagonal(&mut self, d: &[T]) {
        assert_eq!(d.len(), self.rows.min(self.cols));
        for (i, di) in d.iter().enumerate() {
            self[(i, i)] += *di;
        }
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum::<T>()
            .sqrt()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|a| *a * *a).sum::<T>().sqrt()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum = sum - l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= T::zero() {
                    return Err(Error::InvalidInput(format!(
                        "matrix not positive definite (pivot {} at row {i})",
                        sum.as_f64()
                    )));
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut acc = x[i];
        for k in 0..i {
            acc = acc - l[(i, k)] * x[k];
        }
        x[i] = acc / l[(i, i)];
    }
    x
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, v)` with eigenvectors in the columns of `v`,
/// so `a = v * diag(eigenvalues) * v^T`.
pub fn sym_eigen<T: Scalar>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let tol = T::epsilon() * T::from_count(n * n) * m.frobenius_norm().max(T::one());
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * T::of(1e-3) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig = (0..n).map(|i| m[(i, i)]).collect();
    (eig, v)
}

/// Sample covariance (unbiased) of row vectors.
pub fn sample_covariance<T: Scalar>(samples: &[Vec<T>]) -> Matrix<T> {
    let k = samples.len();
    assert!(k >= 2, "need at least two samples");
    let n = samples[0].len();
    let mut mean = vec![T::zero(); n];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += *x;
        }
    }
    let kf = T::from_count(k);
    for m in &mut mean {
        *m /= kf;
    }
    let mut cov = Matrix::zeros(n, n);
    for s in samples {
        for i in 0..n {
            let di = s[i] - mean[i];
            for j in 0..n {
                let dj = s[j] - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    let denom = T::from_count(k - 1);
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] /= denom;
        }
    }
    cov
}

impl<T: Scalar> Matrix<T> {
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn inf_norm(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.rows {
            let mut row = T::zero();
            for j in 0..self.cols {
                row += self[(i, j)].abs();
            }
            best = best.max(row);
        }
        best
    }

    pub fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            let mut acc = T::zero();
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (a, b) in row.iter().zip(x) {
                acc = acc + *a * *b;
            }
            out[i] = acc;
        }
    }
}

/// Solves `A X = B` for dense square `A` by LU with partial pivoting,
/// overwriting `B` with the solution.
pub fn dense_solve<T: Scalar>(a: &Matrix<T>, b: &mut Matrix<T>) -> Result<()> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    assert_eq!(n, b.rows());
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut pivot_row = k;
        let mut pivot_val = lu[(k, k)].abs();
        for i in (k + 1)..n {
            let v = lu[(i, k)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = i;
            }
        }
        if pivot_val == T::zero() || !pivot_val.is_finite() {
            return Err(Error::IntegrationFailure(format!(
                "singular matrix in linear solve (pivot {} at {k})",
                pivot_val.as_f64()
            )));
        }
        if pivot_row != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(pivot_row, j)];
                lu[(pivot_row, j)] = tmp;
            }
            perm.swap(k, pivot_row);
        }
        for i in (k + 1)..n {
            let f = lu[(i, k)] / lu[(k, k)];
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                let v = lu[(i, j)] - f * lu[(k, j)];
                lu[(i, j)] = v;
            }
        }
    }
    let rhs_cols = b.cols();
    let mut col = vec![T::zero(); n];
    for j in 0..rhs_cols {
        for i in 0..n {
            col[i] = b[(perm[i], j)];
        }
        for i in 1..n {
            let mut acc = col[i];
            for k in 0..i {
                acc = acc - lu[(i, k)] * col[k];
            }
            col[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = col[i];
            for k in (i + 1)..n {
                acc = acc - lu[(i, k)] * col[k];
            }
            col[i] = acc / lu[(i, i)];
        }
        for i in 0..n {
            b[(i, j)] = col[i];
        }
    }
    Ok(())
}

/// `exp(A) - I` by scaling-and-squaring of the deviation matrix with a
/// diagonal [6/6] Pade approximant.
///
/// Squaring the deviation (`D <- 2D + D^2`) instead of the exponential
/// keeps slow dynamics accurate even when a large norm forces dozens of
/// squarings: nothing is ever rounded against the unit diagonal. This
/// matters for the near-equilibrium film rates of the column model, where
/// `exp` itself would lose the transport physics to round-off.
pub fn matexp_deviation<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let norm = a.inf_norm();
    let mut squarings = 0u32;
    let mut scaled = a.clone();
    let threshold = T::of(0.25);
    if norm > threshold {
        squarings = ((norm / threshold).as_f64()).log2().ceil() as u32;
        let factor = T::of(0.5).powi(squarings as i32);
        scaled = scaled.scaled(factor);
    }
    const PADE: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    // num = sum c_k M^k, den = sum c_k (-M)^k; the deviation
    // exp(M) - I = den^{-1} (num - den) avoids forming exp explicitly,
    // with num - den twice the odd part of the series.
    let mut odd = Matrix::zeros(n, n);
    let mut den = Matrix::identity(n);
    let mut power = Matrix::identity(n);
    for (k, c) in PADE.iter().enumerate().skip(1) {
        power = power.mul(&scaled);
        let ck = T::of(*c);
        for i in 0..n {
            for j in 0..n {
                if k % 2 == 1 {
                    odd[(i, j)] += ck * power[(i, j)];
                    den[(i, j)] -= ck * power[(i, j)];
                } else {
                    den[(i, j)] += ck * power[(i, j)];
                }
            }
        }
    }
    let mut dev = odd.scaled(T::of(2.0));
    dense_solve(&den, &mut dev)?;
    for _ in 0..squarings {
        let sq = dev.mul(&dev);
        for i in 0..n {
            for j in 0..n {
                dev[(i, j)] = T::of(2.0) * dev[(i, j)] + sq[(i, j)];
            }
        }
    }
    Ok(dev)
}

/// Matrix exponential; see [`matexp_deviation`].
pub fn matexp<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let mut e = matexp_deviation(a)?;
    for i in 0..e.rows() {
        e[(i, i)] += T::one();
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let a = Matrix::from_rows(&[vec![4.0f64, 2.0], vec![2.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        // l * l^T == a
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += l[(i, k)] * l[(j, k)];
                }
                assert!((acc - a[(i, j)]).abs() < 1e-12);
            }
        }
        let x = solve_lower(&l, &[2.0, 1.0]);
        assert!((l[(0, 0)] * x[0] - 2.0).abs() < 1e-12);
        assert!((l[(1, 0)] * x[0] + l[(1, 1)] * x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn jacobi_eigen_diagonalizes() {
        let a = Matrix::from_rows(&[
            vec![2.0f64, 1.0, 0.0],
            vec![1.0, 3.0, 0.5],
            vec![0.0, 0.5, 1.0],
        ]);
        let (eig, v) = sym_eigen(&a);
        // reconstruct and compare
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += v[(i, k)] * eig[k] * v[(j, k)];
                }
                assert!((acc - a[(i, j)]).abs() < 1e-10, "({i},{j}): {acc}");
            }
        }
    }

    #[test]
    fn dense_solve_roundtrip() {
        let n = 12;
        let mut a = Matrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = ((i * 7 + j * 3) % 11) as f64 - 5.0;
            }
            a[(i, i)] += 20.0;
        }
        let x_true = Matrix::from_rows(
            &(0..n)
                .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
                .collect::<Vec<_>>(),
        );
        let mut b = a.mul(&x_true);
        dense_solve(&a, &mut b).unwrap();
        for i in 0..n {
            for j in 0..2 {
                assert!((b[(i, j)] - x_true[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn matexp_against_closed_forms() {
        // diagonal case
        let a = Matrix::from_rows(&[vec![-1.0f64, 0.0], vec![0.0, 2.0]]);
        let e = matexp(&a).unwrap();
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((e[(1, 1)] - 2.0f64.exp()).abs() < 1e-10);
        assert!(e[(0, 1)].abs() < 1e-14);

        // rotation generator: exp([[0,-t],[t,0]]) = [[cos t, -sin t],[sin t, cos t]]
        let t = 1.3f64;
        let a = Matrix::from_rows(&[vec![0.0, -t], vec![t, 0.0]]);
        let e = matexp(&a).unwrap();
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-12);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-12);

        // very stiff decay stays bounded and accurate
        let a = Matrix::from_rows(&[vec![-5e7f64, 0.0], vec![1.0, -0.1]]);
        let e = matexp(&a).unwrap();
        assert!(e[(0, 0)].abs() < 1e-300);
        assert!((e[(1, 1)] - (-0.1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn covariance_of_known_cloud() {
        let samples = vec![
            vec![1.0f64, 2.0],
            vec![2.0, 4.0],
            vec![3.0, 6.0],
            vec![4.0, 8.0],
        ];
        let c = sample_covariance(&samples);
        // x has variance 5/3, y = 2x exactly
        assert!((c[(0, 0)] - 5.0 / 3.0).abs() < 1e-12);
        assert!((c[(1, 1)] - 20.0 / 3.0).abs() < 1e-12);
        assert!((c[(0, 1)] - 10.0 / 3.0).abs() < 1e-12);
    }
}
