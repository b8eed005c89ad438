//! Dense linear algebra for the small `n x n` systems of the market model.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Domain(format!("matrix must be square and non-empty, got {n} rows")));
        }
        Ok(Self { n, data: rows.iter().flatten().copied().collect() })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n, "dimension mismatch");
        self.data.chunks(self.n).map(|row| dot(row, v)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self[(i, j)].is_zero()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    fn norm_1(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].abs()).fold(T::zero(), |a, b| a + b))
            .fold(T::zero(), T::max)
    }

    /// Solves `self * x = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        assert_eq!(rhs.len(), n, "dimension mismatch");
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::from_usize_lossy(n);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
                .unwrap();
            if !(a[pivot * n + col].abs() > tiny) {
                return Err(Error::Singular(format!("zero pivot in column {col}")));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                b.swap(col, pivot);
            }
            for i in col + 1..n {
                let f = a[i * n + col] / a[col * n + col];
                for j in col..n {
                    a[i * n + j] = a[i * n + j] - f * a[col * n + j];
                }
                b[i] = b[i] - f * b[col];
            }
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let s = (i + 1..n).fold(b[i], |s, j| s - a[i * n + j] * x[j]);
            x[i] = s / a[i * n + i];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let mut inv = Self::zeros(n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// 1-norm condition number; infinite when singular.
    pub fn condition_number(&self) -> T {
        match self.inverse() {
            Ok(inv) => self.norm_1() * inv.norm_1(),
            Err(_) => T::infinity(),
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_matches_explicit_inverse() {
        let m = Matrix::<f64>::from_rows(&[vec![0.2, 0.0], vec![0.05, 0.25]]).unwrap();
        let rhs = [0.05, 0.04];
        let x = m.solve(&rhs).unwrap();
        let y = m.inverse().unwrap().mul_vec(&rhs);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
        let back = m.mul_vec(&x);
        assert!((back[0] - 0.05).abs() < 1e-15 && (back[1] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = Matrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(m.solve(&[1.0, 1.0]), Err(Error::Singular(_))));
        assert!(m.condition_number().is_infinite());
    }

    #[test]
    fn triangular_and_transpose() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 2.0]]).unwrap();
        assert!(m.is_lower_triangular());
        assert!(!m.transpose().is_lower_triangular());
        assert_eq!(m.matmul(&Matrix::identity(2)), m);
    }
}
