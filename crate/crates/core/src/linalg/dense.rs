use super::LinalgError;
use crate::real::{axpy, dot, Real};

/// Dense Cholesky factor of a symmetric positive semi-definite matrix.
///
/// Pivots below `rel_pivot_tol * max_diag` are treated as exact zeros: the
/// corresponding unknowns are fixed to zero, which yields a valid solution
/// for consistent right-hand sides.
#[derive(Debug, Clone)]
pub struct DenseCholesky<T> {
    n: usize,
    /// row-major lower triangle, full `n x n` storage
    l: Vec<T>,
    skipped: Vec<bool>,
}

impl<T: Real> DenseCholesky<T> {
    /// `a` is row-major `n x n`; only the lower triangle is read.
    pub fn new(n: usize, mut a: Vec<T>, rel_pivot_tol: T) -> Result<Self, LinalgError> {
        if a.len() != n * n {
            return Err(LinalgError::DimensionMismatch {
                expected: n * n,
                got: a.len(),
            });
        }
        let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(T::zero(), T::max);
        let tol = rel_pivot_tol * max_diag;
        let mut skipped = vec![false; n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (i * n, j * n);
                let s = a[ri + j] - dot(&a[ri..ri + j], &a[rj..rj + j]);
                if i == j {
                    if s <= tol {
                        if s < -tol {
                            return Err(LinalgError::NotPositiveDefinite {
                                pivot: i,
                                value: s.as_f64(),
                            });
                        }
                        skipped[i] = true;
                        a[ri + i] = T::zero();
                    } else {
                        a[ri + i] = s.sqrt();
                    }
                } else if skipped[j] {
                    a[ri + j] = T::zero();
                } else {
                    a[ri + j] = s / a[rj + j];
                }
            }
        }
        Ok(DenseCholesky { n, l: a, skipped })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank_deficiency(&self) -> usize {
        self.skipped.iter().filter(|&&s| s).count()
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            if self.skipped[i] {
                b[i] = T::zero();
                continue;
            }
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            if self.skipped[i] {
                b[i] = T::zero();
                continue;
            }
            let bi = b[i] / self.l[i * n + i];
            b[i] = bi;
            axpy(-bi, &self.l[i * n..i * n + i], &mut b[..i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd() {
        let a = vec![4.0, 2.0, 0.0, 2.0, 5.0, 1.0, 0.0, 1.0, 3.0];
        let f = DenseCholesky::new(3, a.clone(), 1e-12).unwrap();
        assert_eq!(f.rank_deficiency(), 0);
        let mut b = vec![1.0, -2.0, 0.5];
        let orig = b.clone();
        f.solve_in_place(&mut b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * b[j]).sum();
            assert!((r - orig[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn semidefinite_consistent_system() {
        // path-graph Laplacian, kernel = constants
        let a = vec![1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0];
        let f = DenseCholesky::new(3, a.clone(), 1e-10).unwrap();
        assert_eq!(f.rank_deficiency(), 1);
        let mut b = vec![1.0, 0.0, -1.0];
        f.solve_in_place(&mut b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * b[j]).sum();
            assert!((r - [1.0, 0.0, -1.0][i]).abs() < 1e-12);
        }
    }
}
