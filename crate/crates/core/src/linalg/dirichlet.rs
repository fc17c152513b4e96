use std::collections::BTreeMap;

use super::{to_sparse, LinalgError, SparseMatrix, TripletBuffer};
use crate::real::Real;

/// Essential boundary values, stored as a dof-indexed mask.
#[derive(Debug, Clone)]
pub struct DirichletBc<T> {
    pub dofs: Vec<usize>,
    pub values: Vec<T>,
    mask: Vec<Option<T>>,
}

impl<T: Real> DirichletBc<T> {
    pub fn new(n: usize, dofs: &[usize], values: &[T]) -> Result<Self, LinalgError> {
        if dofs.len() != values.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: dofs.len(),
                got: values.len(),
            });
        }
        let mut unique: BTreeMap<usize, T> = BTreeMap::new();
        for (&d, &v) in dofs.iter().zip(values) {
            if d >= n {
                return Err(LinalgError::IndexOutOfRange {
                    row: d,
                    col: d,
                    n_rows: n,
                    n_cols: n,
                });
            }
            if let Some(&old) = unique.get(&d) {
                if old != v {
                    return Err(LinalgError::ConflictingConstraint {
                        dof: d,
                        a: old.as_f64(),
                        b: v.as_f64(),
                    });
                }
            }
            unique.insert(d, v);
        }
        let mut mask = vec![None; n];
        for (&d, &v) in &unique {
            mask[d] = Some(v);
        }
        Ok(DirichletBc {
            dofs: unique.keys().copied().collect(),
            values: unique.values().copied().collect(),
            mask,
        })
    }

    pub fn homogeneous(n: usize, dofs: &[usize]) -> Result<Self, LinalgError> {
        Self::new(n, dofs, &vec![T::zero(); dofs.len()])
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.mask[dof].is_some()
    }

    /// Eliminates the constrained rows and columns of `a`: constrained rows
    /// become identity rows and couplings to constrained columns are dropped.
    pub fn apply_matrix(&self, a: &SparseMatrix<T>) -> SparseMatrix<T> {
        let mut buf = TripletBuffer::with_capacity(a.nnz());
        for i in 0..a.n_rows {
            if self.mask[i].is_some() {
                buf.push(i, i, T::one());
                continue;
            }
            for (j, v) in a.row(i) {
                if self.mask[j].is_none() {
                    buf.push(i, j, v);
                }
            }
        }
        to_sparse(&buf, a.n_rows, a.n_cols).expect("indices preserved")
    }

    /// Right-hand side matching [`apply_matrix`](Self::apply_matrix); `a` is
    /// the original, unconstrained operator.
    pub fn apply_rhs(&self, a: &SparseMatrix<T>, b: &mut [T]) {
        for i in 0..a.n_rows {
            if let Some(v) = self.mask[i] {
                b[i] = v;
                continue;
            }
            let mut s = T::zero();
            for (j, aij) in a.row(i) {
                if let Some(v) = self.mask[j] {
                    s += aij * v;
                }
            }
            b[i] -= s;
        }
    }

    /// Overwrites constrained entries of a vector with their values.
    pub fn impose(&self, x: &mut [T]) {
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            x[d] = v;
        }
    }
}

/// Symmetric elimination of essential conditions from `A x = b`.
pub fn apply_dirichlet<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    dofs: &[usize],
    values: &[T],
) -> Result<(SparseMatrix<T>, Vec<T>), LinalgError> {
    if b.len() != a.n_rows {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n_rows,
            got: b.len(),
        });
    }
    let bc = DirichletBc::new(a.n_rows, dofs, values)?;
    let mut rhs = b.to_vec();
    bc.apply_rhs(a, &mut rhs);
    Ok((bc.apply_matrix(a), rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{solve, SolverConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fully_constrained_identity() {
        let a = SparseMatrix::<f64>::identity(3);
        let (m, b) = apply_dirichlet(&a, &[5.0, 6.0, 7.0], &[0, 1, 2], &[0.0; 3]).unwrap();
        let (x, _) = solve(&m, &b, &SolverConfig::default(), None).unwrap();
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn pinned_laplacian_gives_ones() {
        let n = 6;
        let mut t = TripletBuffer::new();
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
            }
        }
        let a = to_sparse(&t, n, n).unwrap();
        let (m, b) = apply_dirichlet(&a, &vec![0.0; n], &[0, n - 1], &[1.0, 1.0]).unwrap();
        assert_eq!(m.asymmetry(), 0.0);
        let (x, _): (Vec<f64>, _) = solve(&m, &b, &SolverConfig::default(), None).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn conflicting_values_rejected() {
        let a = SparseMatrix::<f64>::identity(2);
        assert!(matches!(
            apply_dirichlet(&a, &[0.0, 0.0], &[1, 1], &[1.0, 2.0]),
            Err(LinalgError::ConflictingConstraint { dof: 1, .. })
        ));
        assert!(apply_dirichlet(&a, &[0.0, 0.0], &[1, 1], &[2.0, 2.0]).is_ok());
    }

    #[test]
    fn random_spd_matches_reduced_dense_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let r: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        // A = R^T R + n I
        let mut dense = vec![vec![0.0; n]; n];
        let mut t = TripletBuffer::new();
        for i in 0..n {
            for j in 0..n {
                let mut s: f64 = (0..n).map(|k| r[k][i] * r[k][j]).sum();
                if i == j {
                    s += n as f64;
                }
                dense[i][j] = s;
                t.push(i, j, s);
            }
        }
        let a = to_sparse(&t, n, n).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pinned = [1usize, 4];
        let vals = [0.5, -2.0];
        let (m, rhs) = apply_dirichlet(&a, &b, &pinned, &vals).unwrap();
        assert!(m.asymmetry() == 0.0);
        let (x, _) = solve(&m, &rhs, &SolverConfig::default().with_tol(1e-14), None).unwrap();

        // dense elimination oracle on the free dofs
        let free: Vec<usize> = (0..n).filter(|i| !pinned.contains(i)).collect();
        let mut red = nalgebra::DMatrix::<f64>::zeros(free.len(), free.len());
        let mut rb = nalgebra::DVector::<f64>::zeros(free.len());
        for (fi, &i) in free.iter().enumerate() {
            rb[fi] = b[i] - pinned.iter().zip(vals).map(|(&j, v)| dense[i][j] * v).sum::<f64>();
            for (fj, &j) in free.iter().enumerate() {
                red[(fi, fj)] = dense[i][j];
            }
        }
        let y = red.lu().solve(&rb).unwrap();
        for (fi, &i) in free.iter().enumerate() {
            assert!((x[i] - y[fi]).abs() < 1e-12);
        }
        assert!((x[1] - 0.5).abs() < 1e-12);
        assert!((x[4] + 2.0).abs() < 1e-12);
    }
}
