use super::{LinalgError, SparseMatrix};
use crate::real::{axpy, dot, norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    Cg,
    BiCgStab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    /// Target for the true relative residual `||b - A x|| / ||b||`.
    pub rel_tol: T,
    /// Iteration cap; `None` means `10 n`.
    pub max_iters: Option<usize>,
    pub method: SolverMethod,
    /// Jacobi (diagonal) preconditioning.
    pub jacobi: bool,
    /// When set, a mean-zero solve fails if the constant component removed
    /// from `b` exceeds this fraction of `||b||`.
    pub consistency_tol: Option<T>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            rel_tol: T::lit(1e-10),
            max_iters: None,
            method: SolverMethod::Cg,
            jacobi: true,
            consistency_tol: None,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_method(mut self, method: SolverMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_tol(mut self, rel_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        if !(self.rel_tol > T::zero()) {
            return Err(LinalgError::InvalidConfig(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == Some(0) {
            return Err(LinalgError::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iters.unwrap_or(10 * n.max(1))
    }
}

/// Null space of a pure-Neumann operator: the constants.
///
/// Right-hand sides are made consistent by removing their mean, and the
/// returned solution has zero mean with respect to `weights` (typically the
/// lumped mass vector).
#[derive(Debug, Clone, PartialEq)]
pub enum NullSpace<T> {
    MeanZero { weights: Vec<T> },
}

impl<T: Real> NullSpace<T> {
    /// Removes the constant component that makes `b` inconsistent.
    /// Returns the norm of the removed part.
    pub fn project_rhs(&self, b: &mut [T]) -> T {
        let n = T::from_usize_lossy(b.len());
        let mean = b.iter().copied().sum::<T>() / n;
        b.iter_mut().for_each(|v| *v -= mean);
        mean.abs() * n.sqrt()
    }

    pub fn project_solution(&self, x: &mut [T]) {
        let NullSpace::MeanZero { weights } = self;
        let wsum: T = weights.iter().copied().sum();
        let m = dot(weights, x) / wsum;
        x.iter_mut().for_each(|v| *v -= m);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats<T> {
    pub iterations: usize,
    /// True relative residual, recomputed from the returned solution.
    pub residual: T,
    /// Relative size of the constant component removed from `b`.
    pub inconsistency: T,
}

fn check_dims<T: Real>(a: &SparseMatrix<T>, b: &[T]) -> Result<(), LinalgError> {
    if a.n_rows != a.n_cols {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n_rows,
            got: a.n_cols,
        });
    }
    if b.len() != a.n_rows {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n_rows,
            got: b.len(),
        });
    }
    Ok(())
}

fn inv_diag<T: Real>(a: &SparseMatrix<T>, jacobi: bool) -> Vec<T> {
    a.diagonal()
        .into_iter()
        .map(|d| {
            if jacobi && d != T::zero() {
                T::one() / d
            } else {
                T::one()
            }
        })
        .collect()
}

fn true_residual<T: Real>(a: &SparseMatrix<T>, x: &[T], b: &[T], r: &mut [T]) {
    a.spmv_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = *bi - *ri;
    }
}

/// Solves `A x = b` with the configured Krylov method, optionally on the
/// mean-zero subspace.
pub fn solve<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    cfg: &SolverConfig<T>,
    nullspace: Option<&NullSpace<T>>,
) -> Result<(Vec<T>, SolveStats<T>), LinalgError> {
    let x0 = vec![T::zero(); b.len()];
    solve_from(a, b, x0, cfg, nullspace)
}

/// [`solve`] starting from the initial guess `x0`.
pub fn solve_from<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    mut x: Vec<T>,
    cfg: &SolverConfig<T>,
    nullspace: Option<&NullSpace<T>>,
) -> Result<(Vec<T>, SolveStats<T>), LinalgError> {
    cfg.validate()?;
    check_dims(a, b)?;
    if x.len() != b.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: b.len(),
            got: x.len(),
        });
    }
    let mut rhs = b.to_vec();
    let mut inconsistency = T::zero();
    if let Some(ns) = nullspace {
        let NullSpace::MeanZero { weights } = ns;
        if weights.len() != b.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: b.len(),
                got: weights.len(),
            });
        }
        let bnorm = norm2(b);
        let removed = ns.project_rhs(&mut rhs);
        if bnorm > T::zero() {
            inconsistency = removed / bnorm;
        }
        if let Some(tol) = cfg.consistency_tol {
            if inconsistency > tol {
                return Err(LinalgError::InconsistentRhs(inconsistency.as_f64()));
            }
        }
    }
    let mut stats = match cfg.method {
        SolverMethod::Cg => cg(a, &rhs, &mut x, cfg, nullspace)?,
        SolverMethod::BiCgStab => bicgstab(a, &rhs, &mut x, cfg)?,
    };
    if let Some(ns) = nullspace {
        ns.project_solution(&mut x);
    }
    stats.inconsistency = inconsistency;
    Ok((x, stats))
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// (semi-)definite systems. `b` must already be consistent when a null
/// space is given; residuals are kept orthogonal to the constants.
pub fn cg<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    x: &mut [T],
    cfg: &SolverConfig<T>,
    nullspace: Option<&NullSpace<T>>,
) -> Result<SolveStats<T>, LinalgError> {
    check_dims(a, b)?;
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveStats {
            iterations: 0,
            residual: T::zero(),
            inconsistency: T::zero(),
        });
    }
    let target = cfg.rel_tol * bnorm;
    let dinv = inv_diag(a, cfg.jacobi);
    let cap = cfg.cap(n);
    let mut r = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let mut it = 0;

    // outer loop restarts from the recomputed residual so the stopping test
    // never trusts the recurrence
    loop {
        true_residual(a, x, b, &mut r);
        if let Some(ns) = nullspace {
            ns.project_rhs(&mut r);
        }
        let rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(SolveStats {
                iterations: it,
                residual: rnorm / bnorm,
                inconsistency: T::zero(),
            });
        }
        if it >= cap {
            return Err(LinalgError::NotConverged {
                method: "cg",
                iterations: it,
                residual: (rnorm / bnorm).as_f64(),
            });
        }
        for i in 0..n {
            z[i] = dinv[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while it < cap {
            it += 1;
            a.spmv_into(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > T::zero()) {
                break;
            }
            let alpha = rz / pq;
            axpy(alpha, &p, x);
            axpy(-alpha, &q, &mut r);
            if let Some(ns) = nullspace {
                ns.project_rhs(&mut r);
            }
            if norm2(&r) <= target * T::lit(0.5) {
                break;
            }
            for i in 0..n {
                z[i] = dinv[i] * r[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Jacobi right-preconditioned BiCGStab for general square systems.
pub fn bicgstab<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    x: &mut [T],
    cfg: &SolverConfig<T>,
) -> Result<SolveStats<T>, LinalgError> {
    check_dims(a, b)?;
    let dinv = inv_diag(a, cfg.jacobi);
    bicgstab_preconditioned(a, b, x, cfg, |r: &[T], z: &mut [T]| {
        for i in 0..r.len() {
            z[i] = dinv[i] * r[i];
        }
    })
}

/// BiCGStab with the right preconditioner `z = P⁻¹ r` given by `precond`.
pub fn bicgstab_preconditioned<T: Real>(
    a: &SparseMatrix<T>,
    b: &[T],
    x: &mut [T],
    cfg: &SolverConfig<T>,
    precond: impl Fn(&[T], &mut [T]),
) -> Result<SolveStats<T>, LinalgError> {
    check_dims(a, b)?;
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveStats {
            iterations: 0,
            residual: T::zero(),
            inconsistency: T::zero(),
        });
    }
    let target = cfg.rel_tol * bnorm;
    let cap = cfg.cap(n);
    let mut r = vec![T::zero(); n];
    let mut rhat = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut phat = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut shat = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut it = 0;
    let mut restarts = 0;

    loop {
        true_residual(a, x, b, &mut r);
        let rnorm = norm2(&r);
        if !rnorm.is_finite() {
            return Err(LinalgError::Breakdown {
                method: "bicgstab",
                iterations: it,
            });
        }
        if rnorm <= target {
            return Ok(SolveStats {
                iterations: it,
                residual: rnorm / bnorm,
                inconsistency: T::zero(),
            });
        }
        if it >= cap {
            return Err(LinalgError::NotConverged {
                method: "bicgstab",
                iterations: it,
                residual: (rnorm / bnorm).as_f64(),
            });
        }
        if restarts > 50 {
            return Err(LinalgError::Breakdown {
                method: "bicgstab",
                iterations: it,
            });
        }
        restarts += 1;
        rhat.copy_from_slice(&r);
        p.iter_mut().for_each(|e| *e = T::zero());
        v.iter_mut().for_each(|e| *e = T::zero());
        let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
        while it < cap {
            it += 1;
            let rho_new = dot(&rhat, &r);
            if rho_new.abs() <= T::min_positive_value() || omega == T::zero() || !rho_new.is_finite() {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond(&p, &mut phat);
            a.spmv_into(&phat, &mut v);
            let rv = dot(&rhat, &v);
            if rv == T::zero() || !rv.is_finite() {
                break;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) <= target * T::lit(0.5) {
                axpy(alpha, &phat, x);
                break;
            }
            precond(&s, &mut shat);
            a.spmv_into(&shat, &mut t);
            let tt = dot(&t, &t);
            if tt == T::zero() || !tt.is_finite() {
                axpy(alpha, &phat, x);
                break;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * phat[i] + omega * shat[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm2(&r) <= target * T::lit(0.5) {
                break;
            }
        }
    }
}
