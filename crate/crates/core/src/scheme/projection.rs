//! Discrete pressure-correction projection.
//!
//! Solves, on the interior velocity dofs,
//!
//! ```text
//! M u + τ G ψ = M ũ,    Gᵀ u = 0,
//! ```
//!
//! through the pressure Schur complement `S = Gᵀ M⁻¹ G`, which is singular
//! only on the constants. `ψ` is returned with zero lumped-mass mean.

use std::thread;

use crate::linalg::{to_sparse, BandCholesky, DenseCholesky, LinalgError, SparseMatrix, TripletBuffer};
use crate::real::{dot, norm2, Real};

/// How the Schur complement system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMethod {
    /// Dense factorization up to [`DENSE_SCHUR_LIMIT`] pressure dofs, PCG above.
    Auto,
    /// Assemble and factor `S` once; each step is two triangular solves.
    Dense,
    /// Conjugate gradients on `S`, preconditioned by the pressure Laplacian.
    Iterative,
}

pub const DENSE_SCHUR_LIMIT: usize = 5000;

#[derive(Debug, Clone)]
enum SchurSolver<T> {
    Dense(DenseCholesky<T>),
    Iterative { precond: BandCholesky<T> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionStats<T> {
    pub iterations: usize,
    /// `‖Gᵀu‖` after the projection.
    pub divergence: T,
    /// `‖Gᵀũ‖` before the projection.
    pub divergence_before: T,
}

#[derive(Debug, Clone)]
pub struct Projection<T> {
    n_nodes: usize,
    /// scalar node -> index among interior nodes
    node_to_free: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
    mass: BandCholesky<T>,
    /// `(∇q_j, v_i)` over all velocity dofs
    g: SparseMatrix<T>,
    gt: SparseMatrix<T>,
    weights: Vec<T>,
    pin: usize,
    schur: SchurSolver<T>,
    rel_tol: T,
}

impl<T: Real> Projection<T> {
    /// `mass_v`, `grad` and `stiff_p` are the assembled vector mass, pressure
    /// gradient and P1 stiffness; `boundary` masks the velocity dofs with
    /// essential conditions; `weights` are the lumped P1 masses.
    pub fn new(
        mass_v: &SparseMatrix<T>,
        grad: &SparseMatrix<T>,
        stiff_p: &SparseMatrix<T>,
        boundary: &[bool],
        weights: Vec<T>,
        method: ProjectionMethod,
        rel_tol: T,
    ) -> Result<Self, LinalgError> {
        let n_nodes = mass_v.n_rows / 2;
        let mut node_to_free = vec![None; n_nodes];
        let mut free_nodes = Vec::new();
        for node in 0..n_nodes {
            if !boundary[node] {
                node_to_free[node] = Some(free_nodes.len());
                free_nodes.push(node);
            }
        }
        // component blocks of the vector mass are identical; factor one
        let mut buf = TripletBuffer::new();
        for (fi, &node) in free_nodes.iter().enumerate() {
            for (j, v) in mass_v.row(node) {
                if j < n_nodes {
                    if let Some(fj) = node_to_free[j] {
                        buf.push(fi, fj, v);
                    }
                }
            }
        }
        let mass = BandCholesky::new(&to_sparse(&buf, free_nodes.len(), free_nodes.len())?)?;

        let np = grad.n_cols;
        let pin = np - 1;
        let mut proj = Projection {
            n_nodes,
            node_to_free,
            free_nodes,
            mass,
            g: grad.clone(),
            gt: grad.transpose(),
            weights,
            pin,
            schur: SchurSolver::Iterative {
                precond: pinned_factor(stiff_p, pin)?,
            },
            rel_tol,
        };
        let dense = match method {
            ProjectionMethod::Auto => np <= DENSE_SCHUR_LIMIT,
            ProjectionMethod::Dense => true,
            ProjectionMethod::Iterative => false,
        };
        if dense {
            proj.schur = SchurSolver::Dense(proj.dense_schur()?);
        }
        Ok(proj)
    }

    pub fn mass_bandwidth(&self) -> usize {
        self.mass.bandwidth()
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.schur, SchurSolver::Dense(_))
    }

    /// `M⁻¹ r` on interior dofs; boundary entries of the result are zero.
    pub fn apply_mass_inverse(&self, r: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); r.len()];
        let nf = self.free_nodes.len();
        let mut sx = vec![T::zero(); nf];
        let mut sy = vec![T::zero(); nf];
        for (fi, &node) in self.free_nodes.iter().enumerate() {
            sx[fi] = r[node];
            sy[fi] = r[self.n_nodes + node];
        }
        self.mass.solve_pair_in_place(&mut sx, &mut sy);
        for (fi, &node) in self.free_nodes.iter().enumerate() {
            out[node] = sx[fi];
            out[self.n_nodes + node] = sy[fi];
        }
        out
    }

    fn restrict(&self, v: &mut [T]) {
        for c in 0..2 {
            for node in 0..self.n_nodes {
                if self.node_to_free[node].is_none() {
                    v[c * self.n_nodes + node] = T::zero();
                }
            }
        }
    }

    /// `Gᵀ u`: the divergence tested against every pressure basis function.
    pub fn divergence(&self, u: &[T]) -> Vec<T> {
        let mut w = u.to_vec();
        self.restrict(&mut w);
        self.gt.mul_vec(&w)
    }

    /// `Gᵀ M⁻¹ G ψ`.
    pub fn schur_apply(&self, psi: &[T]) -> Vec<T> {
        let mut g = self.g.mul_vec(psi);
        self.restrict(&mut g);
        self.gt.mul_vec(&self.apply_mass_inverse(&g))
    }

    /// `ψᵀ S ψ = ‖P∇ψ‖²`, the squared norm of the L² projection of `∇ψ` onto
    /// the discrete velocity space.
    pub fn projected_gradient_norm2(&self, psi: &[T]) -> T {
        dot(psi, &self.schur_apply(psi))
    }

    fn dense_schur(&self) -> Result<DenseCholesky<T>, LinalgError> {
        let np = self.g.n_cols;
        let nf = self.free_nodes.len();
        let mut s = vec![T::zero(); np * np];
        let threads = thread::available_parallelism().map_or(1, |n| n.get()).min(16);
        let chunk = np.div_ceil(threads);
        thread::scope(|scope| {
            for (ci, cols) in s.chunks_mut(chunk * np).enumerate() {
                scope.spawn(move || {
                    let mut rhs = [vec![T::zero(); nf], vec![T::zero(); nf]];
                    let mut full = vec![T::zero(); 2 * self.n_nodes];
                    for (k, col) in cols.chunks_mut(np).enumerate() {
                        let j = ci * chunk + k;
                        rhs[0].iter_mut().for_each(|v| *v = T::zero());
                        rhs[1].iter_mut().for_each(|v| *v = T::zero());
                        for (i, v) in self.gt.row(j) {
                            let (c, node) = (i / self.n_nodes, i % self.n_nodes);
                            if let Some(fi) = self.node_to_free[node] {
                                rhs[c][fi] = v;
                            }
                        }
                        full.iter_mut().for_each(|v| *v = T::zero());
                        let [rx, ry] = &mut rhs;
                        self.mass.solve_pair_in_place(rx, ry);
                        for (fi, &node) in self.free_nodes.iter().enumerate() {
                            full[node] = rx[fi];
                            full[self.n_nodes + node] = ry[fi];
                        }
                        // S is symmetric: column j stored as row j
                        self.gt.spmv_into(&full, col);
                    }
                });
            }
        });
        for k in 0..np {
            s[self.pin * np + k] = T::zero();
            s[k * np + self.pin] = T::zero();
        }
        s[self.pin * np + self.pin] = T::one();
        DenseCholesky::new(np, s, T::lit(1e-13))
    }

    fn mean_free(&self, x: &mut [T]) {
        let wsum: T = self.weights.iter().copied().sum();
        let m = dot(&self.weights, x) / wsum;
        x.iter_mut().for_each(|v| *v -= m);
    }

    /// Solves `S ψ = b` for a consistent `b`.
    pub fn solve_schur(&self, b: &[T]) -> Result<(Vec<T>, usize), LinalgError> {
        let n = b.len();
        let mut rhs = b.to_vec();
        let mean = rhs.iter().copied().sum::<T>() / T::from_usize_lossy(n);
        rhs.iter_mut().for_each(|v| *v -= mean);
        match &self.schur {
            SchurSolver::Dense(f) => {
                rhs[self.pin] = T::zero();
                f.solve_in_place(&mut rhs);
                self.mean_free(&mut rhs);
                Ok((rhs, 0))
            }
            SchurSolver::Iterative { precond } => {
                let x = self.pcg(&rhs, precond)?;
                Ok(x)
            }
        }
    }

    fn pcg(&self, b: &[T], precond: &BandCholesky<T>) -> Result<(Vec<T>, usize), LinalgError> {
        let n = b.len();
        let bnorm = norm2(b);
        let mut x = vec![T::zero(); n];
        if bnorm == T::zero() {
            return Ok((x, 0));
        }
        let target = self.rel_tol * bnorm;
        let prec = |r: &[T]| {
            let mut z = r.to_vec();
            z[self.pin] = T::zero();
            precond.solve_in_place(&mut z);
            let m = z.iter().copied().sum::<T>() / T::from_usize_lossy(n);
            z.iter_mut().for_each(|v| *v -= m);
            z
        };
        let mut r = b.to_vec();
        let mut z = prec(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let cap = 10 * n;
        for it in 1..=cap {
            let q = self.schur_apply(&p);
            let alpha = rz / dot(&p, &q);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            if norm2(&r) <= target {
                self.mean_free(&mut x);
                return Ok((x, it));
            }
            z = prec(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(LinalgError::NotConverged {
            method: "schur-pcg",
            iterations: cap,
            residual: (norm2(&r) / bnorm).as_f64(),
        })
    }

    /// Projects `ũ` onto the discretely divergence-free interior fields.
    /// Returns the pressure increment `ψ` and the projected velocity.
    pub fn project(&self, u_tilde: &[T], tau: T) -> Result<(Vec<T>, Vec<T>, ProjectionStats<T>), LinalgError> {
        let div0 = self.divergence(u_tilde);
        let b: Vec<T> = div0.iter().map(|v| *v / tau).collect();
        let (psi, iterations) = self.solve_schur(&b)?;
        let mut g = self.g.mul_vec(&psi);
        self.restrict(&mut g);
        let corr = self.apply_mass_inverse(&g);
        let mut u: Vec<T> = u_tilde.iter().zip(&corr).map(|(a, c)| *a - tau * *c).collect();
        self.restrict(&mut u);
        let divergence = norm2(&self.divergence(&u));
        Ok((
            psi,
            u,
            ProjectionStats {
                iterations,
                divergence,
                divergence_before: norm2(&div0),
            },
        ))
    }
}

/// Banded factor of a Laplacian with dof `pin` replaced by an identity row.
fn pinned_factor<T: Real>(a: &SparseMatrix<T>, pin: usize) -> Result<BandCholesky<T>, LinalgError> {
    let mut buf = TripletBuffer::with_capacity(a.nnz());
    for i in 0..a.n_rows {
        if i == pin {
            buf.push(i, i, T::one());
            continue;
        }
        for (j, v) in a.row(i) {
            if j != pin {
                buf.push(i, j, v);
            }
        }
    }
    BandCholesky::new(&to_sparse(&buf, a.n_rows, a.n_cols)?)
}
