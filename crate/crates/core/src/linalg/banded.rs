use std::collections::VecDeque;

use super::{LinalgError, SparseMatrix};
use crate::real::{axpy, dot, Real};

/// Reverse Cuthill–McKee ordering of the symmetric sparsity graph of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Real>(a: &SparseMatrix<T>) -> Vec<usize> {
    let n = a.n_rows;
    let degree: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> (Vec<usize>, usize) {
        let mut seen = visited.to_vec();
        let mut frontier = vec![start];
        seen[start] = true;
        let mut last = vec![start];
        let mut depth = 0;
        while !frontier.is_empty() {
            last = frontier.clone();
            let mut next = Vec::new();
            for &v in &frontier {
                for (w, _) in a.row(v) {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            if !next.is_empty() {
                depth += 1;
            }
            frontier = next;
        }
        (last, depth)
    };

    while order.len() < n {
        // pseudo-peripheral start: minimum degree node, then walk to the far level
        let mut start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node exists");
        let (mut last, mut depth) = bfs_levels(start, &visited);
        loop {
            let cand = *last.iter().min_by_key(|&&i| (degree[i], i)).unwrap();
            let (l2, d2) = bfs_levels(cand, &visited);
            if d2 > depth {
                start = cand;
                last = l2;
                depth = d2;
            } else {
                break;
            }
        }

        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).map(|(w, _)| w).filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor of a symmetric positive definite sparse matrix, stored in
/// band form after a bandwidth-reducing permutation.
#[derive(Debug, Clone)]
pub struct BandCholesky<T> {
    n: usize,
    bw: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// row `i` holds `L[i][i - bw ..= i]`
    band: Vec<T>,
}

impl<T: Real> BandCholesky<T> {
    pub fn new(a: &SparseMatrix<T>) -> Result<Self, LinalgError> {
        if a.n_rows != a.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: a.n_rows,
                got: a.n_cols,
            });
        }
        let n = a.n_rows;
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut bw = 0;
        for i in 0..n {
            for (j, _) in a.row(i) {
                bw = bw.max(inv[i].abs_diff(inv[j]));
            }
        }
        let w = bw + 1;
        let mut band = vec![T::zero(); n * w];
        for i in 0..n {
            let pi = inv[i];
            for (j, v) in a.row(i) {
                let pj = inv[j];
                if pj <= pi {
                    band[pi * w + (pj + bw - pi)] = v;
                }
            }
        }

        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                // L[i][lo..j] and L[j][lo..j] are contiguous in their rows
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                let klo = lo.max(j.saturating_sub(bw));
                let s = band[ri + j] - dot(&band[ri + klo..ri + j], &band[rj + klo..rj + j]);
                if i == j {
                    if !(s > T::zero()) {
                        return Err(LinalgError::NotPositiveDefinite {
                            pivot: perm[i],
                            value: s.as_f64(),
                        });
                    }
                    band[ri + i] = s.sqrt();
                } else {
                    band[ri + j] = s / band[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, bw, perm, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y: Vec<T> = self.perm.iter().map(|&o| b[o]).collect();
        // skip the leading zeros of sparse right-hand sides
        let first = y.iter().position(|v| *v != T::zero()).unwrap_or(n);
        for i in first..n {
            let lo = i.saturating_sub(bw).max(first);
            let r = i * w + bw - i;
            y[i] = (y[i] - dot(&self.band[r + lo..r + i], &y[lo..i])) / self.band[r + i];
        }
        for i in (0..n).rev() {
            let r = i * w + bw - i;
            let yi = y[i] / self.band[r + i];
            y[i] = yi;
            let lo = i.saturating_sub(bw);
            axpy(-yi, &self.band[r + lo..r + i], &mut y[lo..i]);
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    /// Solves `A x = a` and `A y = b` in one sweep over the factor.
    pub fn solve_pair_in_place(&self, a: &mut [T], b: &mut [T]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut ya: Vec<T> = self.perm.iter().map(|&o| a[o]).collect();
        let mut yb: Vec<T> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let r = i * w + bw - i;
            let (sa, sb) = dot_pair(&self.band[r + lo..r + i], &ya[lo..i], &yb[lo..i]);
            let d = self.band[r + i];
            ya[i] = (ya[i] - sa) / d;
            yb[i] = (yb[i] - sb) / d;
        }
        for i in (0..n).rev() {
            let r = i * w + bw - i;
            let d = self.band[r + i];
            let (ai, bi) = (ya[i] / d, yb[i] / d);
            ya[i] = ai;
            yb[i] = bi;
            let lo = i.saturating_sub(bw);
            let row = &self.band[r + lo..r + i];
            for ((l, x), y) in row.iter().zip(&mut ya[lo..i]).zip(&mut yb[lo..i]) {
                *x -= ai * *l;
                *y -= bi * *l;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            a[old] = ya[new];
            b[old] = yb[new];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// `(l·x, l·y)` with fixed partial sums.
fn dot_pair<T: Real>(l: &[T], x: &[T], y: &[T]) -> (T, T) {
    let mut sx = [T::zero(); 4];
    let mut sy = [T::zero(); 4];
    let mut cl = l.chunks_exact(4);
    let mut cx = x.chunks_exact(4);
    let mut cy = y.chunks_exact(4);
    for ((l4, x4), y4) in (&mut cl).zip(&mut cx).zip(&mut cy) {
        for k in 0..4 {
            sx[k] += l4[k] * x4[k];
            sy[k] += l4[k] * y4[k];
        }
    }
    let (mut tx, mut ty) = (T::zero(), T::zero());
    for ((l, x), y) in cl.remainder().iter().zip(cx.remainder()).zip(cy.remainder()) {
        tx += *l * *x;
        ty += *l * *y;
    }
    (
        (sx[0] + sx[1]) + (sx[2] + sx[3]) + tx,
        (sy[0] + sy[1]) + (sy[2] + sy[3]) + ty,
    )
}
