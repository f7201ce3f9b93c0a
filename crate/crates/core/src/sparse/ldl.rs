//! Up-looking sparse `L D L^T` factorization of symmetric positive-definite matrices.
//!
//! The symbolic phase walks the elimination tree to count nonzeros per column of `L`; the
//! numeric phase computes one row of `L` at a time by a sparse triangular solve restricted to
//! the row's reach in the tree. Columns are reordered with reverse Cuthill-McKee first.

use sprs::CsMat;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite: pivot {value:e} at row {pivot}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
}

/// `P A P^T = L D L^T` with unit lower-triangular `L` stored by columns.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    /// `perm[k]` is the original row eliminated at step `k`.
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl LdlFactor {
    /// Factors a symmetric matrix given with both triangles stored.
    pub fn factor(a: &CsMat<f64>) -> Result<Self, FactorError> {
        if a.rows() != a.cols() {
            return Err(FactorError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let csr = if a.is_csr() { a.clone() } else { a.to_csr() };
        let ordering = sprs::linalg::reverse_cuthill_mckee(csr.view());
        let perm: Vec<usize> = ordering.perm.vec();
        Self::factor_with_ordering(&csr, perm)
    }

    /// Factors with a caller-supplied elimination order.
    pub fn factor_with_ordering(a: &CsMat<f64>, perm: Vec<usize>) -> Result<Self, FactorError> {
        let n = a.rows();
        if n != a.cols() {
            return Err(FactorError::NotSquare {
                rows: n,
                cols: a.cols(),
            });
        }
        assert_eq!(perm.len(), n);
        let mut perm_inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            perm_inv[p] = k;
        }
        // For a symmetric matrix, row `r` of CSR is column `r`.
        let csr = if a.is_csr() { a.clone() } else { a.to_csr() };
        let column = |k: usize| csr.outer_view(k).expect("row in range");

        // Symbolic: elimination tree and column counts.
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (row, _) in column(perm[k]).iter() {
                let mut i = perm_inv[row];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        // Numeric.
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|c| *c = 0);
        flag.iter_mut().for_each(|f| *f = NONE);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for (row, &value) in column(perm[k]).iter() {
                let mut i = perm_inv[row];
                if i <= k {
                    y[i] += value;
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let end = lp[i] + lnz[i];
                for p in lp[i]..end {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[end] = k;
                lx[end] = l_ki;
                lnz[i] += 1;
            }
            if !(d[k] > 0.0) {
                return Err(FactorError::NotPositiveDefinite {
                    pivot: perm[k],
                    value: d[k],
                });
            }
        }
        Ok(Self { n, perm, lp, li, lx, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros strictly below the diagonal of `L`.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Smallest pivot of `D`; a cheap conditioning indicator.
    pub fn min_pivot(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Solves `A x = b` into `x` using `work` (length `n`) as scratch.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_into(&self, b: &[f64], x: &mut [f64], work: &mut [f64]) {
        let n = self.n;
        assert!(b.len() == n && x.len() == n && work.len() == n);
        for k in 0..n {
            work[k] = b[self.perm[k]];
        }
        for j in 0..n {
            let wj = work[j];
            for p in self.lp[j]..self.lp[j + 1] {
                work[self.li[p]] -= self.lx[p] * wj;
            }
        }
        for j in 0..n {
            work[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut acc = work[j];
            for p in self.lp[j]..self.lp[j + 1] {
                acc -= self.lx[p] * work[self.li[p]];
            }
            work[j] = acc;
        }
        for k in 0..n {
            x[self.perm[k]] = work[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        let mut work = vec![0.0; self.n];
        self.solve_into(b, &mut x, &mut work);
        x
    }
}
