//! Dense symmetric-positive-definite helpers.
//!
//! nalgebra's own Cholesky is unblocked; the factorizations here are blocked
//! so that the O(n³) work runs through `gemm`, which matters once the
//! training set reaches a few thousand points.

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

const BLOCK: usize = 64;

/// Relative jitter bounds (multiples of the mean diagonal).
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`. The strict upper
/// triangle is kept at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerFactor {
    l: DMatrix<f64>,
}

impl LowerFactor {
    /// Factors a symmetric matrix (only the lower triangle is read).
    /// Returns `None` if a pivot is not strictly positive.
    pub fn factor(mut a: DMatrix<f64>) -> Option<Self> {
        assert!(a.is_square(), "cholesky of a non-square matrix");
        let n = a.nrows();
        let mut kb = 0;
        while kb < n {
            let nb = BLOCK.min(n - kb);
            let end = kb + nb;
            // Diagonal block and the panel below it, column by column.
            for j in kb..end {
                let mut d = a[(j, j)];
                for k in kb..j {
                    d -= a[(j, k)] * a[(j, k)];
                }
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                let ljj = d.sqrt();
                a[(j, j)] = ljj;
                for k in kb..j {
                    let ljk = a[(j, k)];
                    if ljk != 0.0 {
                        for i in (j + 1)..n {
                            let v = a[(i, k)];
                            a[(i, j)] -= v * ljk;
                        }
                    }
                }
                let inv = 1.0 / ljj;
                for i in (j + 1)..n {
                    a[(i, j)] *= inv;
                }
            }
            // Trailing update of the lower triangle: A22 -= L21 L21ᵀ.
            if end < n {
                let panel_t = a.view((end, kb), (n - end, nb)).transpose();
                let mut jb = end;
                while jb < n {
                    let w = BLOCK.min(n - jb);
                    let rows = n - jb;
                    let left = panel_t.columns(jb - end, rows);
                    let right = panel_t.columns(jb - end, w);
                    a.view_mut((jb, jb), (rows, w))
                        .gemm_tr(-1.0, &left, &right, 1.0);
                    jb += w;
                }
            }
            kb = end;
        }
        for j in 1..n {
            for i in 0..j {
                a[(i, j)] = 0.0;
            }
        }
        Some(Self { l: a })
    }

    /// Wraps an already lower-triangular factor.
    pub fn from_lower(l: DMatrix<f64>) -> Self {
        debug_assert!(l.is_square());
        Self { l }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `log |A| = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        for j in 0..n {
            let xj = b[j] / self.l[(j, j)];
            b[j] = xj;
            if xj != 0.0 {
                let col = self.l.column(j);
                for i in (j + 1)..n {
                    b[i] -= col[i] * xj;
                }
            }
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        for j in (0..n).rev() {
            let col = self.l.column(j);
            let mut s = b[j];
            for i in (j + 1)..n {
                s -= col[i] * b[i];
            }
            b[j] = s / col[j];
        }
    }

    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(x.as_mut_slice());
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(x.as_mut_slice());
        self.solve_upper_in_place(x.as_mut_slice());
        x
    }

    /// Solves `L X = B` in place for a block of right-hand sides.
    pub fn solve_lower_mat(&self, b: &mut DMatrix<f64>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        let m = b.ncols();
        let mut kb = 0;
        while kb < n {
            let nb = BLOCK.min(n - kb);
            let end = kb + nb;
            for c in 0..m {
                for j in kb..end {
                    let xj = b[(j, c)] / self.l[(j, j)];
                    b[(j, c)] = xj;
                    for i in (j + 1)..end {
                        b[(i, c)] -= self.l[(i, j)] * xj;
                    }
                }
            }
            if end < n {
                let solved = b.rows(kb, nb).clone_owned();
                let l21 = self.l.view((end, kb), (n - end, nb));
                b.rows_mut(end, n - end).gemm(-1.0, &l21, &solved, 1.0);
            }
            kb = end;
        }
    }

    /// Solves `Lᵀ X = B` in place for a block of right-hand sides.
    pub fn solve_upper_mat(&self, b: &mut DMatrix<f64>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        let m = b.ncols();
        let mut end = n;
        while end > 0 {
            let nb = BLOCK.min(end);
            let kb = end - nb;
            for c in 0..m {
                for j in (kb..end).rev() {
                    let mut s = b[(j, c)];
                    for i in (j + 1)..end {
                        s -= self.l[(i, j)] * b[(i, c)];
                    }
                    b[(j, c)] = s / self.l[(j, j)];
                }
            }
            if kb > 0 {
                let solved = b.rows(kb, nb).clone_owned();
                let l_block = self.l.view((kb, 0), (nb, kb));
                b.rows_mut(0, kb).gemm_tr(-1.0, &l_block, &solved, 1.0);
            }
            end = kb;
        }
    }

    /// `L⁻¹` as a dense lower-triangular matrix.
    pub fn inverse_factor(&self) -> DMatrix<f64> {
        let mut x = DMatrix::identity(self.dim(), self.dim());
        self.solve_lower_mat(&mut x);
        x
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let li = self.inverse_factor();
        let mut inv = li.transpose() * &li;
        symmetrize(&mut inv);
        inv
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

/// A factorization together with the diagonal inflation that made it succeed.
#[derive(Clone, Debug, PartialEq)]
pub struct Jittered {
    pub factor: LowerFactor,
    pub jitter: f64,
}

/// Cholesky with jitter escalation. The matrix is tried as given first; on
/// failure the diagonal is inflated starting at `1e-10·mean(diag)` and grown
/// by 10× up to `1e-4·mean(diag)`, then it gives up.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<Jittered> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Jittered {
            factor: LowerFactor::from_lower(DMatrix::zeros(0, 0)),
            jitter: 0.0,
        });
    }
    let mean_diag = a.diagonal().sum() / n as f64;
    if !(mean_diag > 0.0) || !mean_diag.is_finite() {
        return Err(Error::NotPositiveDefinite { jitter: 0.0 });
    }
    let max = JITTER_MAX * mean_diag * (1.0 + 1e-9);
    if let Some(factor) = LowerFactor::factor(a.clone()) {
        return Ok(Jittered {
            factor,
            jitter: 0.0,
        });
    }
    let mut jitter = JITTER_START * mean_diag;
    loop {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(factor) = LowerFactor::factor(m) {
            return Ok(Jittered { factor, jitter });
        }
        jitter *= 10.0;
        if jitter > max {
            return Err(Error::NotPositiveDefinite {
                jitter: jitter / 10.0,
            });
        }
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
