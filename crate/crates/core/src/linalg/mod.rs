//! Dense linear algebra for small systems (n up to a few dozen).
//!
//! Everything here is a pure function on immutable inputs: Cholesky solves
//! for Gram systems, Householder QR for orthonormal tangent bases, cyclic
//! Jacobi for symmetric spectra and a Hessenberg + Francis double-shift QR
//! iteration for general real spectra.

mod eig;
mod mat;

use thiserror::Error;

pub use eig::{general_eig, jacobi_sym_eig, EigResult};
pub use mat::{dot, norm2, norm_inf, Mat};

/// Relative pivot / rank tolerance shared by Cholesky and QR.
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix has numerical rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Cholesky factor `G = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    pub fn factor(g: &Mat) -> Result<Self, LinalgError> {
        if !g.is_square() {
            return Err(LinalgError::Shape(format!("Gram matrix is {}x{}", g.rows(), g.cols())));
        }
        if !g.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let asymmetry = g.asymmetry();
        if asymmetry > 1e-12 {
            return Err(LinalgError::NotSymmetric { asymmetry });
        }
        let n = g.rows();
        let max_diag = (0..n).map(|i| g[(i, i)].abs()).fold(0.0, f64::max);
        let floor = PIVOT_TOL * max_diag;
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = g[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= floor || d <= 0.0 {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = g[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &Mat {
        &self.l
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length differs from factor size");
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[(i, k)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[(k, i)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    pub fn solve(&self, b: &Mat) -> Mat {
        assert_eq!(b.rows(), self.dim(), "right-hand side rows differ from factor size");
        let mut out = Mat::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.column(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Solves `G X = B` for symmetric positive definite `G`.
pub fn cholesky_solve(g: &Mat, b: &Mat) -> Result<Mat, LinalgError> {
    Ok(Cholesky::factor(g)?.solve(b))
}

/// Full Householder QR of an `r x c` matrix with `r >= c`: returns the
/// orthogonal `r x r` factor and the diagonal of `R`.
fn householder_qr(a: &Mat) -> (Mat, Vec<f64>) {
    let (r, c) = a.shape();
    let mut rm = a.clone();
    let mut q = Mat::identity(r);
    let mut v = vec![0.0; r];
    for k in 0..c.min(r) {
        let norm_x = (k..r).map(|i| rm[(i, k)] * rm[(i, k)]).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let alpha = if rm[(k, k)] > 0.0 { -norm_x } else { norm_x };
        for i in 0..r {
            v[i] = if i < k { 0.0 } else { rm[(i, k)] };
        }
        v[k] -= alpha;
        let vnorm = (k..r).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for vi in v.iter_mut().skip(k) {
            *vi /= vnorm;
        }
        // R <- (I - 2vvᵀ) R
        for j in k..c {
            let s: f64 = (k..r).map(|i| v[i] * rm[(i, j)]).sum();
            for i in k..r {
                rm[(i, j)] -= 2.0 * s * v[i];
            }
        }
        // Q <- Q (I - 2vvᵀ)
        for i in 0..r {
            let s: f64 = (k..r).map(|j| q[(i, j)] * v[j]).sum();
            for j in k..r {
                q[(i, j)] -= 2.0 * s * v[j];
            }
        }
    }
    let diag = (0..c.min(r)).map(|k| rm[(k, k)]).collect();
    (q, diag)
}

fn check_rank(a: &Mat, diag: &[f64]) -> Result<(), LinalgError> {
    let max_col = (0..a.cols()).map(|j| norm2(&a.column(j))).fold(0.0, f64::max);
    let floor = PIVOT_TOL * max_col;
    let rank = diag.iter().filter(|d| d.abs() > floor).count();
    if rank < diag.len() || max_col == 0.0 {
        return Err(LinalgError::RankDeficient {
            rank: if max_col == 0.0 { 0 } else { rank },
            expected: diag.len(),
        });
    }
    Ok(())
}

/// Orthonormal basis of the null space of `A` (`m x n`, `m < n`), taken as
/// the trailing `n - m` columns of the full QR factor of `Aᵀ`.
pub fn qr_nullspace_basis(a: &Mat) -> Result<Mat, LinalgError> {
    let (m, n) = a.shape();
    if m >= n {
        return Err(LinalgError::Shape(format!("null space of a {m}x{n} matrix needs m < n")));
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if m == 0 {
        return Ok(Mat::identity(n));
    }
    let at = a.transpose();
    let (q, diag) = householder_qr(&at);
    check_rank(&at, &diag)?;
    Ok(q.columns(m, n))
}

/// Orthonormal basis of the column space of `M` (`n x k`, `k <= n`).
pub fn orthonormal_columns(m: &Mat) -> Result<Mat, LinalgError> {
    let (n, k) = m.shape();
    if k > n {
        return Err(LinalgError::Shape(format!("cannot orthonormalize {k} columns in dimension {n}")));
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if k == 0 {
        return Ok(Mat::zeros(n, 0));
    }
    let (q, diag) = householder_qr(m);
    check_rank(m, &diag)?;
    Ok(q.columns(0, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_solve() {
        let x = cholesky_solve(&Mat::from_rows(&[[4.0]]), &Mat::from_rows(&[[2.0]])).unwrap();
        assert_eq!(x, Mat::from_rows(&[[0.5]]));
    }

    #[test]
    fn identity_solve() {
        let b = Mat::from_rows(&[[1.5, -2.0, 3.0], [0.25, 7.0, -1.0]]);
        let x = cholesky_solve(&Mat::identity(2), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn diagonal_solve() {
        let g = Mat::from_rows(&[[4.0, 0.0], [0.0, 2.0]]);
        let x = cholesky_solve(&g, &Mat::from_rows(&[[1.0], [1.0]])).unwrap();
        assert!(x.sub(&Mat::from_rows(&[[0.25], [0.5]])).max_abs() < 1e-15);
    }

    #[test]
    fn singular_gram_reports_pivot() {
        // rows of J dependent: G = J Jᵀ with J = [[1,1],[2,2]]
        let g = Mat::from_rows(&[[2.0, 4.0], [4.0, 8.0]]);
        assert!(matches!(cholesky_solve(&g, &Mat::identity(2)), Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn asymmetric_rejected() {
        let g = Mat::from_rows(&[[2.0, 1.0], [0.0, 2.0]]);
        assert!(matches!(Cholesky::factor(&g), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn simplex_tangent_basis() {
        let a = Mat::from_rows(&[[1.0, 1.0, 1.0, 1.0]]);
        let b = qr_nullspace_basis(&a).unwrap();
        assert_eq!(b.shape(), (4, 3));
        assert!(a.matmul(&b).max_abs() <= 1e-12);
        assert!(b.transpose().matmul(&b).sub(&Mat::identity(3)).max_abs() <= 1e-12);
    }

    #[test]
    fn axis_aligned_bases() {
        let b = qr_nullspace_basis(&Mat::from_rows(&[[2.0, 0.0]])).unwrap();
        assert!(b[(0, 0)].abs() < 1e-15 && (b[(1, 0)].abs() - 1.0).abs() < 1e-15);
        let b = qr_nullspace_basis(&Mat::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])).unwrap();
        assert_eq!(b.shape(), (3, 1));
        assert!(b[(0, 0)].abs() < 1e-15 && b[(1, 0)].abs() < 1e-15);
        assert!((b[(2, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_nullspace() {
        let a = Mat::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]);
        assert!(matches!(qr_nullspace_basis(&a), Err(LinalgError::RankDeficient { rank: 1, expected: 2 })));
        let z = Mat::zeros(1, 3);
        assert!(matches!(qr_nullspace_basis(&z), Err(LinalgError::RankDeficient { rank: 0, .. })));
    }

    #[test]
    fn unconstrained_nullspace_is_identity() {
        assert_eq!(qr_nullspace_basis(&Mat::zeros(0, 3)).unwrap(), Mat::identity(3));
    }

    #[test]
    fn column_space_basis_spans_input() {
        let m = Mat::from_rows(&[[1.0, 2.0], [0.0, 1.0], [1.0, 0.0]]);
        let q = orthonormal_columns(&m).unwrap();
        assert!(q.transpose().matmul(&q).sub(&Mat::identity(2)).max_abs() < 1e-14);
        // projector onto span(q) leaves m unchanged
        let proj = q.matmul(&q.transpose());
        assert!(proj.matmul(&m).sub(&m).max_abs() < 1e-14);
    }
}
