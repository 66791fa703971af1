use num_complex::Complex64;

use super::{LinalgError, Mat};

/// Eigenvalues (and, for symmetric input, eigenvectors as columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EigResult {
    pub values: Vec<Complex64>,
    pub vectors: Option<Mat>,
}

impl EigResult {
    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn max_real(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_real(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Eigenvalues come
/// back sorted ascending, with matching eigenvector columns.
pub fn jacobi_sym_eig(s: &Mat) -> Result<EigResult, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::Shape(format!("eigenproblem on a {}x{} matrix", s.rows(), s.cols())));
    }
    if !s.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let asymmetry = s.asymmetry();
    if asymmetry > 1e-10 {
        return Err(LinalgError::NotSymmetric { asymmetry });
    }
    let n = s.rows();
    let mut a = s.symmetric_part();
    let mut v = Mat::identity(n);
    let target = 1e-12 * s.norm_frobenius();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= target || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| Complex64::new(a[(i, i)], 0.0)).collect();
    let vectors = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(EigResult { values, vectors: Some(vectors) })
}

fn off_diagonal_norm(a: &Mat) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Eigenvalues of a general real matrix: Householder reduction to upper
/// Hessenberg form followed by Francis double-shift QR. Complex values come
/// in conjugate pairs. Fails after `30 * n` QR iterations.
pub fn general_eig(a: &Mat) -> Result<EigResult, LinalgError> {
    if !a.is_square() || a.rows() == 0 {
        return Err(LinalgError::Shape(format!("eigenproblem on a {}x{} matrix", a.rows(), a.cols())));
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let mut h = a.clone();
    hessenberg(&mut h);
    let values = hqr(&h)?;
    Ok(EigResult { values, vectors: None })
}

fn hessenberg(a: &mut Mat) {
    let n = a.rows();
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..(n - 2) {
        let norm_x = ((k + 1)..n).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let alpha = if a[(k + 1, k)] > 0.0 { -norm_x } else { norm_x };
        for i in 0..n {
            v[i] = if i <= k { 0.0 } else { a[(i, k)] };
        }
        v[k + 1] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        // A <- H A H with H = I - 2vvᵀ
        for j in 0..n {
            let s: f64 = ((k + 1)..n).map(|i| v[i] * a[(i, j)]).sum();
            for i in (k + 1)..n {
                a[(i, j)] -= 2.0 * s * v[i];
            }
        }
        for i in 0..n {
            let s: f64 = ((k + 1)..n).map(|j| a[(i, j)] * v[j]).sum();
            for j in (k + 1)..n {
                a[(i, j)] -= 2.0 * s * v[j];
            }
        }
        for i in (k + 2)..n {
            a[(i, k)] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (EISPACK `hqr`
/// structure, 1-based indexing internally).
fn hqr(h: &Mat) -> Result<Vec<Complex64>, LinalgError> {
    let n = h.rows();
    let mut a = vec![vec![0.0f64; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = h[(i, j)];
        }
    }
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }

    let max_iterations = 30 * n;
    let mut total_iterations = 0usize;
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r, mut x, mut y, mut z, mut w): (f64, f64, f64, f64, f64, f64, f64);

    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                y = a[nn - 1][nn - 1];
                w = a[nn][nn - 1] * a[nn - 1][nn];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if total_iterations >= max_iterations {
                        return Err(LinalgError::NoConvergence { iterations: total_iterations });
                    }
                    if its == 10 || its == 20 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            a[i][i] -= x;
                        }
                        let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    total_iterations += 1;
                    let mut m = nn - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s0;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k + 1 <= nn {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nn - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nn - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nn - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn == 0 || l + 1 >= nn {
                break;
            }
        }
    }

    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(e: &EigResult) -> Vec<f64> {
        let mut v = e.real_parts();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn two_by_two_symmetric() {
        let e = jacobi_sym_eig(&Mat::from_rows(&[[2.0, 1.0], [1.0, 2.0]])).unwrap();
        let v = e.real_parts();
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
        assert!(e.values.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn identity_spectrum() {
        let e = jacobi_sym_eig(&Mat::identity(4)).unwrap();
        assert_eq!(e.real_parts(), vec![1.0; 4]);
    }

    #[test]
    fn simplex_projector_spectrum() {
        let p = Mat::from_fn(4, 4, |i, j| if i == j { 0.75 } else { -0.25 });
        let e = jacobi_sym_eig(&p).unwrap();
        let expected = [0.0, 1.0, 1.0, 1.0];
        for (got, want) in e.real_parts().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let v = e.vectors.unwrap();
        let d = Mat::from_fn(4, 4, |i, j| if i == j { e.values[i].re } else { 0.0 });
        assert!(p.matmul(&v).sub(&v.matmul(&d)).max_abs() <= 1e-8 * p.norm_inf());
    }

    #[test]
    fn not_symmetric() {
        let s = Mat::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(jacobi_sym_eig(&s), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn rotation_generator() {
        let e = general_eig(&Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]])).unwrap();
        let mut ims: Vec<f64> = e.values.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!(e.values.iter().all(|z| z.re.abs() < 1e-14));
        assert!((ims[0] + 1.0).abs() < 1e-14 && (ims[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn triangular() {
        let e = general_eig(&Mat::from_rows(&[[1.0, 5.0], [0.0, 2.0]])).unwrap();
        assert_eq!(sorted_re(&e), vec![1.0, 2.0]);
    }

    #[test]
    fn companion_real_roots() {
        let e = general_eig(&Mat::from_rows(&[[0.0, 1.0], [-2.0, -3.0]])).unwrap();
        let v = sorted_re(&e);
        assert!((v[0] + 2.0).abs() < 1e-13 && (v[1] + 1.0).abs() < 1e-13);
    }

    #[test]
    fn one_by_one() {
        let e = general_eig(&Mat::from_rows(&[[-3.5]])).unwrap();
        assert_eq!(e.values, vec![Complex64::new(-3.5, 0.0)]);
    }

    #[test]
    fn larger_block_with_complex_pair() {
        // block diag of rotation-like 2x2 (eigs 1 ± 2i) and diag(3, -4), then a similarity
        let d = Mat::from_rows(&[
            [1.0, 2.0, 0.0, 0.0],
            [-2.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 3.0, 0.0],
            [0.0, 0.0, 0.0, -4.0],
        ]);
        let s = Mat::from_rows(&[
            [1.0, 0.5, 0.0, 0.2],
            [0.0, 1.0, 0.3, 0.0],
            [0.1, 0.0, 1.0, 0.4],
            [0.0, 0.2, 0.0, 1.0],
        ]);
        let s_inv = crate::linalg::Cholesky::factor(&s.transpose().matmul(&s))
            .unwrap()
            .solve(&s.transpose());
        let a = s.matmul(&d).matmul(&s_inv);
        let mut got = general_eig(&a).unwrap().values;
        got.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        let want = [
            Complex64::new(-4.0, 0.0),
            Complex64::new(1.0, -2.0),
            Complex64::new(1.0, 2.0),
            Complex64::new(3.0, 0.0),
        ];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).norm() < 1e-10, "{g} vs {w}");
        }
    }
}
