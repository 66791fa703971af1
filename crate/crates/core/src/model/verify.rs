use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Mode, ModelError, Problem};
use crate::linalg::{norm2, Mat};

/// Largest relative error accepted by [`verify_derivatives`].
pub const FD_PASS_TOL: f64 = 1e-5;

fn step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Central-difference Jacobian of `field` in `x`; rows are outputs.
pub fn fd_jacobian<E>(field: impl Fn(&[f64], f64) -> Result<Vec<f64>, E>, x: &[f64], t: f64) -> Result<Mat, E> {
    let rows = field(x, t)?.len();
    let mut jac = Mat::zeros(rows, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let hj = step(x[j]);
        xp[j] = x[j] + hj;
        let fp = field(&xp, t)?;
        xp[j] = x[j] - hj;
        let fm = field(&xp, t)?;
        xp[j] = x[j];
        for i in 0..rows {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * hj);
        }
    }
    Ok(jac)
}

fn fd_time<E>(f: impl Fn(f64) -> Result<Vec<f64>, E>, t: f64) -> Result<Vec<f64>, E> {
    let ht = step(t);
    let fp = f(t + ht)?;
    let fm = f(t - ht)?;
    Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * ht)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub samples: usize,
    pub rejected: usize,
    pub checks: Vec<DerivativeCheck>,
    pub passed: bool,
}

impl DerivativeReport {
    pub fn failures(&self) -> impl Iterator<Item = &DerivativeCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn rel_err(symbolic: f64, fd: f64) -> f64 {
    (symbolic - fd).abs() / fd.abs().max(1.0)
}

fn mat_err(symbolic: &Mat, fd: &Mat) -> f64 {
    symbolic
        .as_slice()
        .iter()
        .zip(fd.as_slice())
        .map(|(a, b)| rel_err(*a, *b))
        .fold(0.0, f64::max)
}

/// Per-object errors at one point, in the order of `names`.
fn errors_at(p: &Problem, x: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
    let mut out = Vec::new();
    let fj = p.field_jacobian(x, t)?;
    out.push(mat_err(&fj, &fd_jacobian(|y, s| p.field(y, s), x, t)?));
    if p.mode() == Mode::Minimize {
        let g = Mat::from_rows(&[p.cost_gradient(x, t)?]);
        let fd_g = fd_jacobian(|y, s| Ok::<_, ModelError>(vec![p.cost_value(y, s)?.unwrap_or(0.0)]), x, t)?;
        out.push(mat_err(&g, &fd_g));
        let hess = p.cost_hessian(x, t)?;
        out.push(mat_err(&hess, &fd_jacobian(|y, s| p.cost_gradient(y, s), x, t)?));
    }
    let jac = p.constraint_jacobian(x, t)?;
    let fd_jac = fd_jacobian(|y, s| p.constraint_values(y, s), x, t)?;
    let hessians = p.constraint_hessians(x, t)?;
    let dts = p.constraint_time_partials(x, t)?;
    let fd_dts = fd_time(|s| p.constraint_values(x, s), t)?;
    for i in 0..p.m() {
        out.push(mat_err(&Mat::from_rows(&[jac.row(i)]), &Mat::from_rows(&[fd_jac.row(i)])));
        let fd_h = fd_jacobian(|y, s| Ok::<_, ModelError>(p.constraint_jacobian(y, s)?.row(i).to_vec()), x, t)?;
        out.push(mat_err(&hessians[i], &fd_h));
        out.push(rel_err(dts[i], fd_dts[i]));
    }
    Ok(out)
}

fn check_names(p: &Problem) -> Vec<String> {
    let mut names = vec!["field jacobian".to_string()];
    if p.mode() == Mode::Minimize {
        names.push("cost gradient".into());
        names.push("cost hessian".into());
    }
    for i in 0..p.m() {
        names.push(format!("constraint {i} gradient"));
        names.push(format!("constraint {i} hessian"));
        names.push(format!("constraint {i} time partial"));
    }
    names
}

/// Compares every symbolic derivative of `p` with central differences at
/// `samples` points drawn from `[-2, 2]^n x [t0, t0 + 5]`.
///
/// Points where an expression is undefined nearby, or where some constraint
/// gradient (nearly) vanishes, are rejected and redrawn.
pub fn verify_derivatives(p: &Problem, samples: usize, seed: u64) -> DerivativeReport {
    let names = check_names(p);
    let mut worst = vec![0.0f64; names.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    let mut rejected = 0;
    let max_attempts = 100 * samples + 100;
    while accepted < samples && accepted + rejected < max_attempts {
        let x: Vec<f64> = (0..p.n()).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let t = p.t0 + rng.gen_range(0.0..=5.0);
        let regular = p
            .constraint_jacobian(&x, t)
            .map(|j| (0..p.m()).all(|i| norm2(j.row(i)) > 1e-8))
            .unwrap_or(false);
        let errs = if regular { errors_at(p, &x, t).ok() } else { None };
        match errs {
            Some(errs) if errs.iter().all(|e| e.is_finite()) => {
                for (w, e) in worst.iter_mut().zip(errs) {
                    *w = w.max(e);
                }
                accepted += 1;
            }
            _ => rejected += 1,
        }
    }
    let checks: Vec<DerivativeCheck> = names
        .into_iter()
        .zip(worst)
        .map(|(name, max_rel_error)| DerivativeCheck { name, max_rel_error, passed: max_rel_error <= FD_PASS_TOL })
        .collect();
    let passed = accepted == samples && checks.iter().all(|c| c.passed);
    DerivativeReport { samples: accepted, rejected, checks, passed }
}
