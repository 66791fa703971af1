//! Contraction margins and second-order optimality reports.
//!
//! The generalized Jacobian of the projected flow is
//! `A = P (∂f/∂x + Σ λ_i ∇²h_i)`; it is restricted to the tangent space
//! through an orthonormal basis `B`, giving `Bᵀ A B`. With a constant metric
//! `Θ` the restriction is `B_Θᵀ (Θ A Θ⁻¹) B_Θ`, `B_Θ` an orthonormal basis of
//! `span(Θ B)`.

use serde::Serialize;
use thiserror::Error;

use crate::flow::{detect_convergence, integrate, Convergence, FlowConfig, FlowError, StepStats, StopRule, Trajectory};
use crate::geometry::{add_normal_force, geometry_at, lambda_static, lambda_timevarying, GeometryError};
use crate::linalg::{
    cholesky_solve, general_eig, jacobi_sym_eig, norm2, norm_inf, orthonormal_columns, Cholesky, LinalgError, Mat,
};
use crate::model::{Metric, Mode, ModelError, Problem};

#[derive(Debug, Error)]
pub enum CertError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Residual below which a point counts as lying on the constraint set.
pub const ON_CONSTRAINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// Largest eigenvalue of the symmetric part.
    HermitianPart,
    /// Largest real part of the spectrum (a pointwise diagnostic only).
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianKind {
    /// `P (∂f/∂x + Σ λ_i ∇²h_i)` on the tangent space.
    Constrained,
    /// `∂f/∂x` on the whole space (`P = I`, `λ = 0`).
    Unconstrained,
}

#[derive(Debug, Clone)]
pub struct RestrictedJacobian {
    /// Full `n x n` generalized Jacobian in the metric coordinates.
    pub full: Mat,
    pub restricted: Mat,
    pub lambda: Vec<f64>,
    pub h: Vec<f64>,
    /// `‖Jᵀ G⁻¹ K B‖_F` with rows `(∇²h_i v)ᵀ` in `K`: size of the normal
    /// part of the variational dynamics on tangent vectors.
    pub normal_term: f64,
}

fn metric_inverse(theta: &Mat) -> Result<Mat, LinalgError> {
    let gram = theta.transpose().matmul(theta).symmetric_part();
    Ok(Cholesky::factor(&gram)?.solve(&theta.transpose()))
}

pub fn restricted_jacobian(p: &Problem, x: &[f64], t: f64, kind: JacobianKind) -> Result<RestrictedJacobian, CertError> {
    let jf = p.field_jacobian(x, t)?;
    let (a, basis, lambda, h, normal_term) = match kind {
        JacobianKind::Unconstrained => {
            let h = p.constraint_values(x, t)?;
            (jf, Mat::identity(p.n()), vec![0.0; p.m()], h, 0.0)
        }
        JacobianKind::Constrained => {
            let g = geometry_at(p, x, t)?;
            let f = p.field(x, t)?;
            let lambda = lambda_timevarying(&g, &f);
            let mut inner = jf;
            for (l, hess) in lambda.iter().zip(&g.hessians) {
                inner.axpy(*l, hess);
            }
            let a = g.projector.matmul(&inner);
            let h = g.h().to_vec();
            let v = add_normal_force(&g, &f, &lambda);
            let mut normal_term = 0.0;
            if p.m() > 0 {
                let k = Mat::from_rows(&g.hessians.iter().map(|hs| hs.mul_vec(&v)).collect::<Vec<_>>());
                let n = g.jacobian().transpose().matmul(&cholesky_solve(g.gram(), &k)?);
                normal_term = n.matmul(&g.tangent_basis).norm_frobenius();
            }
            (a, g.tangent_basis, lambda, h, normal_term)
        }
    };
    let (full, basis) = match &p.metric {
        Metric::Identity => (a, basis),
        Metric::Constant(theta) => {
            let full = theta.matmul(&a).matmul(&metric_inverse(theta)?);
            (full, orthonormal_columns(&theta.matmul(&basis))?)
        }
    };
    let restricted = basis.transpose().matmul(&full).matmul(&basis);
    Ok(RestrictedJacobian { full, restricted, lambda, h, normal_term })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub x: Vec<f64>,
    pub t: f64,
    pub mode: MarginMode,
    pub kind: JacobianKind,
    pub metric: &'static str,
    pub restricted: Mat,
    pub margin: f64,
    /// `[re, im]` pairs: spectrum of the symmetric part (HermitianPart) or of
    /// the restricted matrix itself (Spectral).
    pub eigenvalues: Vec<[f64; 2]>,
    pub h_residual: f64,
    /// False when evaluated away from the constraint set.
    pub on_constraint: bool,
    /// See [`RestrictedJacobian::normal_term`]; logged, not certified.
    pub normal_term: f64,
}

impl MarginReport {
    pub fn contracting(&self) -> bool {
        self.margin < 0.0
    }
}

pub fn margin(p: &Problem, x: &[f64], t: f64, mode: MarginMode, kind: JacobianKind) -> Result<MarginReport, CertError> {
    let rj = restricted_jacobian(p, x, t, kind)?;
    let eig = match mode {
        MarginMode::HermitianPart => jacobi_sym_eig(&rj.restricted.symmetric_part())?,
        MarginMode::Spectral => general_eig(&rj.restricted)?,
    };
    let h_residual = norm_inf(&rj.h);
    Ok(MarginReport {
        x: x.to_vec(),
        t,
        mode,
        kind,
        metric: match p.metric {
            Metric::Identity => "identity",
            Metric::Constant(_) => "constant",
        },
        margin: eig.max_real(),
        eigenvalues: eig.values.iter().map(|z| [z.re, z.im]).collect(),
        restricted: rj.restricted,
        normal_term: rj.normal_term,
        h_residual,
        on_constraint: kind == JacobianKind::Unconstrained || h_residual <= ON_CONSTRAINT_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginSummary {
    pub sup: f64,
    pub argsup_t: f64,
    pub certified: bool,
    pub samples: usize,
    pub off_constraint_samples: usize,
    pub max_normal_term: f64,
}

/// Margins at every sample of `traj`; the certificate holds iff the
/// supremum is negative.
pub fn margin_along(
    traj: &Trajectory,
    p: &Problem,
    mode: MarginMode,
    kind: JacobianKind,
) -> Result<(Vec<MarginReport>, MarginSummary), CertError> {
    let reports = traj
        .samples
        .iter()
        .map(|s| margin(p, &s.x, s.t, mode, kind))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(reports))
}

pub fn summarize(reports: Vec<MarginReport>) -> (Vec<MarginReport>, MarginSummary) {
    let mut sup = f64::NEG_INFINITY;
    let mut argsup_t = f64::NAN;
    for r in &reports {
        if r.margin > sup || argsup_t.is_nan() {
            sup = r.margin;
            argsup_t = r.t;
        }
    }
    let summary = MarginSummary {
        sup,
        argsup_t,
        certified: !reports.is_empty() && sup < 0.0,
        samples: reports.len(),
        off_constraint_samples: reports.iter().filter(|r| !r.on_constraint).count(),
        max_normal_term: reports.iter().map(|r| r.normal_term).fold(0.0, f64::max),
    };
    (reports, summary)
}

/// Copies margins into the trajectory samples.
pub fn annotate_margins(traj: &mut Trajectory, reports: &[MarginReport]) {
    for (s, r) in traj.samples.iter_mut().zip(reports) {
        s.margin = Some(r.margin);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedMin,
    Infeasible,
    NotStationary,
    SecondOrderFails,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KKTReport {
    pub x: Vec<f64>,
    pub t: f64,
    pub lambda_kkt: Vec<f64>,
    pub stationarity: f64,
    pub feasibility: f64,
    pub projected_hessian_eigenvalues: Vec<f64>,
    pub tol: f64,
    pub eta: f64,
    pub verdict: Verdict,
}

pub const KKT_TOL: f64 = 1e-6;
pub const KKT_ETA: f64 = 1e-8;

/// First- and second-order check of `x` as a constrained minimizer, with
/// `λ_KKT = -λ_flow` and `∇²L = ∇²U + Σ λ_KKT,i ∇²h_i` on the tangent space.
pub fn kkt_report(p: &Problem, x: &[f64], t: f64, tol: f64, eta: f64) -> Result<KKTReport, CertError> {
    if p.mode() != Mode::Minimize {
        return Err(ModelError::NotMinimize("KKT report").into());
    }
    let g = geometry_at(p, x, t)?;
    let grad = p.cost_gradient(x, t)?;
    let f: Vec<f64> = grad.iter().map(|v| -v).collect();
    let lambda_kkt: Vec<f64> = lambda_static(&g, &f).into_iter().map(|v| -v).collect();
    let residual: Vec<f64> = g.jacobian().tr_mul_vec(&lambda_kkt).iter().zip(&grad).map(|(a, b)| a + b).collect();
    let stationarity = norm2(&residual);
    let feasibility = norm_inf(g.h());
    let mut hl = p.cost_hessian(x, t)?;
    for (l, h) in lambda_kkt.iter().zip(&g.hessians) {
        hl.axpy(*l, h);
    }
    let b = &g.tangent_basis;
    let projected = b.transpose().matmul(&hl).matmul(b).symmetric_part();
    let eigenvalues = jacobi_sym_eig(&projected)?.real_parts();
    let min_eig = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let verdict = if !(feasibility <= tol) {
        Verdict::Infeasible
    } else if !(stationarity <= tol) {
        Verdict::NotStationary
    } else if !(min_eig > eta) {
        Verdict::SecondOrderFails
    } else {
        Verdict::CertifiedMin
    };
    Ok(KKTReport {
        x: x.to_vec(),
        t,
        lambda_kkt,
        stationarity,
        feasibility,
        projected_hessian_eigenvalues: eigenvalues,
        tol,
        eta,
        verdict,
    })
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("solve needs a minimization problem")]
    NotMinimize,
    #[error("time-varying problems require run")]
    TimeVarying,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Cert(#[from] CertError),
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub stats: StepStats,
    pub convergence: Convergence,
    pub kkt: KKTReport,
}

impl Solution {
    pub fn x(&self) -> &[f64] {
        &self.kkt.x
    }

    pub fn certified(&self) -> bool {
        self.convergence.converged && self.kkt.verdict == Verdict::CertifiedMin
    }
}

/// Integrates a static minimization with `cfg` (its stop rule decides
/// convergence, default tolerances 1e-8) and certifies the endpoint.
pub fn solve(p: &Problem, cfg: &FlowConfig, tol: f64, eta: f64) -> Result<Solution, SolveError> {
    if p.mode() != Mode::Minimize {
        return Err(SolveError::NotMinimize);
    }
    if p.is_time_varying() {
        return Err(SolveError::TimeVarying);
    }
    let (trajectory, stats) = integrate(p, cfg)?;
    let (v_tol, h_tol) = match cfg.stop {
        StopRule::Converged { v_tol, h_tol } => (v_tol, h_tol),
        StopRule::TimeEnd => (SOLVE_TOL, SOLVE_TOL),
    };
    let convergence = detect_convergence(&trajectory, v_tol, h_tol);
    let last = trajectory.last().expect("trajectories hold the initial state");
    let kkt = kkt_report(p, &last.x, last.t, tol, eta)?;
    Ok(Solution { trajectory, stats, convergence, kkt })
}

/// Default velocity and residual tolerance of the convergence stop.
pub const SOLVE_TOL: f64 = 1e-8;
