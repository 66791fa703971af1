//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed; the process
//! exits non-zero when any criterion fails.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use contraflow::certify::{
    kkt_report, margin, margin_along, restricted_jacobian, solve, JacobianKind, MarginMode, Verdict, KKT_ETA, KKT_TOL,
    SOLVE_TOL,
};
use contraflow::flow::{
    integrate, rhs_eval, slide_decay_check, FlowConfig, Integrator, RhsMode, StopRule, Trajectory,
};
use contraflow::geometry::{geometry_at, lambda_static, lambda_timevarying, add_normal_force, sliding_term};
use contraflow::linalg::{jacobi_sym_eig, norm2, norm_inf, orthonormal_columns, Mat};
use contraflow::model::{builtin, verify_derivatives, Objective, Problem, ProblemDef};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn on_time(p: &Problem, cfg: &FlowConfig) -> Result<(Trajectory, Duration), String> {
    let start = Instant::now();
    let (traj, _) = integrate(p, cfg).map_err(|e| e.to_string())?;
    Ok((traj, start.elapsed()))
}

fn converged_cfg() -> FlowConfig {
    FlowConfig { stop: StopRule::Converged { v_tol: SOLVE_TOL, h_tol: SOLVE_TOL }, ..Default::default() }
}

/// Newton iteration on the KKT system `∇U + Jᵀμ = 0, h = 0`, solved with
/// nalgebra; derivatives are supplied by hand per problem.
struct KktOracle<'a> {
    n: usize,
    m: usize,
    grad_u: &'a dyn Fn(&[f64]) -> Vec<f64>,
    hess_u: &'a dyn Fn(&[f64]) -> DMatrix<f64>,
    h: &'a dyn Fn(&[f64]) -> Vec<f64>,
    jac: &'a dyn Fn(&[f64]) -> DMatrix<f64>,
    hess_h: &'a dyn Fn(usize, &[f64]) -> DMatrix<f64>,
}

impl KktOracle<'_> {
    fn newton(&self, x0: &[f64]) -> Option<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        let mut x = x0.to_vec();
        // least-squares multiplier start
        let j = (self.jac)(&x);
        let g = DVector::from_vec((self.grad_u)(&x));
        let mut mu: DVector<f64> = (&j * j.transpose()).lu().solve(&(-(&j * &g)))?;
        for _ in 0..100 {
            let j = (self.jac)(&x);
            let g = DVector::from_vec((self.grad_u)(&x));
            let hv = DVector::from_vec((self.h)(&x));
            let mut hl = (self.hess_u)(&x);
            for i in 0..m {
                hl += (self.hess_h)(i, &x) * mu[i];
            }
            let mut k = DMatrix::zeros(n + m, n + m);
            k.view_mut((0, 0), (n, n)).copy_from(&hl);
            k.view_mut((0, n), (n, m)).copy_from(&j.transpose());
            k.view_mut((n, 0), (m, n)).copy_from(&j);
            let mut r = DVector::zeros(n + m);
            r.rows_mut(0, n).copy_from(&(g + j.transpose() * &mu));
            r.rows_mut(n, m).copy_from(&hv);
            if r.norm() < 1e-14 {
                break;
            }
            let d = k.lu().solve(&(-r))?;
            for i in 0..n {
                x[i] += d[i];
            }
            for i in 0..m {
                mu[i] += d[n + i];
            }
        }
        Some(x)
    }
}

fn criterion_1() -> Outcome {
    let p = builtin("circle").map_err(|e| e.to_string())?;
    ensure!(p.x0 == vec![0.0, 1.0] && p.t_end == 20.0, "unexpected catalog data");
    let cfg = FlowConfig { integrator: Integrator::Rk4 { dt: 1e-3 }, ..Default::default() };
    let (traj, elapsed) = on_time(&p, &cfg)?;
    let last = traj.last().unwrap();
    let err = dist(&last.x, &[-FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);
    ensure!(err <= 1e-6, "final error {err:e}");
    ensure!(elapsed < Duration::from_secs(1), "runtime {elapsed:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let th = rng.gen_range(0.0..2.0 * PI);
        let x = [th.cos(), th.sin()];
        let rj = restricted_jacobian(&p, &x, 0.0, JacobianKind::Constrained).map_err(|e| e.to_string())?;
        worst = worst.max((rj.restricted[(0, 0)] - (x[0] + x[1])).abs());
        let m = margin(&p, &x, 0.0, MarginMode::HermitianPart, JacobianKind::Constrained).map_err(|e| e.to_string())?;
        ensure!(m.contracting() == (x[0] + x[1] < 0.0), "verdict mismatch at {x:?}");
    }
    ensure!(worst <= 1e-9, "closed-form deviation {worst:e}");
    Ok(format!("final error {err:.1e}, closed-form deviation {worst:.1e}, runtime {:.0} ms", elapsed.as_secs_f64() * 1e3))
}

fn criterion_2() -> Outcome {
    let base = builtin("sphere").map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut worst_lambda = 0.0f64;
    let mut started = 0;
    while started < 10 {
        let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = norm2(&v);
        if !(0.1..=1.0).contains(&r) {
            continue;
        }
        let x0: Vec<f64> = v.iter().map(|c| c / r).collect();
        if x0[2] < -0.95 {
            continue; // near the antipodal pole
        }
        started += 1;
        let mut p = base.clone();
        p.x0 = x0;
        let (traj, _) = on_time(&p, &FlowConfig::default())?;
        let last = traj.last().unwrap();
        worst = worst.max(dist(&last.x, &[0.0, 0.0, 1.0]));
        let k = kkt_report(&p, &last.x, last.t, KKT_TOL, KKT_ETA).map_err(|e| e.to_string())?;
        ensure!(k.verdict == Verdict::CertifiedMin, "verdict {:?}", k.verdict);
        worst_lambda = worst_lambda.max((k.lambda_kkt[0] - 0.5).abs());
    }
    ensure!(worst <= 1e-6, "final error {worst:e}");
    ensure!(worst_lambda <= 1e-6, "lambda error {worst_lambda:e}");
    Ok(format!("10 starts, worst final error {worst:.1e}, worst lambda_kkt error {worst_lambda:.1e}"))
}

fn ellipsoid_oracle(axes: [f64; 3], target: [f64; 3]) -> Option<Vec<f64>> {
    let a2: Vec<f64> = axes.iter().map(|a| a * a).collect();
    let grad_u = |x: &[f64]| (0..3).map(|i| x[i] - target[i]).collect();
    let hess_u = |_: &[f64]| DMatrix::identity(3, 3);
    let h = |x: &[f64]| vec![(0..3).map(|i| x[i] * x[i] / a2[i]).sum::<f64>() - 1.0];
    let jac = |x: &[f64]| DMatrix::from_row_slice(1, 3, &[2.0 * x[0] / a2[0], 2.0 * x[1] / a2[1], 2.0 * x[2] / a2[2]]);
    let hess_h = |_: usize, _: &[f64]| DMatrix::from_diagonal(&DVector::from_vec(a2.iter().map(|a| 2.0 / a).collect()));
    let oracle = KktOracle { n: 3, m: 1, grad_u: &grad_u, hess_u: &hess_u, h: &h, jac: &jac, hess_h: &hess_h };
    // dense sampling of the surface for the start
    let mut best = (f64::INFINITY, vec![0.0; 3]);
    for i in 0..=200 {
        let th = PI * i as f64 / 200.0;
        for j in 0..400 {
            let ph = 2.0 * PI * j as f64 / 400.0;
            let x = vec![axes[0] * th.sin() * ph.cos(), axes[1] * th.sin() * ph.sin(), axes[2] * th.cos()];
            let d = dist(&x, &target);
            if d < best.0 {
                best = (d, x);
            }
        }
    }
    oracle.newton(&best.1)
}

fn criterion_3() -> Outcome {
    let p = builtin("ellipsoid-dist").map_err(|e| e.to_string())?;
    let (traj, _) = on_time(&p, &FlowConfig::default())?;
    let last = traj.last().unwrap();
    let oracle = ellipsoid_oracle([15.0, 5.0, 3.0], [1.0, 4.0, 2.0]).ok_or("oracle failed")?;
    let err = dist(&last.x, &oracle);
    let drift = traj.max_drift();
    ensure!(err <= 1e-5, "distance to oracle {err:e} (flow {:?}, oracle {oracle:?})", last.x);
    ensure!(drift <= 1e-6, "drift {drift:e}");
    Ok(format!("x* = {:?}, oracle distance {err:.1e}, max drift {drift:.1e}", round(&last.x)))
}

fn round(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| (v * 1e6).round() / 1e6).collect()
}

fn two_constraint_oracle() -> Option<Vec<f64>> {
    let target = [1.0, 4.0, 2.0];
    let grad_u = |x: &[f64]| (0..3).map(|i| x[i] - target[i]).collect();
    let hess_u = |_: &[f64]| DMatrix::identity(3, 3);
    let h = |x: &[f64]| vec![x.iter().map(|v| v * v).sum::<f64>() - 1.0, x.iter().sum()];
    let jac = |x: &[f64]| DMatrix::from_row_slice(2, 3, &[2.0 * x[0], 2.0 * x[1], 2.0 * x[2], 1.0, 1.0, 1.0]);
    let hess_h = |i: usize, _: &[f64]| if i == 0 { DMatrix::identity(3, 3) * 2.0 } else { DMatrix::zeros(3, 3) };
    let oracle = KktOracle { n: 3, m: 2, grad_u: &grad_u, hess_u: &hess_u, h: &h, jac: &jac, hess_h: &hess_h };
    // the feasible set is a great circle in the plane x + y + z = 0
    let e1 = [1.0 / SQRT_2, -1.0 / SQRT_2, 0.0];
    let e2 = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
    let mut best = (f64::INFINITY, vec![0.0; 3]);
    for k in 0..3600 {
        let th = 2.0 * PI * k as f64 / 3600.0;
        let x: Vec<f64> = (0..3).map(|i| th.cos() * e1[i] + th.sin() * e2[i]).collect();
        let d = dist(&x, &target);
        if d < best.0 {
            best = (d, x);
        }
    }
    oracle.newton(&best.1)
}

fn criterion_4() -> Outcome {
    let p = builtin("two-constraints").map_err(|e| e.to_string())?;
    ensure!(dist(&p.x0, &[0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2]) == 0.0, "unexpected start");
    let (traj, _) = on_time(&p, &FlowConfig::default())?;
    let drift: Vec<f64> = (0..2)
        .map(|i| traj.samples.iter().map(|s| s.h[i].abs()).fold(0.0, f64::max))
        .collect();
    ensure!(drift.iter().all(|d| *d <= 1e-6), "residuals {drift:?}");
    let oracle = two_constraint_oracle().ok_or("oracle failed")?;
    let err = dist(&traj.last().unwrap().x, &oracle);
    ensure!(err <= 1e-5, "distance to oracle {err:e}");
    Ok(format!("max residuals ({:.1e}, {:.1e}), oracle distance {err:.1e}", drift[0], drift[1]))
}

fn criterion_5() -> Outcome {
    let base = builtin("torus").map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let starts = 9;
    for k in 0..starts {
        let phi = PI * (0.55 + 0.9 * k as f64 / (starts - 1) as f64);
        let mut p = base.clone();
        p.x0 = vec![2.5 * phi.cos(), 2.5 * phi.sin(), 0.0];
        let s = solve(&p, &converged_cfg(), KKT_TOL, KKT_ETA).map_err(|e| e.to_string())?;
        ensure!(s.certified(), "start phi = {phi:.3}: not certified ({:?})", s.kkt.verdict);
        worst = worst.max(dist(s.x(), &[-2.5, 0.0, 0.0]));
    }
    ensure!(worst <= 1e-5, "worst error {worst:e}");
    Ok(format!("{starts} equator starts, worst error {worst:.1e}"))
}

fn sliding_cfg() -> FlowConfig {
    FlowConfig {
        rhs_mode: RhsMode::ProjectedSliding,
        integrator: Integrator::Rkf45 { abs_tol: 1e-12, rel_tol: 1e-10, dt_min: 1e-12, dt_max: 0.05 },
        ..Default::default()
    }
}

fn criterion_6() -> Outcome {
    let cases: [(&str, Vec<Vec<f64>>, Vec<f64>, f64); 4] = [
        ("circle-sliding", vec![vec![2.0, 0.5], vec![0.3, -0.2]], vec![-FRAC_1_SQRT_2, -FRAC_1_SQRT_2], 60.0),
        ("sphere-sliding", vec![vec![1.0, 1.0, 1.0], vec![0.2, -0.3, 0.4]], vec![0.0, 0.0, 1.0], 60.0),
        (
            "ellipsoid-volume",
            vec![vec![5.0, 2.0, 1.0], vec![12.0, 4.0, 2.5]],
            vec![15.0 / 3f64.sqrt(), 5.0 / 3f64.sqrt(), 3.0 / 3f64.sqrt()],
            1500.0,
        ),
        ("two-constraints-sliding", vec![vec![1.0, 0.5, 0.0], vec![-0.5, 1.5, 0.8]], Vec::new(), 80.0),
    ];
    let two = two_constraint_oracle().ok_or("oracle failed")?;
    let mut lines = Vec::new();
    for (name, starts, optimum, t_end) in cases {
        let base = builtin(name).map_err(|e| e.to_string())?;
        let optimum = if optimum.is_empty() { two.clone() } else { optimum };
        for c in [0.1, 1.0, 10.0] {
            for x0 in &starts {
                let mut p = base.clone();
                p.x0 = x0.clone();
                p.gains = vec![c; p.m()];
                p.t_end = t_end / c.min(1.0);
                let h0 = norm_inf(&p.constraint_values(x0, p.t0).unwrap());
                ensure!(h0 > 1e-3, "{name}: start {x0:?} is on the constraint");
                let (traj, _) = on_time(&p, &sliding_cfg())?;
                let r = slide_decay_check(&traj, &p).map_err(|e| e.to_string())?;
                let tag = format!("{name} c={c} x0={x0:?}");
                ensure!(r.monotone, "{tag}: s increased by {:e}", r.max_increase);
                if let (Some(rate), Some(bound)) = (r.rate, r.bound) {
                    ensure!(rate >= 0.9 * bound, "{tag}: rate {rate} below bound {bound}");
                } else {
                    ensure!(p.m() > 1, "{tag}: no decay fit");
                }
                let last = traj.last().unwrap();
                let h = norm_inf(&last.h);
                ensure!(h <= 1e-6, "{tag}: final |h| {h:e}");
                let err = dist(&last.x, &optimum);
                ensure!(err <= 1e-5, "{tag}: distance to optimum {err:e}, final {:?}", last.x);
            }
        }
        lines.push(name);
    }
    Ok(format!("{} problems x 3 gains x 2 starts", lines.len()))
}

fn criterion_7() -> Outcome {
    let p = builtin("growing-circle").map_err(|e| e.to_string())?;
    ensure!(p.t0 == 1.0 && p.t_end == 10.0, "unexpected span");
    let (traj, _) = on_time(&p, &FlowConfig::default())?;
    let mut worst = 0.0f64;
    for s in traj.samples.iter().filter(|s| s.t >= 2.0 - 1e-12) {
        let r = -s.t / SQRT_2;
        worst = worst.max(dist(&s.x, &[r, r]));
    }
    ensure!(worst <= 1e-4, "tracking error {worst:e}");
    let thinned = Trajectory { samples: traj.samples.iter().step_by(100).cloned().collect() };
    let (reports, summary) =
        margin_along(&thinned, &p, MarginMode::HermitianPart, JacobianKind::Constrained).map_err(|e| e.to_string())?;
    for r in &reports {
        let closed = (r.x[0] + r.x[1] + r.t) / (r.t * r.t);
        ensure!((r.margin - closed).abs() <= 1e-9, "margin {} vs closed form {closed} at t = {}", r.margin, r.t);
    }
    ensure!(summary.certified, "sup margin {}", summary.sup);
    Ok(format!("tracking error {worst:.1e}, sup margin {:.4}", summary.sup))
}

fn criterion_8() -> Outcome {
    let p = builtin("growing-ellipse").map_err(|e| e.to_string())?;
    let (traj, _) = on_time(&p, &FlowConfig::default())?;
    let mut worst = (0.0f64, 0.0);
    for s in traj.samples.iter().filter(|s| s.t >= 2.0 - 1e-12) {
        let e = (s.x[0] + 1.0 / (1.0 + s.t * s.t).sqrt()).abs();
        if e > worst.0 {
            worst = (e, s.t);
        }
    }
    // distance to the exact minimiser of x + y on t x² + y² = 1, for the record
    let exact = traj
        .samples
        .iter()
        .filter(|s| s.t >= 2.0 - 1e-12)
        .map(|s| dist(&s.x, &[-1.0 / (s.t * (1.0 + s.t)).sqrt(), -(s.t / (1.0 + s.t)).sqrt()]))
        .fold(0.0, f64::max);
    ensure!(
        worst.0 <= 1e-3,
        "x-coordinate off by {:.4} at t = {:.3} from -1/sqrt(1+t^2); tracking error to the exact minimiser is {exact:.1e}",
        worst.0,
        worst.1
    );
    Ok(format!("worst x error {:.1e}", worst.0))
}

fn criterion_9() -> Outcome {
    let p = builtin("asymptotic-circle").map_err(|e| e.to_string())?;
    ensure!(p.t_end == 50.0, "unexpected span");
    let (traj, _) = on_time(&p, &FlowConfig::default())?;
    let last = traj.last().unwrap();
    let err = dist(&last.x, &[-FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);
    let r = (1.0 / last.t).exp() / SQRT_2;
    let tracking = dist(&last.x, &[-r, -r]);
    ensure!(
        err <= 1e-3,
        "distance at t = {} is {err:.4} (state {:?}); distance to the instantaneous minimiser is {tracking:.1e}",
        last.t,
        round(&last.x)
    );
    Ok(format!("distance {err:.1e}"))
}

fn criterion_10() -> Outcome {
    let p = builtin("seir").map_err(|e| e.to_string())?;
    let x = [0.2, 0.3, 0.1, 0.4];
    let g = geometry_at(&p, &x, 0.0).map_err(|e| e.to_string())?;
    let expected = Mat::from_fn(4, 4, |i, j| if i == j { 0.75 } else { -0.25 });
    let perr = g.projector.sub(&expected).max_abs();
    ensure!(perr <= 1e-12, "projector error {perr:e}");
    ensure!(p.t0 == 0.0 && p.t_end == 200.0, "unexpected span");
    let (traj, _) = on_time(&p, &FlowConfig::default())?;
    let sum_err = traj.samples.iter().map(|s| (s.x.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    ensure!(sum_err <= 1e-9, "simplex drift {sum_err:e}");
    let last = traj.last().unwrap();
    let first = &traj.samples[0];
    ensure!(last.rhs_norm <= 1e-3 * first.rhs_norm, "|rhs| only fell from {:e} to {:e}", first.rhs_norm, last.rhs_norm);
    let eq = seir_equilibrium(&p, &last.x).ok_or("equilibrium solve failed")?;
    let eq_dist = dist(&last.x, &eq);
    ensure!(eq_dist <= 1e-4, "endpoint {:?} is {eq_dist:e} from equilibrium {:?}", last.x, eq);
    let m = margin(&p, &last.x, last.t, MarginMode::Spectral, JacobianKind::Constrained).map_err(|e| e.to_string())?;
    ensure!(m.eigenvalues.iter().all(|z| z[0] < 0.0), "spectral eigenvalues {:?}", m.eigenvalues);
    Ok(format!(
        "projector error {perr:.1e}, simplex drift {sum_err:.1e}, endpoint {:?} ({eq_dist:.1e} from equilibrium), spectral margin {:.4}",
        round(&last.x),
        m.margin
    ))
}

/// Gauss-Newton on `(P f(x), Σx - 1) = 0` with a finite-difference Jacobian.
fn seir_equilibrium(p: &Problem, x0: &[f64]) -> Option<Vec<f64>> {
    let residual = |x: &[f64]| -> Option<DVector<f64>> {
        let v = rhs_eval(p, RhsMode::Projected, x, 0.0).ok()?.v;
        let mut r = DVector::zeros(5);
        r.rows_mut(0, 4).copy_from_slice(&v);
        r[4] = x.iter().sum::<f64>() - 1.0;
        Some(r)
    };
    let mut x = x0.to_vec();
    for _ in 0..50 {
        let r = residual(&x)?;
        if r.norm() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(5, 4);
        for j in 0..4 {
            let mut xp = x.clone();
            xp[j] += 1e-7;
            let mut xm = x.clone();
            xm[j] -= 1e-7;
            jac.set_column(j, &((residual(&xp)? - residual(&xm)?) / 2e-7));
        }
        let d = jac.svd(true, true).solve(&(-r), 1e-12).ok()?;
        for j in 0..4 {
            x[j] += d[j];
        }
    }
    (residual(&x)?.norm() < 1e-10).then_some(x)
}

const CASES: usize = 200;

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn static_problems() -> Vec<Problem> {
    ["circle", "sphere", "ellipsoid-dist", "two-constraints", "torus", "ellipsoid-volume", "seir"]
        .iter()
        .map(|n| builtin(n).unwrap())
        .collect()
}

fn all_problems() -> Vec<Problem> {
    contraflow::model::catalog().iter().map(|e| builtin(e.name).unwrap()).collect()
}

fn random_regular(rng: &mut ChaCha8Rng, p: &Problem) -> (Vec<f64>, f64) {
    loop {
        let x = random_point(rng, p.n());
        let t = p.t0 + rng.gen_range(0.0..5.0);
        if geometry_at(p, &x, t).is_ok() && p.field(&x, t).is_ok() {
            return (x, t);
        }
    }
}

fn prop_projector(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let problems = all_problems();
    for k in 0..500 {
        let p = &problems[k % problems.len()];
        let (x, t) = random_regular(rng, p);
        let g = geometry_at(p, &x, t).unwrap();
        let pm = &g.projector;
        let j = g.jacobian();
        let direct = Mat::identity(p.n()).sub(&j.transpose().matmul(&contraflow::linalg::cholesky_solve(g.gram(), j).unwrap()));
        ensure!(pm.sub(&direct).max_abs() <= 1e-10, "{}: P formula", p.name());
        ensure!(pm.asymmetry() == 0.0, "{}: P not symmetric", p.name());
        ensure!(pm.matmul(pm).sub(pm).max_abs() <= 1e-9, "{}: P^2 != P at {x:?}", p.name());
        ensure!(pm.matmul(&j.transpose()).max_abs() <= 1e-9, "{}: P J^T != 0", p.name());
        ensure!((pm.trace() - (p.n() - p.m()) as f64).abs() <= 1e-8, "{}: trace", p.name());
        let b = &g.tangent_basis;
        ensure!(j.matmul(b).max_abs() <= 1e-10 && b.transpose().matmul(b).sub(&Mat::identity(b.cols())).max_abs() <= 1e-10,
            "{}: tangent basis", p.name());
    }
    Ok(500)
}

fn prop_tangency(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let problems = all_problems();
    for k in 0..CASES {
        let p = &problems[k % problems.len()];
        let (x, t) = random_regular(rng, p);
        let g = geometry_at(p, &x, t).unwrap();
        let f = p.field(&x, t).unwrap();
        let scale = 1.0 + norm2(&f) * g.jacobian().norm_frobenius();
        let vs = add_normal_force(&g, &f, &lambda_static(&g, &f));
        ensure!(norm_inf(&g.jacobian().mul_vec(&vs)) <= 1e-9 * scale, "{}: static tangency", p.name());
        let pf = g.projector.mul_vec(&f);
        ensure!(dist(&vs, &pf) <= 1e-10 * scale, "{}: f + J^T lambda != P f", p.name());
        let vt = add_normal_force(&g, &f, &lambda_timevarying(&g, &f));
        let res: Vec<f64> = g.jacobian().mul_vec(&vt).iter().zip(g.dt()).map(|(a, b)| a + b).collect();
        ensure!(norm_inf(&res) <= 1e-9 * (scale + norm_inf(g.dt())), "{}: transport residual {res:?}", p.name());
        if p.m() == 1 && p.cost().is_some() {
            let grad = p.cost_gradient(&x, t).unwrap();
            let jr = g.jacobian().row(0);
            let classical = grad.iter().zip(jr).map(|(a, b)| a * b).sum::<f64>() / jr.iter().map(|v| v * v).sum::<f64>();
            let l = lambda_static(&g, &f)[0];
            ensure!((l - classical).abs() <= 1e-10 * (1.0 + classical.abs()), "{}: classical multiplier", p.name());
        }
    }
    Ok(CASES)
}

fn prop_sliding_identity(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let problems = all_problems();
    let mut done = 0;
    for k in 0..300 {
        let mut p = problems[k % problems.len()].clone();
        if p.m() == 0 {
            continue;
        }
        p.gains = (0..p.m()).map(|_| rng.gen_range(0.1..10.0)).collect();
        let (x, t) = random_regular(rng, &p);
        let e = rhs_eval(&p, RhsMode::ProjectedSliding, &x, t).unwrap();
        let g = geometry_at(&p, &x, t).unwrap();
        let mut ds = 0.0;
        for i in 0..p.m() {
            let gi = g.jacobian().row(i);
            let dot: f64 = gi.iter().zip(&e.v).map(|(a, b)| a * b).sum();
            ds += p.gains[i] * g.h()[i] * (dot + g.dt()[i]);
        }
        let st = sliding_term(&g, &p.gains);
        let expected = -st.iter().map(|v| v * v).sum::<f64>();
        let scale = 1.0 + expected.abs() + norm2(&e.v) * norm2(&st);
        ensure!((ds - expected).abs() <= 1e-8 * scale, "{}: ds/dt {ds} vs {expected}", p.name());
        done += 1;
    }
    Ok(done)
}

fn prop_derivatives(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let problems = all_problems();
    let mut total = 0;
    for p in &problems {
        let r = verify_derivatives(p, 20, rng.gen());
        ensure!(r.passed, "{}: {:?}", p.name(), r.failures().collect::<Vec<_>>());
        total += r.samples;
    }
    Ok(total)
}

fn prop_interlacing(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(1..n);
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let s = a.symmetric_part();
        let b = orthonormal_columns(&Mat::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
        let mu = jacobi_sym_eig(&b.transpose().matmul(&s).matmul(&b)).unwrap().real_parts();
        // oracle spectrum of S from nalgebra
        let sn = DMatrix::from_row_slice(n, n, s.as_slice());
        let mut lam: Vec<f64> = SymmetricEigen::new(sn).eigenvalues.iter().copied().collect();
        lam.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for j in 0..k {
            ensure!(lam[j] <= mu[j] + 1e-9 && mu[j] <= lam[j + n - k] + 1e-9, "interlacing fails n={n} k={k}");
        }
    }
    // certified margins never exceed the full symmetric spectrum
    let problems = static_problems();
    for k in 0..CASES {
        let p = &problems[k % problems.len()];
        let (x, t) = random_regular(rng, p);
        let r = margin(p, &x, t, MarginMode::HermitianPart, JacobianKind::Constrained).unwrap();
        let full = restricted_jacobian(p, &x, t, JacobianKind::Constrained).unwrap().full;
        let top = jacobi_sym_eig(&full.symmetric_part()).unwrap().max_real();
        ensure!(r.margin <= top + 1e-9 * (1.0 + top.abs()), "{}: margin above full spectrum", p.name());
    }
    Ok(2 * CASES)
}

fn prop_rk4_order(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let a: f64 = rng.gen_range(0.5..2.0);
        let x0 = rng.gen_range(0.5..2.0);
        let mut d = ProblemDef::new("decay", 1, Objective::Field(vec![format!("-{a:?}*x1")]));
        d.x0 = vec![x0];
        d.t_end = 1.0;
        let p = Problem::from_def(d).unwrap();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let cfg = FlowConfig { rhs_mode: RhsMode::Raw, integrator: Integrator::Rk4 { dt }, ..Default::default() };
                let (traj, _) = integrate(&p, &cfg).unwrap();
                (traj.last().unwrap().x[0] - x0 * (-a).exp()).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            ensure!((8.0..=32.0).contains(&ratio), "a = {a}: halving ratio {ratio}");
        }
    }
    Ok(CASES)
}

fn prop_descent(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let problems: Vec<Problem> = ["circle", "sphere", "ellipsoid-dist", "torus"].iter().map(|n| builtin(n).unwrap()).collect();
    for k in 0..CASES {
        let mut p = problems[k % problems.len()].clone();
        // random on-constraint start by Newton projection of a random point
        let mut x = random_point(rng, p.n());
        if p.name() == "torus" {
            x[0] += 2.0f64.copysign(x[0]);
        }
        if contraflow::flow::newton_reproject(&p, &mut x, 0.0, 1e-13, 50).is_err()
            || norm_inf(&p.constraint_values(&x, 0.0).unwrap()) > 1e-12
        {
            continue;
        }
        p.x0 = x;
        p.t_end = 1.0;
        let cfg = FlowConfig { integrator: Integrator::Rk4 { dt: 1e-2 }, ..Default::default() };
        let (traj, _) = integrate(&p, &cfg).map_err(|e| format!("{}: {e}", p.name()))?;
        for w in traj.samples.windows(2) {
            let (u0, u1) = (w[0].u.unwrap(), w[1].u.unwrap());
            ensure!(u1 <= u0 + 1e-9, "{}: U rose from {u0} to {u1}", p.name());
        }
    }
    Ok(CASES)
}

fn criterion_11() -> Outcome {
    let start = Instant::now();
    let suites: [(&str, fn(&mut ChaCha8Rng) -> Result<usize, String>); 7] = [
        ("projector laws", prop_projector),
        ("tangency", prop_tangency),
        ("ds/dt identity", prop_sliding_identity),
        ("FD derivatives", prop_derivatives),
        ("interlacing", prop_interlacing),
        ("RK4 order", prop_rk4_order),
        ("descent", prop_descent),
    ];
    let mut counts = Vec::new();
    for (i, (name, suite)) in suites.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + i as u64);
        let n = suite(&mut rng).map_err(|e| format!("{name}: {e}"))?;
        ensure!(n >= CASES, "{name}: only {n} cases");
        counts.push(format!("{name} {n}"));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "runtime {elapsed:?}");
    Ok(format!("{} in {:.1} s", counts.join(", "), elapsed.as_secs_f64()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "circle", criterion_1),
        (2, "sphere", criterion_2),
        (3, "ellipsoid distance", criterion_3),
        (4, "two constraints", criterion_4),
        (5, "torus", criterion_5),
        (6, "sliding", criterion_6),
        (7, "growing circle", criterion_7),
        (8, "growing ellipse", criterion_8),
        (9, "asymptotic circle", criterion_9),
        (10, "SEIR", criterion_10),
        (11, "property suites", criterion_11),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.2} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.2} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
