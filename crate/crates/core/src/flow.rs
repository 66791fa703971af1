//! Right-hand side assembly and time integration.
//!
//! The projected field is `f + Jᵀλ` with the transport multiplier
//! `λ = -G⁻¹(J f + ∂h/∂t)`; the sliding field adds `-Σ c_i h_i ∇h_i`.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{add_normal_force, lambda_timevarying, sliding_energy, sliding_term, GeometryError, Normals};
use crate::linalg::{norm2, norm_inf};
use crate::model::{ModelError, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsMode {
    /// `ẋ = f`.
    Raw,
    /// `ẋ = f + Jᵀλ`.
    Projected,
    /// `ẋ = f + Jᵀλ - Σ c_i h_i ∇h_i`.
    ProjectedSliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Integrator {
    Rk4 { dt: f64 },
    Rkf45 { abs_tol: f64, rel_tol: f64, dt_min: f64, dt_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Reproject {
    Off,
    Newton { tol: f64, max_iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StopRule {
    TimeEnd,
    Converged { v_tol: f64, h_tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowConfig {
    pub rhs_mode: RhsMode,
    pub integrator: Integrator,
    pub reproject: Reproject,
    pub stop: StopRule,
    /// Record every k-th accepted step (the final state is always recorded).
    pub record_every: usize,
    /// Largest `‖h(x0, t0)‖_∞` accepted for projected runs without sliding
    /// or re-projection.
    pub start_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            rhs_mode: RhsMode::Projected,
            integrator: Integrator::Rk4 { dt: 1e-3 },
            reproject: Reproject::Off,
            stop: StopRule::TimeEnd,
            record_every: 1,
            start_tol: 1e-6,
        }
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("regularity lost at t = {t} (x = {x:?}, Gram pivot {pivot}); last good state at t = {last_t}: {last_x:?}")]
    RegularityLost { x: Vec<f64>, t: f64, pivot: usize, last_t: f64, last_x: Vec<f64> },
    #[error("step size {dt:e} fell below dt_min at t = {t}")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("state became non-finite after t = {last_t}")]
    NonFinite { last_t: f64, last_x: Vec<f64> },
    #[error("initial state violates the constraints: |h|_inf = {residual:e} > {tol:e}")]
    InfeasibleStart { residual: f64, tol: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("at t = {t}: {source}")]
    Model {
        t: f64,
        #[source]
        source: ModelError,
    },
}

impl FlowError {
    fn at(e: GeometryError, t: f64, last_t: f64, last_x: &[f64]) -> FlowError {
        match e {
            GeometryError::RegularityLost { x, t, pivot } => {
                FlowError::RegularityLost { x, t, pivot, last_t, last_x: last_x.to_vec() }
            }
            GeometryError::Model(source) => FlowError::Model { t, source },
        }
    }
}

/// Right-hand side at a point with the multiplier and residual it used.
#[derive(Debug, Clone)]
pub struct RhsEval {
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn rhs_eval(p: &Problem, mode: RhsMode, x: &[f64], t: f64) -> Result<RhsEval, GeometryError> {
    let f = p.field(x, t)?;
    if mode == RhsMode::Raw || p.m() == 0 {
        let h = p.constraint_values(x, t)?;
        return Ok(RhsEval { v: f, lambda: vec![0.0; p.m()], h });
    }
    let normals = Normals::at(p, x, t)?;
    let lambda = lambda_timevarying(&normals, &f);
    let mut v = add_normal_force(&normals, &f, &lambda);
    if mode == RhsMode::ProjectedSliding {
        for (vi, si) in v.iter_mut().zip(sliding_term(&normals, &p.gains)) {
            *vi += si;
        }
    }
    Ok(RhsEval { v, lambda, h: normals.h })
}

pub fn rhs(p: &Problem, mode: RhsMode, x: &[f64], t: f64) -> Result<Vec<f64>, GeometryError> {
    Ok(rhs_eval(p, mode, x, t)?.v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub lambda: Vec<f64>,
    pub s: f64,
    #[serde(rename = "U")]
    pub u: Option<f64>,
    pub margin: Option<f64>,
    pub rhs_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Largest `‖h‖_∞` over the samples.
    pub fn max_drift(&self) -> f64 {
        self.samples.iter().map(|s| norm_inf(&s.h)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_drift: f64,
    pub newton_iterations: usize,
}

impl StepStats {
    fn step(&mut self, dt: f64) {
        if self.accepted == 0 {
            self.dt_min = dt;
            self.dt_max = dt;
        } else {
            self.dt_min = self.dt_min.min(dt);
            self.dt_max = self.dt_max.max(dt);
        }
        self.accepted += 1;
    }
}

fn validate(cfg: &FlowConfig) -> Result<(), FlowError> {
    let bad = |m: &str| Err(FlowError::InvalidConfig(m.to_string()));
    match cfg.integrator {
        Integrator::Rk4 { dt } if !(dt > 0.0 && dt.is_finite()) => return bad("dt must be positive"),
        Integrator::Rkf45 { abs_tol, rel_tol, dt_min, dt_max }
            if !(abs_tol > 0.0 && rel_tol > 0.0 && dt_min > 0.0 && dt_max >= dt_min) =>
        {
            return bad("RKF45 needs positive tolerances and 0 < dt_min <= dt_max")
        }
        _ => {}
    }
    if let Reproject::Newton { tol, .. } = cfg.reproject {
        if !(tol > 0.0) {
            return bad("re-projection tolerance must be positive");
        }
    }
    if let StopRule::Converged { v_tol, h_tol } = cfg.stop {
        if !(v_tol > 0.0 && h_tol > 0.0) {
            return bad("convergence tolerances must be positive");
        }
    }
    if cfg.record_every == 0 {
        return bad("record_every must be at least 1");
    }
    Ok(())
}

/// Gauss-Newton correction `x <- x - Jᵀ G⁻¹ h` until `‖h‖_∞ <= tol`.
pub fn newton_reproject(p: &Problem, x: &mut [f64], t: f64, tol: f64, max_iter: usize) -> Result<usize, GeometryError> {
    for it in 0..max_iter {
        let normals = Normals::at(p, x, t)?;
        if norm_inf(&normals.h) <= tol {
            return Ok(it);
        }
        let w = normals.gram_solve(&normals.h);
        for (xi, di) in x.iter_mut().zip(normals.jacobian.tr_mul_vec(&w)) {
            *xi -= di;
        }
    }
    Ok(max_iter)
}

fn streak_needed(len: usize) -> usize {
    len.div_ceil(100).max(1)
}

fn sample_ok(s: &Sample, v_tol: f64, h_tol: f64) -> bool {
    s.rhs_norm <= v_tol && norm_inf(&s.h) <= h_tol
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Convergence {
    pub converged: bool,
    /// First sample of the trailing run satisfying both tolerances.
    pub index: Option<usize>,
}

/// Converged iff the final sample and the trailing 1% of samples all have
/// `rhs_norm <= v_tol` and `‖h‖_∞ <= h_tol`.
pub fn detect_convergence(traj: &Trajectory, v_tol: f64, h_tol: f64) -> Convergence {
    let len = traj.len();
    let streak = traj.samples.iter().rev().take_while(|s| sample_ok(s, v_tol, h_tol)).count();
    let index = (streak > 0).then(|| len - streak);
    Convergence { converged: len > 0 && streak >= streak_needed(len), index }
}

// Fehlberg 4(5) tableau.
const FA: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const FC: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const FB5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const FB4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

fn axpy_into(out: &mut [f64], x: &[f64], terms: &[(f64, &[f64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = x[i] + terms.iter().map(|(c, k)| c * k[i]).sum::<f64>();
    }
}

struct Run<'a> {
    p: &'a Problem,
    cfg: &'a FlowConfig,
    traj: Trajectory,
    stats: StepStats,
    since_record: usize,
}

impl Run<'_> {
    fn eval(&self, x: &[f64], t: f64, last_t: f64, last_x: &[f64]) -> Result<RhsEval, FlowError> {
        rhs_eval(self.p, self.cfg.rhs_mode, x, t).map_err(|e| FlowError::at(e, t, last_t, last_x))
    }

    fn record(&mut self, x: &[f64], t: f64, e: &RhsEval) -> Result<(), FlowError> {
        let u = self.p.cost_value(x, t).map_err(|source| FlowError::Model { t, source })?;
        self.traj.samples.push(Sample {
            t,
            x: x.to_vec(),
            h: e.h.clone(),
            lambda: e.lambda.clone(),
            s: sliding_energy(&e.h, &self.p.gains),
            u,
            margin: None,
            rhs_norm: norm2(&e.v),
        });
        self.since_record = 0;
        Ok(())
    }

    /// Records if due; returns true when the convergence stop fires.
    fn after_step(&mut self, x: &[f64], t: f64, e: &RhsEval, last: bool) -> Result<bool, FlowError> {
        self.stats.max_drift = self.stats.max_drift.max(norm_inf(&e.h));
        self.since_record += 1;
        if last || self.since_record >= self.cfg.record_every {
            self.record(x, t, e)?;
            if let StopRule::Converged { v_tol, h_tol } = self.cfg.stop {
                let len = self.traj.len();
                let streak = self.traj.samples.iter().rev().take_while(|s| sample_ok(s, v_tol, h_tol)).count();
                return Ok(streak >= streak_needed(len).max(10.min(len)));
            }
        }
        Ok(false)
    }

    fn reproject(&mut self, x: &mut [f64], t: f64, last_t: f64, last_x: &[f64]) -> Result<(), FlowError> {
        if let Reproject::Newton { tol, max_iter } = self.cfg.reproject {
            if self.p.m() > 0 {
                let it = newton_reproject(self.p, x, t, tol, max_iter).map_err(|e| FlowError::at(e, t, last_t, last_x))?;
                self.stats.newton_iterations += it;
            }
        }
        Ok(())
    }
}

/// Integrates `p` from `(x0, t0)` to `t_end` (or earlier convergence).
pub fn integrate(p: &Problem, cfg: &FlowConfig) -> Result<(Trajectory, StepStats), FlowError> {
    validate(cfg)?;
    if !(p.t_end > p.t0) {
        return Err(FlowError::InvalidConfig(format!("t_end = {} must exceed t0 = {}", p.t_end, p.t0)));
    }
    let mut run = Run { p, cfg, traj: Trajectory::default(), stats: StepStats::default(), since_record: 0 };
    let mut x = p.x0.clone();
    let mut t = p.t0;
    run.reproject(&mut x, t, t, &p.x0)?;

    let projected = cfg.rhs_mode != RhsMode::Raw;
    let sliding = cfg.rhs_mode == RhsMode::ProjectedSliding && p.gains.iter().any(|c| *c > 0.0);
    if projected && !sliding && cfg.reproject == Reproject::Off {
        let h = p.constraint_values(&x, t).map_err(|source| FlowError::Model { t, source })?;
        let residual = norm_inf(&h);
        if !(residual <= cfg.start_tol) {
            return Err(FlowError::InfeasibleStart { residual, tol: cfg.start_tol });
        }
    }

    let mut cur = run.eval(&x, t, t, &x)?;
    run.stats.max_drift = norm_inf(&cur.h);
    run.record(&x, t, &cur)?;
    let n = p.n();
    let mut trial = vec![0.0; n];

    match cfg.integrator {
        Integrator::Rk4 { dt } => {
            let mut k = 0u64;
            while t < p.t_end {
                let nominal = p.t0 + (k + 1) as f64 * dt;
                let t_next = if nominal >= p.t_end - 1e-9 * dt { p.t_end } else { nominal };
                let hstep = t_next - t;
                let k1 = cur.v.clone();
                axpy_into(&mut trial, &x, &[(0.5 * hstep, &k1)]);
                let k2 = run.eval(&trial, t + 0.5 * hstep, t, &x)?.v;
                axpy_into(&mut trial, &x, &[(0.5 * hstep, &k2)]);
                let k3 = run.eval(&trial, t + 0.5 * hstep, t, &x)?.v;
                axpy_into(&mut trial, &x, &[(hstep, &k3)]);
                let k4 = run.eval(&trial, t_next, t, &x)?.v;
                let mut next = vec![0.0; n];
                let w = hstep / 6.0;
                axpy_into(&mut next, &x, &[(w, &k1), (2.0 * w, &k2), (2.0 * w, &k3), (w, &k4)]);
                if !next.iter().all(|v| v.is_finite()) {
                    return Err(FlowError::NonFinite { last_t: t, last_x: x });
                }
                run.reproject(&mut next, t_next, t, &x)?;
                run.stats.step(hstep);
                cur = run.eval(&next, t_next, t, &x)?;
                x = next;
                t = t_next;
                k += 1;
                if run.after_step(&x, t, &cur, t >= p.t_end)? {
                    break;
                }
            }
        }
        Integrator::Rkf45 { abs_tol, rel_tol, dt_min, dt_max } => {
            let mut dt = p.dt.clamp(dt_min, dt_max);
            let mut ks: Vec<Vec<f64>> = vec![vec![0.0; n]; 6];
            while t < p.t_end {
                let remaining = p.t_end - t;
                let clipped = dt >= remaining - 1e-12 * remaining.max(1.0);
                let hstep = if clipped { remaining } else { dt };
                ks[0] = cur.v.clone();
                let mut stage_err = None;
                for s in 1..6 {
                    let terms: Vec<(f64, &[f64])> = (0..s).map(|j| (hstep * FA[s][j], ks[j].as_slice())).collect();
                    axpy_into(&mut trial, &x, &terms);
                    match run.eval(&trial, t + FC[s] * hstep, t, &x) {
                        Ok(e) => ks[s] = e.v,
                        Err(e) => {
                            stage_err = Some(e);
                            break;
                        }
                    }
                }
                let (next, err) = match stage_err {
                    Some(e) => {
                        run.stats.rejected += 1;
                        dt = hstep * 0.2;
                        if dt < dt_min {
                            return Err(e);
                        }
                        continue;
                    }
                    None => {
                        let mut y5 = vec![0.0; n];
                        let terms5: Vec<(f64, &[f64])> = (0..6).map(|j| (hstep * FB5[j], ks[j].as_slice())).collect();
                        axpy_into(&mut y5, &x, &terms5);
                        let mut err = 0.0f64;
                        for i in 0..n {
                            let y4 = x[i] + hstep * (0..6).map(|j| FB4[j] * ks[j][i]).sum::<f64>();
                            let scale = abs_tol + rel_tol * x[i].abs().max(y5[i].abs());
                            err = err.max((y5[i] - y4).abs() / scale);
                        }
                        (y5, err)
                    }
                };
                if !err.is_finite() || !next.iter().all(|v| v.is_finite()) {
                    run.stats.rejected += 1;
                    dt = hstep * 0.2;
                    if dt < dt_min {
                        return Err(FlowError::NonFinite { last_t: t, last_x: x });
                    }
                    continue;
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err > 1.0 {
                    run.stats.rejected += 1;
                    dt = hstep * factor;
                    if dt < dt_min {
                        return Err(FlowError::StepUnderflow { t, dt });
                    }
                    continue;
                }
                let mut next = next;
                let t_next = if clipped { p.t_end } else { t + hstep };
                run.reproject(&mut next, t_next, t, &x)?;
                run.stats.step(hstep);
                cur = run.eval(&next, t_next, t, &x)?;
                x = next;
                t = t_next;
                // keep the pre-clip step size for the next interval
                dt = (if clipped { dt } else { hstep } * factor).clamp(dt_min, dt_max);
                if run.after_step(&x, t, &cur, t >= p.t_end)? {
                    break;
                }
            }
        }
    }
    if run.since_record > 0 {
        run.record(&x, t, &cur)?;
    }
    Ok((run.traj, run.stats))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlideReport {
    pub monotone: bool,
    /// Largest `s_{k+1} - s_k`, negative when strictly decreasing.
    pub max_increase: f64,
    /// Largest finite-difference estimate of `|d²s/dt²|`.
    pub max_s_curvature: f64,
    /// Fitted exponential decay rate of `s` (single constraint only).
    pub rate: Option<f64>,
    /// `2 c min ‖∇h‖²` over the fitted samples.
    pub bound: Option<f64>,
    pub rate_ok: Option<bool>,
    pub passed: bool,
}

/// Monotonicity of the sliding energy and, for one constraint, its
/// exponential decay rate against `2 c min ‖∇h‖²`.
pub fn slide_decay_check(traj: &Trajectory, p: &Problem) -> Result<SlideReport, ModelError> {
    let ss = &traj.samples;
    let mut monotone = true;
    let mut max_increase = f64::NEG_INFINITY;
    for w in ss.windows(2) {
        let inc = w[1].s - w[0].s;
        max_increase = max_increase.max(inc);
        if inc > 1e-9 + 1e-6 * w[0].s {
            monotone = false;
        }
    }
    if ss.len() < 2 {
        max_increase = 0.0;
    }
    let mut max_s_curvature = 0.0f64;
    for w in ss.windows(3) {
        let d1 = (w[1].s - w[0].s) / (w[1].t - w[0].t);
        let d2 = (w[2].s - w[1].s) / (w[2].t - w[1].t);
        max_s_curvature = max_s_curvature.max(((d2 - d1) / (0.5 * (w[2].t - w[0].t))).abs());
    }

    let (mut rate, mut bound, mut rate_ok) = (None, None, None);
    if p.m() == 1 && p.gains[0] > 0.0 && !ss.is_empty() {
        let s0 = ss[0].s;
        let floor = 1e-20f64.max(1e-14 * s0);
        let fit: Vec<&Sample> = ss.iter().take_while(|s| s.s > floor).collect();
        if fit.len() >= 3 {
            let mut min_g2 = f64::INFINITY;
            for s in &fit {
                let g = p.constraint_gradient(0, &s.x, s.t)?;
                min_g2 = min_g2.min(g.iter().map(|v| v * v).sum());
            }
            let k = fit.len() as f64;
            let mt = fit.iter().map(|s| s.t).sum::<f64>() / k;
            let ml = fit.iter().map(|s| s.s.ln()).sum::<f64>() / k;
            let sxy: f64 = fit.iter().map(|s| (s.t - mt) * (s.s.ln() - ml)).sum();
            let sxx: f64 = fit.iter().map(|s| (s.t - mt).powi(2)).sum();
            let r = -sxy / sxx;
            let b = 2.0 * p.gains[0] * min_g2;
            rate = Some(r);
            bound = Some(b);
            rate_ok = Some(r >= 0.9 * b);
        }
    }
    let passed = monotone && rate_ok.unwrap_or(true);
    Ok(SlideReport { monotone, max_increase, max_s_curvature, rate, bound, rate_ok, passed })
}
