use std::path::{Path, PathBuf};
use std::time::Instant;

use contraflow::certify::{
    annotate_margins, kkt_report, margin, margin_along, solve, JacobianKind, KKTReport, MarginMode, MarginReport,
    MarginSummary, Verdict, KKT_ETA, KKT_TOL, SOLVE_TOL,
};
use contraflow::flow::{
    detect_convergence, integrate, Convergence, FlowConfig, RhsMode, Sample, StepStats, StopRule, Trajectory,
};
use contraflow::linalg::norm_inf;
use contraflow::model::{catalog, verify_derivatives, DerivativeReport, Mode, Problem, ProblemDef};
use serde::Serialize;

use crate::args::{CheckArgs, KindArg, MarginModeArg, OutputArgs, RunArgs, SolveArgs, VerifyArgs};
use crate::format::{gnuplot_script, read_states, trajectory_csv};
use crate::setup::{self, broadcast_gains, flow_config, rhs_mode, write_file, CliError, ProblemEcho};

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn margin_mode(m: MarginModeArg) -> MarginMode {
    match m {
        MarginModeArg::Hermitian => MarginMode::HermitianPart,
        MarginModeArg::Spectral => MarginMode::Spectral,
    }
}

fn kind_for(mode: RhsMode) -> JacobianKind {
    match mode {
        RhsMode::Raw => JacobianKind::Unconstrained,
        _ => JacobianKind::Constrained,
    }
}

#[derive(Debug, Serialize)]
struct FinalState {
    t: f64,
    x: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct RunReport {
    problem: ProblemEcho,
    config: FlowConfig,
    margin_mode: MarginMode,
    margin_kind: JacobianKind,
    output: Option<PathBuf>,
    final_state: FinalState,
    converged: bool,
    convergence: Convergence,
    final_h_norm: f64,
    lambda: Vec<f64>,
    lambda_kkt: Option<Vec<f64>>,
    kkt_verdict: Option<Verdict>,
    #[serde(rename = "U")]
    u: Option<f64>,
    sup_margin: Option<f64>,
    margins: Option<MarginSummary>,
    margin_error: Option<String>,
    wall_time_s: f64,
    step_stats: StepStats,
}

struct RunOutcome {
    report: RunReport,
    csv: String,
}

fn run_one(def: ProblemDef, source: &Option<PathBuf>, a: &RunArgs, output: Option<PathBuf>) -> Result<RunOutcome, CliError> {
    let mode = rhs_mode(&def, &a.flow);
    let p = Problem::from_def(def)?;
    let stop = if a.until_converged {
        StopRule::Converged { v_tol: SOLVE_TOL, h_tol: SOLVE_TOL }
    } else {
        StopRule::TimeEnd
    };
    let cfg = flow_config(&p, mode, &a.flow, stop);
    let start = Instant::now();
    let (mut traj, stats) = integrate(&p, &cfg)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let (mm, kind) = (margin_mode(a.margin_mode), kind_for(mode));
    let (margins, margin_error) = match margin_along(&traj, &p, mm, kind) {
        Ok((reports, summary)) => {
            annotate_margins(&mut traj, &reports);
            (Some(summary), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let last = traj.last().expect("trajectories hold the initial state").clone();
    let kkt = (p.mode() == Mode::Minimize).then(|| kkt_report(&p, &last.x, last.t, KKT_TOL, KKT_ETA).ok()).flatten();
    let convergence = detect_convergence(&traj, SOLVE_TOL, SOLVE_TOL);
    let report = RunReport {
        problem: ProblemEcho::new(&p, source),
        config: cfg,
        margin_mode: mm,
        margin_kind: kind,
        output,
        final_state: FinalState { t: last.t, x: last.x.clone() },
        converged: convergence.converged,
        convergence,
        final_h_norm: norm_inf(&last.h),
        lambda: last.lambda.clone(),
        lambda_kkt: kkt.as_ref().map(|k| k.lambda_kkt.clone()),
        kkt_verdict: kkt.as_ref().map(|k| k.verdict),
        u: last.u,
        sup_margin: margins.as_ref().map(|m| m.sup),
        margins,
        margin_error,
        wall_time_s,
        step_stats: stats,
    };
    Ok(RunOutcome { csv: trajectory_csv(&traj, p.n(), p.m()), report })
}

fn emit(outcome: &RunOutcome, out: &OutputArgs, csv: Option<&Path>, report: Option<&Path>) -> Result<(), CliError> {
    match csv {
        Some(path) => {
            write_file(path, &outcome.csv)?;
            if out.plot {
                let png = path.with_extension("png");
                let script = gnuplot_script(
                    &path.display().to_string(),
                    &png.display().to_string(),
                    outcome.report.problem.n,
                    outcome.report.problem.m,
                );
                write_file(&path.with_extension("gp"), &script)?;
            }
        }
        None => {
            if out.plot {
                return Err(CliError::Usage("--plot needs -o/--output".into()));
            }
            print!("{}", outcome.csv);
        }
    }
    if let Some(path) = report {
        write_file(path, &to_json(&outcome.report))?;
    }
    let r = &outcome.report;
    eprintln!(
        "{}: t = {}, x = {:?}, |h| = {:.3e}, converged = {}, sup margin = {}",
        r.problem.name,
        r.final_state.t,
        r.final_state.x,
        r.final_h_norm,
        r.converged,
        r.sup_margin.map_or_else(|| "n/a".to_string(), |m| format!("{m:.6}")),
    );
    Ok(())
}

pub fn run(a: &RunArgs) -> Result<i32, CliError> {
    let (def, source) = setup::load(&a.problem, a.flow.dt)?;
    let Some(spec) = &a.sweep else {
        let outcome = run_one(def, &source, a, a.out.output.clone())?;
        emit(&outcome, &a.out, a.out.output.as_deref(), a.out.report.as_deref())?;
        return Ok(0);
    };
    let (key, values) = setup::sweep_values(spec)?;
    let Some(output) = &a.out.output else {
        return Err(CliError::Usage("--sweep needs -o/--output".into()));
    };
    let mut defs = Vec::new();
    for v in &values {
        let mut d = def.clone();
        if key == "c" {
            d.gains = broadcast_gains(&[*v], d.constraints.len())?;
        } else if d.params.contains_key(&key) {
            d.params.insert(key.clone(), *v);
        } else {
            return Err(CliError::Usage(format!("--sweep: `{key}` is neither `c` nor a parameter of {}", d.name)));
        }
        defs.push(d);
    }
    let tags: Vec<String> = values.iter().map(|v| format!("{key}{v}")).collect();
    let results: Vec<Result<RunOutcome, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = defs
            .into_iter()
            .zip(&tags)
            .map(|(d, tag)| {
                let source = &source;
                let path = setup::suffixed(output, tag);
                scope.spawn(move || run_one(d, source, a, Some(path)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut code = 0;
    for (result, tag) in results.into_iter().zip(&tags) {
        match result {
            Ok(outcome) => {
                let report = a.out.report.as_ref().map(|r| setup::suffixed(r, tag));
                emit(&outcome, &a.out, Some(&setup::suffixed(output, tag)), report.as_deref())?;
            }
            Err(e) => {
                eprintln!("error ({tag}): {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    Ok(code)
}

#[derive(Debug, Serialize)]
struct SolveReport {
    problem: ProblemEcho,
    config: FlowConfig,
    x: Vec<f64>,
    t: f64,
    lambda_kkt: Vec<f64>,
    verdict: Verdict,
    certified: bool,
    convergence: Convergence,
    kkt: KKTReport,
    wall_time_s: f64,
    step_stats: StepStats,
}

pub fn solve_cmd(a: &SolveArgs) -> Result<i32, CliError> {
    let (def, source) = setup::load(&a.problem, a.flow.dt)?;
    let mode = rhs_mode(&def, &a.flow);
    let p = Problem::from_def(def)?;
    let cfg = flow_config(&p, mode, &a.flow, StopRule::Converged { v_tol: a.v_tol, h_tol: a.h_tol });
    let start = Instant::now();
    let sol = solve(&p, &cfg, a.tol, a.eta)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let certified = sol.certified();
    println!("x* = {:?}", sol.x());
    println!("lambda_kkt = {:?}", sol.kkt.lambda_kkt);
    println!("verdict = {}", verdict_name(sol.kkt.verdict));
    if !sol.convergence.converged {
        println!("flow did not settle by t = {}", sol.kkt.t);
    }
    if let Some(path) = &a.out.output {
        write_file(path, &trajectory_csv(&sol.trajectory, p.n(), p.m()))?;
    }
    if let Some(path) = &a.out.report {
        let report = SolveReport {
            problem: ProblemEcho::new(&p, &source),
            config: cfg,
            x: sol.x().to_vec(),
            t: sol.kkt.t,
            lambda_kkt: sol.kkt.lambda_kkt.clone(),
            verdict: sol.kkt.verdict,
            certified,
            convergence: sol.convergence,
            kkt: sol.kkt.clone(),
            wall_time_s,
            step_stats: sol.stats.clone(),
        };
        write_file(path, &to_json(&report))?;
    }
    Ok(if certified { 0 } else { 3 })
}

fn verdict_name(v: Verdict) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(String::from)).unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct AlongReport {
    summary: MarginSummary,
    reports: Vec<MarginReport>,
}

pub fn check(a: &CheckArgs) -> Result<i32, CliError> {
    let (def, _) = setup::load(&a.problem, None)?;
    let p = Problem::from_def(def)?;
    let mode = margin_mode(a.margin_mode);
    let kind = match a.kind {
        KindArg::Constrained => JacobianKind::Constrained,
        KindArg::Unconstrained => JacobianKind::Unconstrained,
    };
    if let Some(x) = &a.at {
        if x.len() != p.n() {
            return Err(CliError::Usage(format!("--at has {} values, {} has n = {}", x.len(), p.name(), p.n())));
        }
        let r = margin(&p, x, a.t.unwrap_or(p.t0), mode, kind)?;
        let text = to_json(&r);
        print!("{text}");
        if let Some(path) = &a.report {
            write_file(path, &text)?;
        }
        if !r.on_constraint {
            eprintln!("warning: point is off the constraint set (|h| = {:.3e})", r.h_residual);
        }
        return Ok(if r.contracting() { 0 } else { 4 });
    }
    let Some(path) = &a.along else {
        return Err(CliError::Usage("check needs --at or --along".into()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let rows = read_states(&text, p.n()).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let traj = Trajectory {
        samples: rows
            .into_iter()
            .map(|(t, x)| Sample { t, x, h: Vec::new(), lambda: Vec::new(), s: 0.0, u: None, margin: None, rhs_norm: 0.0 })
            .collect(),
    };
    let (reports, summary) = margin_along(&traj, &p, mode, kind)?;
    print!("{}", to_json(&summary));
    if summary.off_constraint_samples > 0 {
        eprintln!("warning: {} samples are off the constraint set", summary.off_constraint_samples);
    }
    let certified = summary.certified;
    if let Some(path) = &a.report {
        write_file(path, &to_json(&AlongReport { summary, reports }))?;
    }
    Ok(if certified { 0 } else { 4 })
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    problem: &'a str,
    seed: u64,
    #[serde(flatten)]
    report: &'a DerivativeReport,
}

pub fn verify(a: &VerifyArgs) -> Result<i32, CliError> {
    let (def, _) = setup::resolve(&a.problem)?;
    let p = Problem::from_def(def)?;
    let seed = match std::env::var("CONTRAFLOW_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Usage(format!("CONTRAFLOW_SEED must be an integer, got `{s}`")))?,
        Err(_) => 0,
    };
    let r = verify_derivatives(&p, a.samples, seed);
    let text = to_json(&VerifyReport { problem: p.name(), seed, report: &r });
    print!("{text}");
    if let Some(path) = &a.report {
        write_file(path, &text)?;
    }
    for c in r.failures() {
        eprintln!("derivative check failed: {} (max relative error {:.3e})", c.name, c.max_rel_error);
    }
    if r.samples < a.samples {
        eprintln!("only {} of {} sample points were usable", r.samples, a.samples);
    }
    Ok(if r.passed { 0 } else { 5 })
}

pub fn list() -> i32 {
    for e in catalog() {
        println!("{:<37} {}", format!("{} (Example {})", e.name, e.example), e.summary);
    }
    0
}
