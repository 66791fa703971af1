//! Problem resolution and the effective configuration of a command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use contraflow::certify::{CertError, SolveError};
use contraflow::flow::{FlowConfig, FlowError, Integrator, Reproject, RhsMode, StopRule};
use contraflow::geometry::GeometryError;
use contraflow::linalg::Mat;
use contraflow::model::{builtin_def, load_problem, Metric, Mode, ModelError, Problem, ProblemDef};
use serde::Serialize;
use thiserror::Error;

use crate::args::{FlowArgs, FlowMode, IntegratorKind, ProblemArgs, ReprojectKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Flow(e) | CliError::Solve(SolveError::Flow(e)) => flow_code(e),
            CliError::Cert(CertError::Geometry(GeometryError::RegularityLost { .. }))
            | CliError::Solve(SolveError::Cert(CertError::Geometry(GeometryError::RegularityLost { .. }))) => 2,
            _ => 1,
        }
    }
}

fn flow_code(e: &FlowError) -> i32 {
    match e {
        FlowError::RegularityLost { .. } | FlowError::StepUnderflow { .. } | FlowError::NonFinite { .. } => 2,
        FlowError::Model { .. } => 2,
        FlowError::InfeasibleStart { .. } | FlowError::InvalidConfig(_) => 1,
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

/// Built-in name first, then a file path.
pub fn resolve(spec: &str) -> Result<(ProblemDef, Option<PathBuf>), CliError> {
    match builtin_def(spec) {
        Ok(def) => Ok((def, None)),
        Err(ModelError::UnknownProblem(_)) if Path::new(spec).is_file() => Ok((load_problem(spec)?, Some(spec.into()))),
        Err(e) => Err(e.into()),
    }
}

fn parse_metric(spec: &str) -> Result<Metric, CliError> {
    if spec == "identity" {
        return Ok(Metric::Identity);
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| CliError::Usage(format!("--metric must be `identity` or a readable file ({spec}: {e})")))?;
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("metric file {spec}: {e}")))?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(CliError::Usage(format!("metric file {spec}: rows must be nonempty and of equal length")));
    }
    Ok(Metric::Constant(Mat::from_rows(&rows)))
}

fn parse_param(s: &str) -> Result<(String, f64), CliError> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--param expects NAME=VALUE, got `{s}`")))?;
    let v = v.trim().parse().map_err(|_| CliError::Usage(format!("--param {k}: `{v}` is not a number")))?;
    Ok((k.trim().to_string(), v))
}

/// Applies command-line overrides to a definition (flags beat file and
/// catalog values).
pub fn apply_overrides(def: &mut ProblemDef, a: &ProblemArgs, dt: Option<f64>) -> Result<(), CliError> {
    if let Some(x0) = &a.x0 {
        def.x0 = x0.clone();
    }
    if let Some(t0) = a.t0 {
        def.t0 = t0;
    }
    if let Some(t_end) = a.t_end {
        def.t_end = t_end;
    }
    if let Some(dt) = dt {
        def.dt = dt;
    }
    if let Some(c) = &a.c {
        def.gains = broadcast_gains(c, def.constraints.len())?;
    }
    if let Some(m) = &a.metric {
        def.metric = parse_metric(m)?;
    }
    for p in &a.params {
        let (k, v) = parse_param(p)?;
        def.params.insert(k, v);
    }
    Ok(())
}

pub fn broadcast_gains(c: &[f64], m: usize) -> Result<Vec<f64>, CliError> {
    match c.len() {
        1 => Ok(vec![c[0]; m]),
        k if k == m => Ok(c.to_vec()),
        k => Err(CliError::Usage(format!("--c takes 1 or {m} values, got {k}"))),
    }
}

pub fn rhs_mode(def: &ProblemDef, flow: &FlowArgs) -> RhsMode {
    match flow.mode {
        Some(FlowMode::Raw) => RhsMode::Raw,
        Some(FlowMode::Projected) => RhsMode::Projected,
        Some(FlowMode::Sliding) => RhsMode::ProjectedSliding,
        None if def.gains.iter().any(|c| *c > 0.0) => RhsMode::ProjectedSliding,
        None => RhsMode::Projected,
    }
}

pub fn flow_config(p: &Problem, mode: RhsMode, flow: &FlowArgs, stop: StopRule) -> FlowConfig {
    let integrator = match flow.integrator {
        IntegratorKind::Rk4 => Integrator::Rk4 { dt: p.dt },
        IntegratorKind::Rkf45 => Integrator::Rkf45 {
            abs_tol: flow.abs_tol,
            rel_tol: flow.rel_tol,
            dt_min: flow.dt_min,
            dt_max: flow.dt_max,
        },
    };
    let reproject = match flow.reproject {
        ReprojectKind::Off => Reproject::Off,
        ReprojectKind::Newton => Reproject::Newton { tol: flow.newton_tol, max_iter: flow.newton_max_iter },
    };
    FlowConfig { rhs_mode: mode, integrator, reproject, stop, record_every: flow.record_every, start_tol: flow.start_tol }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemEcho {
    pub name: String,
    pub source: String,
    pub n: usize,
    pub m: usize,
    pub mode: &'static str,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub gains: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    pub metric: MetricEcho,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum MetricEcho {
    Named(&'static str),
    Constant { constant: Mat },
}

impl ProblemEcho {
    pub fn new(p: &Problem, source: &Option<PathBuf>) -> Self {
        ProblemEcho {
            name: p.name().to_string(),
            source: source.as_ref().map_or_else(|| "catalog".to_string(), |path| path.display().to_string()),
            n: p.n(),
            m: p.m(),
            mode: match p.mode() {
                Mode::Minimize => "minimize",
                Mode::Field => "field",
            },
            x0: p.x0.clone(),
            t0: p.t0,
            t_end: p.t_end,
            dt: p.dt,
            gains: p.gains.clone(),
            params: p.params().clone(),
            metric: match &p.metric {
                Metric::Identity => MetricEcho::Named("identity"),
                Metric::Constant(m) => MetricEcho::Constant { constant: m.clone() },
            },
        }
    }
}

/// Resolves a problem and applies overrides in one go.
pub fn load(a: &ProblemArgs, dt: Option<f64>) -> Result<(ProblemDef, Option<PathBuf>), CliError> {
    let (mut def, source) = resolve(&a.problem)?;
    apply_overrides(&mut def, a, dt)?;
    Ok((def, source))
}

pub fn sweep_values(spec: &str) -> Result<(String, Vec<f64>), CliError> {
    let (key, list) =
        spec.split_once('=').ok_or_else(|| CliError::Usage(format!("--sweep expects KEY=v1,v2,..., got `{spec}`")))?;
    let values = list
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("--sweep: `{v}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("--sweep needs at least one value".into()));
    }
    Ok((key.trim().to_string(), values))
}

/// `traj.csv` with suffix `c0.1` becomes `traj_c0.1.csv`.
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}
