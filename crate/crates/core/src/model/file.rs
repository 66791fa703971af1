use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{Metric, ModelError, Objective, ProblemDef};
use crate::linalg::Mat;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    n: usize,
    mode: String,
    #[serde(default)]
    cost: Option<String>,
    #[serde(default)]
    field: Option<Vec<String>>,
    #[serde(default)]
    constraints: Vec<String>,
    #[serde(default)]
    constraint_grads: Option<Vec<Vec<String>>>,
    #[serde(default)]
    gains: Vec<f64>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    x0: Vec<f64>,
    #[serde(default)]
    t0: Option<f64>,
    #[serde(default)]
    t_end: Option<f64>,
    #[serde(default)]
    dt: Option<f64>,
    #[serde(default)]
    metric: Option<MetricSpec>,
    #[serde(default)]
    analytic_solution: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MetricSpec {
    Named(String),
    Constant {
        constant: Vec<Vec<f64>>,
    },
}

/// Parses a problem document. `name` labels the result.
pub fn parse_problem(text: &str, name: &str) -> Result<ProblemDef, ModelError> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
    let objective = match file.mode.as_str() {
        "minimize" => {
            if file.field.is_some() {
                return Err(ModelError::Schema("`field` is not allowed in minimize mode".into()));
            }
            Objective::Minimize(file.cost.ok_or_else(|| ModelError::Schema("minimize mode needs `cost`".into()))?)
        }
        "field" => {
            if file.cost.is_some() {
                return Err(ModelError::Schema("`cost` is not allowed in field mode".into()));
            }
            Objective::Field(file.field.ok_or_else(|| ModelError::Schema("field mode needs `field`".into()))?)
        }
        other => return Err(ModelError::Schema(format!("unknown mode `{other}`, expected minimize or field"))),
    };
    let metric = match file.metric {
        None => Metric::Identity,
        Some(MetricSpec::Named(s)) if s == "identity" => Metric::Identity,
        Some(MetricSpec::Named(s)) => return Err(ModelError::Schema(format!("unknown metric `{s}`"))),
        Some(MetricSpec::Constant { constant }) => {
            let cols = constant.first().map_or(0, Vec::len);
            if constant.iter().any(|r| r.len() != cols) {
                return Err(ModelError::Schema("metric rows have different lengths".into()));
            }
            Metric::Constant(Mat::from_rows(&constant))
        }
    };
    let mut def = ProblemDef::new(name, file.n, objective);
    def.constraints = file.constraints;
    def.constraint_grads = file.constraint_grads;
    def.gains = file.gains;
    def.params = file.params;
    def.x0 = file.x0;
    def.t0 = file.t0.unwrap_or(def.t0);
    def.t_end = file.t_end.unwrap_or(def.t_end);
    def.dt = file.dt.unwrap_or(def.dt);
    def.metric = metric;
    def.analytic_solution = file.analytic_solution;
    Ok(def)
}

/// Reads and parses a problem file; the file stem becomes the problem name.
pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemDef, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    parse_problem(&text, &name)
}
