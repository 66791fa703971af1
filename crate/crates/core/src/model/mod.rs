//! Problem definitions.
//!
//! A [`Problem`] is either a minimization (`min U(x)`, flowed along
//! `f = -∇U`) or a general vector field `ẋ = f(x, t)`, together with equality
//! constraints `h(x, t) = 0`. All derivatives the flow and the certificates
//! need (∇U, ∇²U, ∂f/∂x, ∇h, ∇²h, ∂h/∂t) are synthesized symbolically when
//! the problem is built, then compiled for evaluation over the slots
//! `[x1, .., xn, t]` with parameters folded in as constants.

mod catalog;
mod file;
mod verify;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{diff, parse, DomainError, Expr, ExprError, Program};
use crate::linalg::{Cholesky, Mat};

pub use catalog::{builtin, builtin_def, catalog, CatalogEntry};
pub use file::{load_problem, parse_problem};
pub use verify::{fd_jacobian, verify_derivatives, DerivativeCheck, DerivativeReport, FD_PASS_TOL};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("in {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: ExprError,
    },
    #[error("dimension mismatch: {what} has length {found}, expected {expected}")]
    DimensionMismatch { what: String, expected: usize, found: usize },
    #[error("gain {index} is {value}, gains must be nonnegative")]
    BadGain { index: usize, value: f64 },
    #[error("metric is not invertible")]
    SingularMetric,
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("{0} is only available for minimization problems")]
    NotMinimize(&'static str),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Cost `U`, flowed along `-∇U`.
    Minimize(String),
    /// Components of `f(x, t)`.
    Field(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Minimize,
    Field,
}

/// Contraction metric `Θ`. Only state- and time-independent metrics exist.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Identity,
    Constant(Mat),
}

/// Raw, unvalidated problem description: what a file or the catalog says.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDef {
    pub name: String,
    pub description: String,
    pub n: usize,
    pub objective: Objective,
    pub constraints: Vec<String>,
    /// Hand-written constraint gradients replacing the synthesized ones.
    pub constraint_grads: Option<Vec<Vec<String>>>,
    /// Empty means all zero.
    pub gains: Vec<f64>,
    pub params: BTreeMap<String, f64>,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub metric: Metric,
    pub analytic_solution: Option<Vec<String>>,
}

impl ProblemDef {
    pub fn new(name: impl Into<String>, n: usize, objective: Objective) -> Self {
        ProblemDef {
            name: name.into(),
            description: String::new(),
            n,
            objective,
            constraints: Vec::new(),
            constraint_grads: None,
            gains: Vec::new(),
            params: BTreeMap::new(),
            x0: vec![0.0; n],
            t0: 0.0,
            t_end: 20.0,
            dt: 1e-3,
            metric: Metric::Identity,
            analytic_solution: None,
        }
    }
}

/// One equality constraint with its synthesized derivatives.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub h: Expr,
    pub grad: Vec<Expr>,
    pub hess: Vec<Vec<Expr>>,
    pub dt: Expr,
    compiled: CompiledConstraint,
}

#[derive(Debug, Clone)]
struct CompiledConstraint {
    h: Program,
    grad: Vec<Program>,
    hess: Vec<Vec<Program>>,
    dt: Program,
}

/// A validated problem with compiled derivatives.
///
/// Initial data, gains, time span and metric are plain fields and may be
/// overridden after construction; everything symbolic is fixed.
#[derive(Debug, Clone)]
pub struct Problem {
    name: String,
    description: String,
    n: usize,
    mode: Mode,
    cost: Option<Expr>,
    cost_grad: Vec<Expr>,
    field: Vec<Expr>,
    field_jac: Vec<Vec<Expr>>,
    constraints: Vec<Constraint>,
    params: BTreeMap<String, f64>,
    analytic: Option<Vec<Expr>>,
    compiled: Compiled,
    time_dependent: bool,
    moving_constraints: bool,
    pub gains: Vec<f64>,
    pub metric: Metric,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone)]
struct Compiled {
    cost: Option<Program>,
    cost_grad: Vec<Program>,
    cost_hess: Vec<Vec<Program>>,
    field: Vec<Program>,
    field_jac: Vec<Vec<Program>>,
    analytic: Option<Vec<Program>>,
}

pub fn state_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Builder<'a> {
    allowed: Vec<String>,
    aliases: Vec<(String, String)>,
    slots: Vec<String>,
    params: &'a BTreeMap<String, f64>,
}

impl Builder<'_> {
    fn parse(&self, text: &str, context: impl Fn() -> String) -> Result<Expr, ModelError> {
        let e = parse(text, &self.allowed).map_err(|source| ModelError::Parse { context: context(), source })?;
        if self.aliases.is_empty() {
            return Ok(e);
        }
        Ok(e.rename(&|name| self.aliases.iter().find(|(a, _)| a == name).map(|(_, to)| to.clone())))
    }

    fn compile(&self, e: &Expr) -> Program {
        let folded = e.substitute(&|name| self.params.get(name).copied());
        Program::compile(&folded, &self.slots).expect("free variables were checked at parse time")
    }
}

impl Problem {
    pub fn from_def(def: ProblemDef) -> Result<Problem, ModelError> {
        let n = def.n;
        if n == 0 {
            return Err(ModelError::Schema("state dimension n must be at least 1".into()));
        }
        check_len("x0", n, def.x0.len())?;
        let m = def.constraints.len();
        if m >= n {
            return Err(ModelError::Schema(format!("{m} constraints in dimension {n}; need fewer constraints than states")));
        }
        let gains = if def.gains.is_empty() { vec![0.0; m] } else { def.gains.clone() };
        check_len("gains", m, gains.len())?;
        if let Some((index, &value)) = gains.iter().enumerate().find(|(_, c)| !(**c >= 0.0) || !c.is_finite()) {
            return Err(ModelError::BadGain { index, value });
        }
        if !def.x0.iter().all(|v| v.is_finite()) {
            return Err(ModelError::Schema("x0 must be finite".into()));
        }
        if !(def.t0.is_finite() && def.t_end.is_finite() && def.dt.is_finite() && def.dt > 0.0) {
            return Err(ModelError::Schema("t0, t_end must be finite and dt positive".into()));
        }
        check_metric(&def.metric, n)?;

        let states = state_names(n);
        for (name, value) in &def.params {
            if !is_identifier(name) || states.contains(name) || name == "t" {
                return Err(ModelError::Schema(format!("invalid parameter name `{name}`")));
            }
            if !value.is_finite() {
                return Err(ModelError::Schema(format!("parameter `{name}` is not finite")));
            }
        }
        let mut allowed: Vec<String> = states.clone();
        allowed.push("t".into());
        allowed.extend(def.params.keys().cloned());
        let mut aliases = Vec::new();
        if n <= 3 {
            for (alias, target) in ["x", "y", "z"].iter().zip(&states) {
                if !allowed.iter().any(|a| a == alias) {
                    allowed.push(alias.to_string());
                    aliases.push((alias.to_string(), target.clone()));
                }
            }
        }
        let mut slots = states.clone();
        slots.push("t".into());
        let b = Builder { allowed, aliases, slots, params: &def.params };

        let (mode, cost, cost_grad, field) = match &def.objective {
            Objective::Minimize(text) => {
                let u = b.parse(text, || "cost".into())?;
                let grad: Vec<Expr> = states.iter().map(|v| diff(&u, v)).collect();
                let field = grad.iter().map(|g| -g.clone()).collect();
                (Mode::Minimize, Some(u), grad, field)
            }
            Objective::Field(components) => {
                check_len("field", n, components.len())?;
                let field = components
                    .iter()
                    .enumerate()
                    .map(|(i, s)| b.parse(s, || format!("field component {}", i + 1)))
                    .collect::<Result<Vec<_>, _>>()?;
                (Mode::Field, None, Vec::new(), field)
            }
        };
        let field_jac: Vec<Vec<Expr>> = field.iter().map(|f| states.iter().map(|v| diff(f, v)).collect()).collect();
        let cost_hess: Vec<Vec<Expr>> =
            cost_grad.iter().map(|g| states.iter().map(|v| diff(g, v)).collect()).collect();

        if let Some(grads) = &def.constraint_grads {
            check_len("constraint_grads", m, grads.len())?;
        }
        let mut constraints = Vec::with_capacity(m);
        for (i, text) in def.constraints.iter().enumerate() {
            let h = b.parse(text, || format!("constraint {i}"))?;
            let grad: Vec<Expr> = match def.constraint_grads.as_ref().map(|g| &g[i]) {
                Some(rows) => {
                    check_len(&format!("constraint_grads[{i}]"), n, rows.len())?;
                    rows.iter()
                        .enumerate()
                        .map(|(j, s)| b.parse(s, || format!("gradient {j} of constraint {i}")))
                        .collect::<Result<_, _>>()?
                }
                None => states.iter().map(|v| diff(&h, v)).collect(),
            };
            let hess: Vec<Vec<Expr>> = grad.iter().map(|g| states.iter().map(|v| diff(g, v)).collect()).collect();
            let dt = diff(&h, "t");
            let compiled = CompiledConstraint {
                h: b.compile(&h),
                grad: grad.iter().map(|e| b.compile(e)).collect(),
                hess: hess.iter().map(|row| row.iter().map(|e| b.compile(e)).collect()).collect(),
                dt: b.compile(&dt),
            };
            constraints.push(Constraint { h, grad, hess, dt, compiled });
        }

        let analytic = match &def.analytic_solution {
            Some(items) => {
                check_len("analytic_solution", n, items.len())?;
                Some(
                    items
                        .iter()
                        .enumerate()
                        .map(|(i, s)| b.parse(s, || format!("analytic solution component {}", i + 1)))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
            None => None,
        };

        let compile_all = |es: &[Expr]| es.iter().map(|e| b.compile(e)).collect::<Vec<_>>();
        let compiled = Compiled {
            cost: cost.as_ref().map(|u| b.compile(u)),
            cost_grad: compile_all(&cost_grad),
            cost_hess: cost_hess.iter().map(|r| compile_all(r)).collect(),
            field: compile_all(&field),
            field_jac: field_jac.iter().map(|r| compile_all(r)).collect(),
            analytic: analytic.as_deref().map(compile_all),
        };

        let mentions_t = |e: &Expr| e.free_vars().contains("t");
        let moving_constraints = constraints.iter().any(|c| mentions_t(&c.h));
        let time_dependent = moving_constraints || field.iter().any(mentions_t) || cost.as_ref().is_some_and(mentions_t);

        Ok(Problem {
            name: def.name,
            description: def.description,
            n,
            mode,
            cost,
            cost_grad,
            field,
            field_jac,
            constraints,
            params: def.params,
            analytic,
            compiled,
            time_dependent,
            moving_constraints,
            gains,
            metric: def.metric,
            x0: def.x0,
            t0: def.t0,
            t_end: def.t_end,
            dt: def.dt,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn cost(&self) -> Option<&Expr> {
        self.cost.as_ref()
    }

    pub fn cost_gradient_exprs(&self) -> &[Expr] {
        &self.cost_grad
    }

    pub fn field_exprs(&self) -> &[Expr] {
        &self.field
    }

    pub fn field_jacobian_exprs(&self) -> &[Vec<Expr>] {
        &self.field_jac
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn analytic_solution_exprs(&self) -> Option<&[Expr]> {
        self.analytic.as_deref()
    }

    /// True when any expression depends on `t`.
    pub fn is_time_varying(&self) -> bool {
        self.time_dependent
    }

    /// True when some constraint depends on `t`.
    pub fn has_moving_constraints(&self) -> bool {
        self.moving_constraints
    }

    fn slots(&self, x: &[f64], t: f64) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "state has wrong dimension");
        let mut s = Vec::with_capacity(self.n + 1);
        s.extend_from_slice(x);
        s.push(t);
        s
    }

    pub fn field(&self, x: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
        let s = self.slots(x, t);
        eval_all(&self.compiled.field, &s)
    }

    /// Symbolic `∂f/∂x`.
    pub fn field_jacobian(&self, x: &[f64], t: f64) -> Result<Mat, ModelError> {
        let s = self.slots(x, t);
        eval_grid(&self.compiled.field_jac, &s)
    }

    pub fn cost_value(&self, x: &[f64], t: f64) -> Result<Option<f64>, ModelError> {
        match &self.compiled.cost {
            Some(p) => Ok(Some(p.eval(&self.slots(x, t))?)),
            None => Ok(None),
        }
    }

    pub fn cost_gradient(&self, x: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
        if self.mode != Mode::Minimize {
            return Err(ModelError::NotMinimize("cost gradient"));
        }
        eval_all(&self.compiled.cost_grad, &self.slots(x, t))
    }

    pub fn cost_hessian(&self, x: &[f64], t: f64) -> Result<Mat, ModelError> {
        if self.mode != Mode::Minimize {
            return Err(ModelError::NotMinimize("cost Hessian"));
        }
        eval_grid(&self.compiled.cost_hess, &self.slots(x, t))
    }

    pub fn constraint_values(&self, x: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
        let s = self.slots(x, t);
        self.constraints.iter().map(|c| Ok(c.compiled.h.eval(&s)?)).collect()
    }

    /// Gradient of constraint `i`.
    pub fn constraint_gradient(&self, i: usize, x: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
        eval_all(&self.constraints[i].compiled.grad, &self.slots(x, t))
    }

    /// `m x n` matrix whose rows are the constraint gradients.
    pub fn constraint_jacobian(&self, x: &[f64], t: f64) -> Result<Mat, ModelError> {
        let s = self.slots(x, t);
        let mut j = Mat::zeros(self.m(), self.n);
        for (i, c) in self.constraints.iter().enumerate() {
            for (k, g) in c.compiled.grad.iter().enumerate() {
                j[(i, k)] = g.eval(&s)?;
            }
        }
        Ok(j)
    }

    pub fn constraint_hessians(&self, x: &[f64], t: f64) -> Result<Vec<Mat>, ModelError> {
        let s = self.slots(x, t);
        self.constraints.iter().map(|c| eval_grid(&c.compiled.hess, &s)).collect()
    }

    pub fn constraint_time_partials(&self, x: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
        let s = self.slots(x, t);
        self.constraints.iter().map(|c| Ok(c.compiled.dt.eval(&s)?)).collect()
    }

    /// Expected solution at `t`, when the problem carries one.
    pub fn analytic_solution(&self, t: f64) -> Result<Option<Vec<f64>>, ModelError> {
        match &self.compiled.analytic {
            Some(progs) => {
                let s = self.slots(&vec![0.0; self.n], t);
                Ok(Some(eval_all(progs, &s)?))
            }
            None => Ok(None),
        }
    }

    /// Metric matrix (identity materialized).
    pub fn metric_matrix(&self) -> Mat {
        match &self.metric {
            Metric::Identity => Mat::identity(self.n),
            Metric::Constant(theta) => theta.clone(),
        }
    }
}

fn eval_all(progs: &[Program], slots: &[f64]) -> Result<Vec<f64>, ModelError> {
    progs.iter().map(|p| Ok(p.eval(slots)?)).collect()
}

fn eval_grid(progs: &[Vec<Program>], slots: &[f64]) -> Result<Mat, ModelError> {
    let rows = progs.len();
    let cols = progs.first().map_or(0, Vec::len);
    let mut out = Mat::zeros(rows, cols);
    for (i, row) in progs.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            out[(i, j)] = p.eval(slots)?;
        }
    }
    Ok(out)
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { what: what.to_string(), expected, found })
    }
}

fn check_metric(metric: &Metric, n: usize) -> Result<(), ModelError> {
    let Metric::Constant(theta) = metric else {
        return Ok(());
    };
    if theta.shape() != (n, n) {
        return Err(ModelError::DimensionMismatch { what: "metric".into(), expected: n, found: theta.rows() });
    }
    if !theta.is_finite() {
        return Err(ModelError::SingularMetric);
    }
    Cholesky::factor(&theta.transpose().matmul(theta).symmetric_part()).map_err(|_| ModelError::SingularMetric)?;
    Ok(())
}
