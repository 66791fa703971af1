use std::collections::BTreeMap;
use std::f64::consts::{E, FRAC_1_SQRT_2};

use super::{ModelError, Objective, Problem, ProblemDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub example: u32,
    pub summary: &'static str,
}

const ENTRIES: [CatalogEntry; 15] = [
    CatalogEntry { name: "seir", example: 6, summary: "SEIR epidemic field projected on the population simplex" },
    CatalogEntry { name: "circle", example: 7, summary: "min x+y on the unit circle" },
    CatalogEntry { name: "sphere", example: 8, summary: "distance from (0,0,2) to the unit sphere" },
    CatalogEntry { name: "ellipsoid-dist", example: 9, summary: "distance from (1,4,2) to an ellipsoid" },
    CatalogEntry { name: "two-constraints", example: 10, summary: "distance from (1,4,2) to a sphere cut by a plane" },
    CatalogEntry { name: "torus", example: 11, summary: "min x on a torus" },
    CatalogEntry { name: "circle-sliding", example: 12, summary: "circle problem started off the constraint" },
    CatalogEntry { name: "sphere-sliding", example: 13, summary: "sphere problem started off the constraint" },
    CatalogEntry { name: "ellipsoid-volume", example: 14, summary: "largest box inscribed in an ellipsoid, off-constraint start" },
    CatalogEntry { name: "two-constraints-sliding", example: 15, summary: "two-constraint problem with gains (10, 1)" },
    CatalogEntry { name: "growing-circle", example: 16, summary: "min x+y on the circle of radius t" },
    CatalogEntry { name: "growing-ellipse", example: 17, summary: "min x+y on t x^2 + y^2 = 1" },
    CatalogEntry { name: "asymptotic-circle", example: 18, summary: "circle of radius exp(1/t) shrinking to the unit circle" },
    CatalogEntry { name: "growing-circle-sliding", example: 19, summary: "growing circle started off the constraint" },
    CatalogEntry { name: "growing-ellipse-sliding", example: 20, summary: "growing ellipse started off the constraint" },
];

pub fn catalog() -> &'static [CatalogEntry] {
    &ENTRIES
}

pub fn builtin(name: &str) -> Result<Problem, ModelError> {
    Problem::from_def(builtin_def(name)?)
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn minimize(name: &str, n: usize, cost: &str, constraints: &[&str]) -> ProblemDef {
    let mut d = ProblemDef::new(name, n, Objective::Minimize(cost.into()));
    d.constraints = strings(constraints);
    d
}

const SPHERE_COST: &str = "(x^2+y^2+(z-2)^2)/2";
const SPHERE: &str = "x^2+y^2+z^2-1";
const ELLIPSOID: &str = "x^2/a^2+y^2/b^2+z^2/c^2-1";
const TARGET_COST: &str = "((x-1)^2+(y-4)^2+(z-2)^2)/2";

/// Radial scaling of `p` onto the level set `q = 1`.
fn onto_ellipsoid(p: [f64; 3], axes: [f64; 3]) -> Vec<f64> {
    let q: f64 = p.iter().zip(axes).map(|(x, a)| (x / a).powi(2)).sum();
    p.iter().map(|x| x / q.sqrt()).collect()
}

pub fn builtin_def(name: &str) -> Result<ProblemDef, ModelError> {
    let entry = ENTRIES
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| ModelError::UnknownProblem(name.to_string()))?;
    let mut d = match name {
        "seir" => {
            let mut d = ProblemDef::new(
                name,
                4,
                Objective::Field(strings(&[
                    "b - b*x1 - lam*x3*x1 + alpha*x3*x1 + delta*x4",
                    "lam*x3*x1 - (eps+b)*x2 + alpha*x3*x2",
                    "eps*x2 - (gamma+alpha+b)*x3 + alpha*x3^2",
                    "gamma*x3 - (b+delta)*x4 + alpha*x3*x4",
                ])),
            );
            d.constraints = strings(&["x1+x2+x3+x4-1"]);
            d.params = params(&[("b", 0.02), ("lam", 0.5), ("alpha", 0.1), ("delta", 0.05), ("eps", 0.3), ("gamma", 0.2)]);
            d.x0 = vec![0.7, 0.1, 0.1, 0.1];
            d.t_end = 200.0;
            d
        }
        "circle" | "circle-sliding" => {
            let mut d = minimize(name, 2, "x+y", &["x^2+y^2-1"]);
            d.analytic_solution = Some(strings(&["-1/sqrt(2)", "-1/sqrt(2)"]));
            if name == "circle" {
                d.x0 = vec![0.0, 1.0];
            } else {
                d.gains = vec![1.0];
                d.x0 = vec![2.0, 0.5];
            }
            d
        }
        "sphere" | "sphere-sliding" => {
            let mut d = minimize(name, 3, SPHERE_COST, &[SPHERE]);
            d.analytic_solution = Some(strings(&["0", "0", "1"]));
            if name == "sphere" {
                d.x0 = vec![1.0, 0.0, 0.0];
            } else {
                d.gains = vec![1.0];
                d.x0 = vec![1.0, 1.0, 1.0];
            }
            d
        }
        "ellipsoid-dist" => {
            let mut d = minimize(name, 3, TARGET_COST, &[ELLIPSOID]);
            d.params = params(&[("a", 15.0), ("b", 5.0), ("c", 3.0)]);
            d.x0 = onto_ellipsoid([6.7, -2.5, 2.2], [15.0, 5.0, 3.0]);
            d.t_end = 50.0;
            d
        }
        "ellipsoid-volume" => {
            let mut d = minimize(name, 3, "-x*y*z", &[ELLIPSOID]);
            d.params = params(&[("a", 15.0), ("b", 5.0), ("c", 3.0)]);
            d.gains = vec![1.0];
            d.x0 = vec![5.0, 2.0, 1.0];
            d.t_end = 100.0;
            d.analytic_solution = Some(strings(&["a/sqrt(3)", "b/sqrt(3)", "c/sqrt(3)"]));
            d
        }
        "two-constraints" | "two-constraints-sliding" => {
            let mut d = minimize(name, 3, TARGET_COST, &[SPHERE, "x+y+z"]);
            d.analytic_solution = Some(strings(&["-4/sqrt(42)", "5/sqrt(42)", "-1/sqrt(42)"]));
            if name == "two-constraints" {
                d.x0 = vec![0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2];
            } else {
                d.gains = vec![10.0, 1.0];
                d.x0 = vec![1.0, 0.5, 0.0];
            }
            d
        }
        "torus" => {
            let mut d = minimize(name, 3, "x", &["(R-sqrt(x^2+y^2))^2+z^2-r^2"]);
            d.params = params(&[("R", 2.0), ("r", 0.5)]);
            d.x0 = vec![-1.5, 2.0, 0.0];
            d.t_end = 100.0;
            d.analytic_solution = Some(strings(&["-(R+r)", "0", "0"]));
            d
        }
        "growing-circle" | "growing-circle-sliding" => {
            let mut d = minimize(name, 2, "x+y", &["x^2+y^2-t^2"]);
            d.t0 = 1.0;
            d.t_end = 10.0;
            d.analytic_solution = Some(strings(&["-t/sqrt(2)", "-t/sqrt(2)"]));
            if name == "growing-circle" {
                d.x0 = vec![-FRAC_1_SQRT_2, -FRAC_1_SQRT_2];
            } else {
                d.gains = vec![1.0];
                d.x0 = vec![-1.0, -0.5];
            }
            d
        }
        "growing-ellipse" | "growing-ellipse-sliding" => {
            let mut d = minimize(name, 2, "x+y", &["t*x^2+y^2-1"]);
            d.t0 = 1.0;
            d.t_end = 10.0;
            d.analytic_solution = Some(strings(&["-1/sqrt(t*(1+t))", "-sqrt(t/(1+t))"]));
            if name == "growing-ellipse" {
                d.x0 = vec![-FRAC_1_SQRT_2, -FRAC_1_SQRT_2];
            } else {
                d.gains = vec![1.0];
                d.x0 = vec![-1.0, -1.0];
            }
            d
        }
        "asymptotic-circle" => {
            let mut d = minimize(name, 2, "x+y", &["x^2+y^2-exp(2/t)"]);
            d.t0 = 1.0;
            d.t_end = 50.0;
            d.x0 = vec![-E * FRAC_1_SQRT_2, -E * FRAC_1_SQRT_2];
            d.analytic_solution = Some(strings(&["-exp(1/t)/sqrt(2)", "-exp(1/t)/sqrt(2)"]));
            d
        }
        _ => unreachable!("catalog entry without definition"),
    };
    d.description = entry.summary.to_string();
    Ok(d)
}
