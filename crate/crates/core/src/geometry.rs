//! Pointwise constraint geometry.
//!
//! Gradients are rows of `J` (m x n), states are columns and multipliers
//! are m-vectors. All quantities use the actual `J` and `G = J Jᵀ` at the
//! point, so off-constraint evaluation (sliding) needs no special case.

use thiserror::Error;

use crate::linalg::{qr_nullspace_basis, Cholesky, LinalgError, Mat};
use crate::model::{ModelError, Problem};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("regularity lost at x = {x:?}, t = {t}: Gram matrix pivot {pivot} is not positive")]
    RegularityLost { x: Vec<f64>, t: f64, pivot: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What the multiplier and sliding formulas need: `h`, `J`, `∂h/∂t` and a
/// factored Gram matrix.
#[derive(Debug, Clone)]
pub struct Normals {
    pub h: Vec<f64>,
    pub jacobian: Mat,
    pub dt: Vec<f64>,
    pub gram: Mat,
    chol: Cholesky,
}

impl Normals {
    pub fn at(p: &Problem, x: &[f64], t: f64) -> Result<Self, GeometryError> {
        let h = p.constraint_values(x, t)?;
        // an undefined gradient (torus axis) is a loss of regularity
        let mut jacobian = Mat::zeros(p.m(), p.n());
        for i in 0..p.m() {
            let row = p.constraint_gradient(i, x, t).map_err(|e| match e {
                ModelError::Domain(_) => GeometryError::RegularityLost { x: x.to_vec(), t, pivot: i },
                other => other.into(),
            })?;
            for (k, v) in row.into_iter().enumerate() {
                jacobian[(i, k)] = v;
            }
        }
        let dt = p.constraint_time_partials(x, t)?;
        Self::from_parts(h, jacobian, dt, x, t)
    }

    pub fn from_parts(h: Vec<f64>, jacobian: Mat, dt: Vec<f64>, x: &[f64], t: f64) -> Result<Self, GeometryError> {
        let gram = jacobian.matmul(&jacobian.transpose()).symmetric_part();
        let chol = Cholesky::factor(&gram).map_err(|e| regularity(e, x, t))?;
        Ok(Normals { h, jacobian, dt, gram, chol })
    }

    pub fn m(&self) -> usize {
        self.h.len()
    }

    /// `G⁻¹ v` by triangular solves.
    pub fn gram_solve(&self, v: &[f64]) -> Vec<f64> {
        if v.is_empty() {
            return Vec::new();
        }
        self.chol.solve_vec(v)
    }
}

fn regularity(e: LinalgError, x: &[f64], t: f64) -> GeometryError {
    let pivot = match e {
        LinalgError::NotPositiveDefinite { pivot, .. } => pivot,
        _ => 0,
    };
    GeometryError::RegularityLost { x: x.to_vec(), t, pivot }
}

/// Full geometry bundle at a point.
#[derive(Debug, Clone)]
pub struct ConstraintGeometry {
    pub normals: Normals,
    pub projector: Mat,
    pub tangent_basis: Mat,
    pub hessians: Vec<Mat>,
}

impl AsRef<Normals> for Normals {
    fn as_ref(&self) -> &Normals {
        self
    }
}

impl AsRef<Normals> for ConstraintGeometry {
    fn as_ref(&self) -> &Normals {
        &self.normals
    }
}

impl ConstraintGeometry {
    pub fn h(&self) -> &[f64] {
        &self.normals.h
    }

    pub fn jacobian(&self) -> &Mat {
        &self.normals.jacobian
    }

    pub fn gram(&self) -> &Mat {
        &self.normals.gram
    }

    pub fn dt(&self) -> &[f64] {
        &self.normals.dt
    }
}

/// `P = I - Jᵀ G⁻¹ J` and the QR tangent basis at `(x, t)`.
pub fn geometry_at(p: &Problem, x: &[f64], t: f64) -> Result<ConstraintGeometry, GeometryError> {
    let normals = Normals::at(p, x, t)?;
    let n = p.n();
    let j = &normals.jacobian;
    let mut projector = Mat::identity(n);
    if normals.m() > 0 {
        let ginv_j = normals.chol.solve(j);
        projector = projector.sub(&j.transpose().matmul(&ginv_j)).symmetric_part();
    }
    let tangent_basis = qr_nullspace_basis(j).map_err(|e| match e {
        LinalgError::RankDeficient { rank, .. } => GeometryError::RegularityLost { x: x.to_vec(), t, pivot: rank },
        other => regularity(other, x, t),
    })?;
    let hessians = p.constraint_hessians(x, t)?;
    Ok(ConstraintGeometry { normals, projector, tangent_basis, hessians })
}

/// `λ = -G⁻¹ J f`, making `f + Jᵀλ` tangent.
pub fn lambda_static(geom: impl AsRef<Normals>, f: &[f64]) -> Vec<f64> {
    let g = geom.as_ref();
    let jf = g.jacobian.mul_vec(f);
    g.gram_solve(&jf).into_iter().map(|v| -v).collect()
}

/// `λ = -G⁻¹ (J f + ∂h/∂t)`, giving exact constraint transport.
pub fn lambda_timevarying(geom: impl AsRef<Normals>, f: &[f64]) -> Vec<f64> {
    let g = geom.as_ref();
    let rhs: Vec<f64> = g.jacobian.mul_vec(f).iter().zip(&g.dt).map(|(a, b)| a + b).collect();
    g.gram_solve(&rhs).into_iter().map(|v| -v).collect()
}

/// `-Σ c_i h_i ∇h_i`.
pub fn sliding_term(geom: impl AsRef<Normals>, gains: &[f64]) -> Vec<f64> {
    let g = geom.as_ref();
    assert_eq!(gains.len(), g.m(), "one gain per constraint");
    let w: Vec<f64> = gains.iter().zip(&g.h).map(|(c, h)| -c * h).collect();
    g.jacobian.tr_mul_vec(&w)
}

/// `f + Jᵀλ`.
pub fn add_normal_force(geom: impl AsRef<Normals>, f: &[f64], lambda: &[f64]) -> Vec<f64> {
    let g = geom.as_ref();
    g.jacobian.tr_mul_vec(lambda).iter().zip(f).map(|(a, b)| a + b).collect()
}

/// Sliding energy `½ Σ c_i h_i²`.
pub fn sliding_energy(h: &[f64], gains: &[f64]) -> f64 {
    0.5 * gains.iter().zip(h).map(|(c, h)| c * h * h).sum::<f64>()
}
