//! Closest-point projections onto manifolds with known geometry.
//!
//! These are test oracles for the central geometric fact the regularizer
//! relies on: at an on-manifold point `m`, the Jacobian of the closest-point
//! map equals the tangent projector `T_m T_mᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionOracle {
    /// `{ mean + T a }` for an orthonormal `T`.
    Affine { mean: DVector<f64>, basis: DMatrix<f64> },
    /// The unit sphere centred at the origin.
    UnitSphere,
}

impl ProjectionOracle {
    pub fn affine(mean: DVector<f64>, basis: DMatrix<f64>) -> Result<Self> {
        if mean.len() != basis.nrows() {
            return Err(Error::DimensionMismatch {
                expected: basis.nrows(),
                found: mean.len(),
            });
        }
        let r = basis.ncols();
        if (basis.transpose() * &basis - DMatrix::<f64>::identity(r, r)).amax() >= 1e-10 {
            return Err(invalid("affine oracle basis must be orthonormal"));
        }
        Ok(ProjectionOracle::Affine { mean, basis })
    }

    /// Closest point on the manifold.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            ProjectionOracle::Affine { mean, basis } => {
                if x.len() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        found: x.len(),
                    });
                }
                let off = x - mean;
                Ok(mean + basis * (basis.transpose() * off))
            }
            ProjectionOracle::UnitSphere => {
                let n = x.norm();
                if n == 0.0 {
                    return Err(Error::UndefinedProjection(
                        "the origin has no unique closest point on the sphere".into(),
                    ));
                }
                Ok(x / n)
            }
        }
    }

    /// Analytic tangent projector at an on-manifold point `m`.
    pub fn tangent_projector(&self, m: &DVector<f64>) -> DMatrix<f64> {
        match self {
            ProjectionOracle::Affine { basis, .. } => basis * basis.transpose(),
            ProjectionOracle::UnitSphere => {
                let u = m.normalize();
                DMatrix::identity(m.len(), m.len()) - &u * u.transpose()
            }
        }
    }

    /// Central-difference Jacobian of [`project`](Self::project) at `m`, with
    /// entry `(i, j) = ∂f_j / ∂x_i`.
    pub fn jacobian_fd(&self, m: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        if !(h > 0.0) {
            return Err(invalid("finite-difference step must be positive"));
        }
        let n = m.len();
        let mut jac = DMatrix::zeros(n, n);
        let mut probe = m.clone();
        for i in 0..n {
            probe[i] = m[i] + h;
            let up = self.project(&probe)?;
            probe[i] = m[i] - h;
            let down = self.project(&probe)?;
            probe[i] = m[i];
            for j in 0..n {
                jac[(i, j)] = (up[j] - down[j]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}
