//! Numerical kernels shared by every other module: finite differences,
//! symmetric eigenvalues, adaptive Simpson quadrature and a damped Newton
//! solver for monotone maps.
//!
//! Everything here is pure; nothing holds state between calls.

mod diff;
mod eigen;
mod quad;
mod root;

pub use diff::{central_gradient, central_hessian, central_jacobian, five_point_derivative};
pub use eigen::{min_shifted_eigenvalue, SymMatrix};
pub use quad::{
    cell_tolerance, lobatto_nodes, quad_integrate, simpson_estimate, Antiderivative,
    CELL_RELATIVE_TOL,
};
pub use root::solve_monotone;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step sizes and tolerances used by the numerical kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Central-difference step for gradients and Jacobians.
    pub fd_step: f64,
    /// Step for second differences and for differentiating the curvature ratio.
    pub fd_hessian_step: f64,
    /// Eigenvalue slack when deciding `M ≽ cI`.
    pub psd_tol: f64,
    /// Absolute quadrature error target.
    pub quad_tol: f64,
    /// Residual target for [`solve_monotone`].
    pub root_tol: f64,
    pub max_iter: usize,
    /// Distance from the simplex boundary at which boundary-unbounded
    /// quantities are truncated.
    pub interior_margin: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            fd_hessian_step: 1e-4,
            psd_tol: 1e-8,
            quad_tol: 1e-10,
            root_tol: 1e-12,
            max_iter: 100,
            interior_margin: 1e-7,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fd_step", self.fd_step),
            ("fd_hessian_step", self.fd_hessian_step),
            ("quad_tol", self.quad_tol),
            ("root_tol", self.root_tol),
            ("interior_margin", self.interior_margin),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.psd_tol.is_finite() && self.psd_tol >= 0.0) {
            return Err(Error::Config(format!(
                "psd_tol must be non-negative, got {}",
                self.psd_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.interior_margin >= 0.5 {
            return Err(Error::Config("interior_margin must be below 1/2".into()));
        }
        Ok(())
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

/// Column-stacking `vec` operator.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    num / den
}

/// Inverts a small square matrix, reporting the determinant on failure.
pub fn invert(m: &DMatrix<f64>, point: &[f64]) -> Result<DMatrix<f64>> {
    let det = m.determinant();
    if !det.is_finite() || det.abs() <= 1e-12 {
        return Err(Error::CurvatureSingularity {
            point: point.to_vec(),
            det: det.abs(),
        });
    }
    m.clone().try_inverse().ok_or(Error::CurvatureSingularity {
        point: point.to_vec(),
        det: det.abs(),
    })
}
