use nalgebra::{DMatrix, DVector};

use super::{central_jacobian, ToleranceConfig};
use crate::error::{Error, Result};

type MapFn<'a> = &'a dyn Fn(&DVector<f64>) -> Option<DVector<f64>>;
type JacFn<'a> = &'a dyn Fn(&DVector<f64>) -> Option<DMatrix<f64>>;

const POLISH_STEPS: usize = 3;

/// Solves `map(x) = target` for a strictly monotone `map` by damped Newton
/// iteration started at `x0`.
///
/// `map` returns `None` outside its domain; such steps are halved until they
/// land inside. Without an analytic `jacobian` a central-difference one is
/// used. Once the residual is below `cfg.root_tol` a few extra Newton steps
/// are taken while they keep reducing it.
pub fn solve_monotone(
    map: MapFn<'_>,
    jacobian: Option<JacFn<'_>>,
    target: &DVector<f64>,
    x0: &DVector<f64>,
    cfg: &ToleranceConfig,
) -> Result<DVector<f64>> {
    let residual_at = |x: &DVector<f64>| map(x).map(|fx| fx - target);
    let mut x = x0.clone();
    let mut r = residual_at(&x)
        .ok_or_else(|| Error::domain("starting point outside the map's domain", x.as_slice()))?;
    if r.len() != target.len() {
        return Err(Error::Dimension {
            expected: target.len(),
            got: r.len(),
        });
    }

    let newton_direction = |x: &DVector<f64>, r: &DVector<f64>| -> DVector<f64> {
        let jac = match jacobian {
            Some(j) => j(x),
            None => central_jacobian(
                |y| map(y).ok_or_else(|| Error::domain("jacobian probe", y.as_slice())),
                x,
                cfg.fd_step,
            )
            .ok(),
        };
        jac.and_then(|j| j.lu().solve(r))
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .map(|d| -d)
            .unwrap_or_else(|| -r)
    };

    let mut converged_at = None;
    for iter in 0..cfg.max_iter {
        let norm = r.norm();
        if norm <= cfg.root_tol {
            converged_at = Some(iter);
            break;
        }
        let d = newton_direction(&x, &r);
        if below_resolution(&x, &d) {
            // The residual is rounding noise of `map` near `x`.
            return Ok(x);
        }
        let mut t = 1.0;
        loop {
            let candidate = &x + &d * t;
            let left_domain = match residual_at(&candidate) {
                Some(rc) if rc.norm() <= (1.0 - 1e-4 * t) * norm => {
                    x = candidate;
                    r = rc;
                    break;
                }
                Some(_) => false,
                None => true,
            };
            t *= 0.5;
            if t < 1e-12 {
                return Err(if left_domain {
                    Error::domain("damped step could not stay inside the domain", x.as_slice())
                } else {
                    Error::Convergence {
                        iterations: iter + 1,
                        residual: norm,
                    }
                });
            }
        }
    }
    if converged_at.is_none() {
        if r.norm() <= cfg.root_tol {
            return Ok(x);
        }
        return Err(Error::Convergence {
            iterations: cfg.max_iter,
            residual: r.norm(),
        });
    }
    for _ in 0..POLISH_STEPS {
        if r.norm() == 0.0 {
            break;
        }
        let candidate = &x + newton_direction(&x, &r);
        match residual_at(&candidate) {
            Some(rc) if rc.norm() < r.norm() => {
                x = candidate;
                r = rc;
            }
            _ => break,
        }
    }
    Ok(x)
}

fn below_resolution(x: &DVector<f64>, d: &DVector<f64>) -> bool {
    x.iter()
        .zip(d.iter())
        .all(|(xi, di)| di.abs() <= 4.0 * f64::EPSILON * xi.abs().max(f64::MIN_POSITIVE))
}
