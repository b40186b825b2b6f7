use nalgebra::{DMatrix, DVector};

use super::{SymMatrix, ToleranceConfig};
use crate::error::{Error, Result};

fn probe<F>(f: &F, x: &DVector<f64>) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let value = f(x);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::domain(
            format!("non-finite value {value} at finite-difference probe"),
            x.as_slice(),
        ))
    }
}

/// Central-difference gradient with step `cfg.fd_step`.
pub fn central_gradient<F>(f: F, x: &DVector<f64>, cfg: &ToleranceConfig) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = cfg.fd_step;
    let mut grad = DVector::zeros(x.len());
    let mut xp = x.clone();
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let fp = probe(&f, &xp)?;
        xp[k] = x[k] - h;
        let fm = probe(&f, &xp)?;
        xp[k] = x[k];
        grad[k] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Second-difference Hessian with step `cfg.fd_hessian_step`, symmetrized.
pub fn central_hessian<F>(f: F, x: &DVector<f64>, cfg: &ToleranceConfig) -> Result<SymMatrix>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = cfg.fd_hessian_step;
    let d = x.len();
    let f0 = probe(&f, x)?;
    let mut m = DMatrix::zeros(d, d);
    let mut xp = x.clone();
    for j in 0..d {
        xp[j] = x[j] + h;
        let fp = probe(&f, &xp)?;
        xp[j] = x[j] - h;
        let fm = probe(&f, &xp)?;
        xp[j] = x[j];
        m[(j, j)] = (fp - 2.0 * f0 + fm) / (h * h);
        for k in (j + 1)..d {
            let mut corner = |sj: f64, sk: f64| {
                xp[j] = x[j] + sj * h;
                xp[k] = x[k] + sk * h;
                let v = probe(&f, &xp);
                xp[j] = x[j];
                xp[k] = x[k];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
    Ok(SymMatrix::symmetrize(&m).0)
}

/// Central-difference Jacobian of a vector map, `out × in`.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut cols = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let fp = f(&xp)?;
        xp[k] = x[k] - h;
        let fm = f(&xp)?;
        xp[k] = x[k];
        cols.push((fp - fm) / (2.0 * h));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, x.len(), |r, c| cols[c][r]))
}

/// Fourth-order five-point derivative of a scalar map at `x`.
pub fn five_point_derivative<F>(f: F, x: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let vals = [x + 2.0 * h, x + h, x - h, x - 2.0 * h].map(&f);
    if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
        let at = [x + 2.0 * h, x + h, x - h, x - 2.0 * h][bad];
        return Err(Error::domain(
            "non-finite value in five-point stencil",
            &[at],
        ));
    }
    Ok((-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * h))
}
