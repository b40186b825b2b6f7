use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real symmetric matrix. The upper triangle is authoritative; the lower
/// triangle is kept mirrored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Mirrors the upper triangle of `m` into the lower one.
    pub fn from_upper(m: &DMatrix<f64>) -> Result<Self> {
        let (r, c) = m.shape();
        if r != c || r == 0 {
            return Err(Error::Dimension {
                expected: r.max(1),
                got: c,
            });
        }
        Ok(Self(DMatrix::from_fn(r, r, |j, k| {
            if j <= k {
                m[(j, k)]
            } else {
                m[(k, j)]
            }
        })))
    }

    /// Returns `(M + Mᵀ)/2` and the Frobenius norm of the antisymmetric part.
    pub fn symmetrize(m: &DMatrix<f64>) -> (Self, f64) {
        let t = m.transpose();
        let sym = (m + &t) * 0.5;
        let asym = ((m - &t) * 0.5).norm();
        (Self(sym), asym)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        Self(DMatrix::from_fn(
            d,
            d,
            |j, k| if j == k { diag[j] } else { 0.0 },
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.0[(j, k)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for j in 0..m.nrows() {
            m[(j, j)] -= c;
        }
        Self(m)
    }

    /// Eigenvalues in ascending order.
    ///
    /// Closed forms for dimensions up to three, cyclic Jacobi above.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = match self.dim() {
            1 => vec![self.0[(0, 0)]],
            2 => eig2(&self.0),
            3 => eig3(&self.0),
            _ => jacobi(&self.0),
        };
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("dim ≥ 1")
    }

    /// Inverse, erroring on a (numerically) singular matrix.
    pub fn inverse(&self) -> Result<Self> {
        let inv = super::invert(&self.0, &[])?;
        Ok(Self::symmetrize(&inv).0)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Invariant(
                "symmetric matrix must be square and non-empty".into(),
            ));
        }
        let m = DMatrix::from_fn(d, d, |j, k| rows[j][k]);
        if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
            return Err(Error::Invariant("matrix is not symmetric".into()));
        }
        Self::from_upper(&m)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.0.row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// `λ_min(M − cI)`. `M ≽ cI` iff the result is at least `−psd_tol`.
pub fn min_shifted_eigenvalue(m: &SymMatrix, c: f64) -> f64 {
    m.shifted(c).min_eigenvalue()
}

fn eig2(m: &DMatrix<f64>) -> Vec<f64> {
    let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let rad = (0.5 * (a - d)).hypot(b);
    // The smaller root via the product avoids cancellation when |mean| ≫ rad.
    let hi = if mean >= 0.0 { mean + rad } else { mean - rad };
    let det = a * d - b * b;
    let lo = if hi != 0.0 { det / hi } else { mean - rad };
    if mean >= 0.0 {
        vec![lo, hi]
    } else {
        vec![hi, lo]
    }
}

fn eig3(m: &DMatrix<f64>) -> Vec<f64> {
    let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    if p1 == 0.0 {
        return diag.to_vec();
    }
    let q = diag.iter().sum::<f64>() / 3.0;
    let p2 = diag.iter().map(|d| (d - q).powi(2)).sum::<f64>() + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = DMatrix::from_fn(3, 3, |j, k| (m[(j, k)] - if j == k { q } else { 0.0 }) / p);
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    // Polish on the characteristic cubic; the arccos step loses accuracy
    // when two roots nearly coincide.
    let c2 = -(diag[0] + diag[1] + diag[2]);
    let c1 = diag[0] * diag[1] + diag[0] * diag[2] + diag[1] * diag[2] - p1;
    let c0 = -m.determinant();
    let charpoly = |x: f64| ((x + c2) * x + c1) * x + c0;
    let dcharpoly = |x: f64| (3.0 * x + 2.0 * c2) * x + c1;
    [e1, e2, e3]
        .into_iter()
        .map(|mut x| {
            for _ in 0..3 {
                let fx = charpoly(x);
                let dfx = dcharpoly(x);
                if dfx == 0.0 || fx == 0.0 {
                    break;
                }
                let next = x - fx / dfx;
                if charpoly(next).abs() < fx.abs() && (next - x).abs() < 1e-6 * p.max(1.0) {
                    x = next;
                } else {
                    break;
                }
            }
            x
        })
        .collect()
}

fn jacobi(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let scale = a.norm().max(1.0);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&k| k != j).map(move |k| (j, k)))
            .map(|(j, k)| a[(j, k)].powi(2))
            .sum::<f64>()
            .sqrt();
        if off < 1e-12 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|j| a[(j, j)]).collect()
}
