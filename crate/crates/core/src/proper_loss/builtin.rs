use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ProperLoss;
use crate::error::{Error, Result};
use crate::numerics::SymMatrix;
use crate::simplex::ProjectedProb;
use crate::spec::LossSpec;

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!(
            "a loss needs n ≥ 2 classes, got {n}"
        )));
    }
    Ok(())
}

/// `λᵢ(p) = −s·ln pᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLoss {
    n: usize,
    scale: f64,
}

impl LogLoss {
    pub fn new(n: usize) -> Result<Self> {
        Self::scaled(n, 1.0)
    }

    pub fn scaled(n: usize, scale: f64) -> Result<Self> {
        check_n(n)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!(
                "log-loss scale must be positive, got {scale}"
            )));
        }
        Ok(Self { n, scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl ProperLoss for LogLoss {
    fn n(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        if self.scale == 1.0 {
            format!("log{}", self.n)
        } else {
            format!("log{}x{}", self.n, self.scale)
        }
    }

    fn partial(&self, i: usize, p: &ProjectedProb) -> f64 {
        -self.scale * p.full(i).ln()
    }

    fn analytic_bayes_gradient(&self, p: &ProjectedProb) -> Option<DVector<f64>> {
        let pn = p.last();
        Some(DVector::from_iterator(
            p.dim(),
            p.tilde().iter().map(|&pk| -self.scale * (pk / pn).ln()),
        ))
    }

    fn analytic_bayes_hessian(&self, p: &ProjectedProb) -> Option<SymMatrix> {
        let d = p.dim();
        let inv_n = 1.0 / p.last();
        let t = p.tilde();
        let m = DMatrix::from_fn(d, d, |j, k| {
            let diag = if j == k { 1.0 / t[j] } else { 0.0 };
            -self.scale * (diag + inv_n)
        });
        SymMatrix::from_upper(&m).ok()
    }

    fn analytic_weight_derivative(&self, p: f64) -> Option<f64> {
        (self.n == 2).then(|| self.scale * (2.0 * p - 1.0) / (p * (1.0 - p)).powi(2))
    }

    fn canonical_inverse(&self, v: &DVector<f64>) -> Option<Result<ProjectedProb>> {
        // Softmax of (v/s, 0).
        let z: Vec<f64> = v.iter().map(|x| x / self.scale).collect();
        let top = z.iter().copied().fold(0.0, f64::max);
        let e: Vec<f64> = z.iter().map(|x| (x - top).exp()).collect();
        let total = e.iter().sum::<f64>() + (-top).exp();
        Some(ProjectedProb::new(e.iter().map(|x| x / total).collect()))
    }

    fn spec(&self) -> LossSpec {
        LossSpec::Log {
            n: self.n,
            scale: (self.scale != 1.0).then_some(self.scale),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareScaling {
    /// `λᵢ(q) = Σⱼ(⟦j = i⟧ − qⱼ)²`.
    #[default]
    PaperBrier,
    /// Binary only: `λ₁ = (1−p)²/2`, `λ₂ = p²/2`, so `w ≡ 1`.
    UnitWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareLoss {
    n: usize,
    scaling: SquareScaling,
}

impl SquareLoss {
    pub fn new(n: usize, scaling: SquareScaling) -> Result<Self> {
        check_n(n)?;
        if scaling == SquareScaling::UnitWeight && n != 2 {
            return Err(Error::Unsupported(format!(
                "unit_weight square loss is defined for n = 2 only, got n = {n}"
            )));
        }
        Ok(Self { n, scaling })
    }

    pub fn scaling(&self) -> SquareScaling {
        self.scaling
    }
}

impl ProperLoss for SquareLoss {
    fn n(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        match self.scaling {
            SquareScaling::PaperBrier => format!("brier{}", self.n),
            SquareScaling::UnitWeight => "square_unit".into(),
        }
    }

    fn partial(&self, i: usize, p: &ProjectedProb) -> f64 {
        match self.scaling {
            SquareScaling::PaperBrier => (0..self.n)
                .map(|j| {
                    let target = if j == i { 1.0 } else { 0.0 };
                    (target - p.full(j)).powi(2)
                })
                .sum(),
            SquareScaling::UnitWeight => {
                let q = p.full(0);
                if i == 0 {
                    0.5 * (1.0 - q).powi(2)
                } else {
                    0.5 * q * q
                }
            }
        }
    }

    fn analytic_bayes_gradient(&self, p: &ProjectedProb) -> Option<DVector<f64>> {
        Some(match self.scaling {
            SquareScaling::PaperBrier => {
                DVector::from_iterator(p.dim(), p.tilde().iter().map(|&pk| 2.0 * (p.last() - pk)))
            }
            SquareScaling::UnitWeight => DVector::from_element(1, 0.5 - p.full(0)),
        })
    }

    fn analytic_bayes_hessian(&self, p: &ProjectedProb) -> Option<SymMatrix> {
        let d = p.dim();
        Some(match self.scaling {
            SquareScaling::PaperBrier => {
                SymMatrix::from_upper(&DMatrix::from_fn(
                    d,
                    d,
                    |j, k| {
                        if j == k {
                            -4.0
                        } else {
                            -2.0
                        }
                    },
                ))
                .ok()?
            }
            SquareScaling::UnitWeight => SymMatrix::from_diagonal(&[-1.0]),
        })
    }

    fn analytic_weight_derivative(&self, _p: f64) -> Option<f64> {
        (self.n == 2).then_some(0.0)
    }

    fn canonical_inverse(&self, v: &DVector<f64>) -> Option<Result<ProjectedProb>> {
        Some(match self.scaling {
            SquareScaling::PaperBrier => {
                // v = 2(p̃ − pₙ𝟙)
                let pn = (1.0 - 0.5 * v.sum()) / self.n as f64;
                let tilde: Vec<f64> = v.iter().map(|vk| pn + 0.5 * vk).collect();
                if pn < 0.0 || tilde.iter().any(|&x| x < 0.0) {
                    Err(Error::domain(
                        "outside the canonical square-loss image",
                        v.as_slice(),
                    ))
                } else {
                    ProjectedProb::new(tilde)
                }
            }
            SquareScaling::UnitWeight => {
                let p = v[0] + 0.5;
                if (0.0..=1.0).contains(&p) {
                    ProjectedProb::new(vec![p])
                } else {
                    Err(Error::domain(
                        "outside the canonical square-loss image",
                        v.as_slice(),
                    ))
                }
            }
        })
    }

    fn spec(&self) -> LossSpec {
        LossSpec::Square {
            n: self.n,
            scaling: self.scaling,
        }
    }
}

/// The improper score `λᵢ(q) = qᵢ`, kept as a negative control.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScore {
    n: usize,
}

impl LinearScore {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(Self { n })
    }
}

impl ProperLoss for LinearScore {
    fn n(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        format!("linear_score{}", self.n)
    }

    fn partial(&self, i: usize, p: &ProjectedProb) -> f64 {
        p.full(i)
    }

    fn spec(&self) -> LossSpec {
        LossSpec::LinearScore { n: self.n }
    }
}
