//! Proper losses over the simplex.
//!
//! A [`ProperLoss`] exposes its partial losses `λᵢ` at projected points, its
//! projected Bayes risk `L̃` and the first two derivatives of `L̃`. Derivatives
//! are analytic where a closed form is known and central differences
//! otherwise; [`LossProvenance`] records which.

mod builtin;
mod weight;

pub use builtin::{LinearScore, LogLoss, SquareLoss, SquareScaling};
pub use weight::{binary_weight, from_binary_weight, BinaryWeight, WeightLoss, WeightSpec};

use std::fmt::Debug;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{central_gradient, central_hessian, SymMatrix, ToleranceConfig};
use crate::simplex::{sample_interior, ProbVector, ProjectedProb};
use crate::spec::LossSpec;

/// Where a derivative comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// Construction metadata carried by every loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossProvenance {
    pub name: String,
    pub gradient: DerivativeSource,
    pub hessian: DerivativeSource,
    /// Boundary truncation of the integral representation, if any.
    pub epsilon_int: Option<f64>,
}

pub trait ProperLoss: Debug + Send + Sync {
    fn n(&self) -> usize;

    fn name(&self) -> String;

    /// `λᵢ` at the lifted point, `i` 0-based.
    fn partial(&self, i: usize, p: &ProjectedProb) -> f64;

    fn partials(&self, p: &ProjectedProb) -> Vec<f64> {
        (0..self.n()).map(|i| self.partial(i, p)).collect()
    }

    /// `L̃(p̃) = Σᵢ pᵢ λᵢ(p)`, with `0·λᵢ = 0`.
    fn bayes_risk(&self, p: &ProjectedProb) -> f64 {
        (0..self.n())
            .map(|i| {
                let pi = p.full(i);
                if pi == 0.0 {
                    0.0
                } else {
                    pi * self.partial(i, p)
                }
            })
            .sum()
    }

    fn analytic_bayes_gradient(&self, _p: &ProjectedProb) -> Option<DVector<f64>> {
        None
    }

    fn analytic_bayes_hessian(&self, _p: &ProjectedProb) -> Option<SymMatrix> {
        None
    }

    /// `w′(p) = −L̃‴(p)` for binary losses with a closed form.
    fn analytic_weight_derivative(&self, _p: f64) -> Option<f64> {
        None
    }

    /// Closed-form inverse of the canonical link `v ↦ p̃` with `−∇L̃(p̃) = v`.
    fn canonical_inverse(&self, _v: &DVector<f64>) -> Option<Result<ProjectedProb>> {
        None
    }

    fn epsilon_int(&self) -> Option<f64> {
        None
    }

    fn spec(&self) -> LossSpec;

    /// `L̃` at raw projected coordinates; NaN off the simplex.
    fn bayes_risk_at(&self, x: &DVector<f64>) -> f64 {
        ProjectedProb::from_dvector(x)
            .map(|p| self.bayes_risk(&p))
            .unwrap_or(f64::NAN)
    }

    fn bayes_gradient(&self, p: &ProjectedProb, cfg: &ToleranceConfig) -> Result<DVector<f64>> {
        match self.analytic_bayes_gradient(p) {
            Some(g) => Ok(g),
            None => central_gradient(|x| self.bayes_risk_at(x), &p.to_dvector(), cfg),
        }
    }

    /// `HL̃(p̃)`, analytic when available.
    fn bayes_hessian(&self, p: &ProjectedProb, cfg: &ToleranceConfig) -> Result<SymMatrix> {
        match self.analytic_bayes_hessian(p) {
            Some(h) => Ok(h),
            None => central_hessian(|x| self.bayes_risk_at(x), &p.to_dvector(), cfg),
        }
    }

    fn provenance(&self) -> LossProvenance {
        let probe = ProjectedProb::barycenter(self.n());
        let source = |analytic: bool| {
            if analytic {
                DerivativeSource::Analytic
            } else {
                DerivativeSource::FiniteDifference
            }
        };
        LossProvenance {
            name: self.name(),
            gradient: source(self.analytic_bayes_gradient(&probe).is_some()),
            hessian: source(self.analytic_bayes_hessian(&probe).is_some()),
            epsilon_int: self.epsilon_int(),
        }
    }
}

/// `L(p, q) = Σᵢ pᵢ λᵢ(q)`. A non-finite partial with positive weight yields
/// `+∞` rather than an error.
pub fn conditional_risk(loss: &dyn ProperLoss, p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.n() != loss.n() || q.n() != loss.n() {
        return Err(Error::Dimension {
            expected: loss.n(),
            got: if p.n() != loss.n() { p.n() } else { q.n() },
        });
    }
    let qt = q.project();
    let mut total = 0.0;
    for i in 0..p.n() {
        let pi = p.get(i);
        if pi == 0.0 {
            continue;
        }
        let li = loss.partial(i, &qt);
        if !li.is_finite() {
            return Ok(f64::INFINITY);
        }
        total += pi * li;
    }
    Ok(total)
}

/// Outcome of [`verify_properness`].
#[derive(Debug, Clone, Serialize)]
pub struct PropernessReport {
    pub loss: String,
    pub trials: usize,
    pub seed: u64,
    /// `max L(p,p) − L(p,q)` over sampled pairs.
    pub max_violation: f64,
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    pub passed: bool,
}

/// Largest admissible `L(p,p) − L(p,q)`.
pub const PROPERNESS_TOL: f64 = 1e-9;

/// Samples seeded interior pairs `(p, q)` and reports the worst violation of
/// `L(p,p) ≤ L(p,q)`.
pub fn verify_properness(
    loss: &dyn ProperLoss,
    trials: usize,
    seed: u64,
) -> Result<PropernessReport> {
    let n = loss.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..trials {
        let p = sample_interior(n, 1e-3, &mut rng)?.lift();
        let q = sample_interior(n, 1e-3, &mut rng)?.lift();
        let gap = conditional_risk(loss, &p, &p)? - conditional_risk(loss, &p, &q)?;
        let gap = if gap.is_nan() { f64::INFINITY } else { gap };
        if gap > worst {
            worst = gap;
            witness = Some((p.as_slice().to_vec(), q.as_slice().to_vec()));
        }
    }
    Ok(PropernessReport {
        loss: loss.name(),
        trials,
        seed,
        max_violation: worst,
        witness,
        passed: worst <= PROPERNESS_TOL,
    })
}
