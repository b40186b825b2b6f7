use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Link, LinkDomain};
use crate::error::{Error, Result};
use crate::numerics::{invert, solve_monotone, ToleranceConfig};
use crate::proper_loss::{verify_properness, DerivativeSource, ProperLoss};
use crate::simplex::ProjectedProb;
use crate::spec::LinkSpec;

/// `ψ̃(p̃) = p̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityLink {
    n: usize,
}

impl IdentityLink {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("a link needs n ≥ 2, got {n}")));
        }
        Ok(Self { n })
    }
}

impl Link for IdentityLink {
    fn n(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        "identity".into()
    }

    fn domain(&self) -> LinkDomain {
        LinkDomain::Simplex
    }

    fn inverse(&self, v: &DVector<f64>) -> Result<ProjectedProb> {
        if v.len() != self.n - 1 {
            return Err(Error::Dimension {
                expected: self.n - 1,
                got: v.len(),
            });
        }
        ProjectedProb::from_dvector(v)
            .map_err(|_| Error::domain("outside the simplex", v.as_slice()))
    }

    fn inverse_jacobian(&self, _v: &DVector<f64>, _cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.n - 1, self.n - 1))
    }

    fn inverse_jacobian_source(&self) -> DerivativeSource {
        DerivativeSource::Analytic
    }

    fn barycenter_image(&self) -> DVector<f64> {
        ProjectedProb::barycenter(self.n).to_dvector()
    }

    fn forward(&self, p: &ProjectedProb, _cfg: &ToleranceConfig) -> Result<DVector<f64>> {
        Ok(p.to_dvector())
    }

    fn jacobian(&self, _p: &ProjectedProb, _cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.n - 1, self.n - 1))
    }

    fn binary_second_derivative(&self, _p: f64) -> Option<f64> {
        (self.n == 2).then_some(0.0)
    }

    fn spec(&self) -> LinkSpec {
        LinkSpec::Identity { n: self.n }
    }
}

/// Trials used to screen a loss for properness before building its
/// canonical link.
pub const CANONICAL_PROPERNESS_TRIALS: usize = 256;

/// `ψ̃(p̃) = −∇L̃(p̃)`, so that `Dψ̃ = −HL̃` and the curvature ratio is `I`.
#[derive(Debug, Clone)]
pub struct CanonicalLink {
    loss: Arc<dyn ProperLoss>,
    cfg: ToleranceConfig,
}

impl CanonicalLink {
    /// Fails with [`Error::Misuse`] if the loss is not (sampled) proper.
    pub fn new(loss: Arc<dyn ProperLoss>, cfg: &ToleranceConfig) -> Result<Self> {
        let report = verify_properness(loss.as_ref(), CANONICAL_PROPERNESS_TRIALS, 0)?;
        if !report.passed {
            return Err(Error::Misuse(format!(
                "{} is not proper (violation {:e}); it has no canonical link",
                loss.name(),
                report.max_violation
            )));
        }
        Ok(Self { loss, cfg: *cfg })
    }

    pub fn loss(&self) -> &Arc<dyn ProperLoss> {
        &self.loss
    }

    fn neg_gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let p = ProjectedProb::from_dvector(x)
            .ok()
            .filter(|p| p.is_interior())?;
        let g = -self.loss.bayes_gradient(&p, &self.cfg).ok()?;
        g.iter().all(|v| v.is_finite()).then_some(g)
    }

    fn neg_hessian(&self, p: &ProjectedProb) -> Result<DMatrix<f64>> {
        Ok(-self.loss.bayes_hessian(p, &self.cfg)?.into_matrix())
    }
}

impl Link for CanonicalLink {
    fn n(&self) -> usize {
        self.loss.n()
    }

    fn name(&self) -> String {
        format!("canonical[{}]", self.loss.name())
    }

    fn domain(&self) -> LinkDomain {
        LinkDomain::CanonicalImage
    }

    fn inverse(&self, v: &DVector<f64>) -> Result<ProjectedProb> {
        if v.len() != self.n() - 1 {
            return Err(Error::Dimension {
                expected: self.n() - 1,
                got: v.len(),
            });
        }
        if let Some(p) = self.loss.canonical_inverse(v) {
            return p;
        }
        let map = |x: &DVector<f64>| self.neg_gradient(x);
        let jac = |x: &DVector<f64>| {
            ProjectedProb::from_dvector(x)
                .ok()
                .and_then(|p| self.neg_hessian(&p).ok())
        };
        let seed = ProjectedProb::barycenter(self.n()).to_dvector();
        let x = solve_monotone(&map, Some(&jac), v, &seed, &self.cfg)?;
        ProjectedProb::from_dvector(&x)
    }

    /// `[−HL̃(ψ̃⁻¹(v))]⁻¹`.
    fn inverse_jacobian(&self, v: &DVector<f64>, _cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        let p = self.inverse(v)?;
        invert(&self.neg_hessian(&p)?, p.tilde())
    }

    fn inverse_jacobian_source(&self) -> DerivativeSource {
        self.loss.provenance().hessian
    }

    fn barycenter_image(&self) -> DVector<f64> {
        self.neg_gradient(&ProjectedProb::barycenter(self.n()).to_dvector())
            .unwrap_or_else(|| DVector::zeros(self.n() - 1))
    }

    fn forward(&self, p: &ProjectedProb, cfg: &ToleranceConfig) -> Result<DVector<f64>> {
        Ok(-self.loss.bayes_gradient(p, cfg)?)
    }

    fn jacobian(&self, p: &ProjectedProb, _cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        self.neg_hessian(p)
    }

    /// `ψ̃′ = w`, so `ψ̃″ = w′`.
    fn binary_second_derivative(&self, p: f64) -> Option<f64> {
        self.loss.analytic_weight_derivative(p)
    }

    fn spec(&self) -> LinkSpec {
        LinkSpec::Canonical {
            loss: self.loss.spec(),
        }
    }
}

/// Binary link `ψ̃(p) = pᵏ` on `(0, 1)`, `k > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLink {
    exponent: f64,
}

impl PowerLink {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::Config(format!(
                "power link exponent must be positive, got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }
}

impl Link for PowerLink {
    fn n(&self) -> usize {
        2
    }

    fn name(&self) -> String {
        format!("power{}", self.exponent)
    }

    fn domain(&self) -> LinkDomain {
        LinkDomain::Interval {
            lower: 0.0,
            upper: 1.0,
        }
    }

    fn inverse(&self, v: &DVector<f64>) -> Result<ProjectedProb> {
        if v.len() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: v.len(),
            });
        }
        if !(v[0] > 0.0 && v[0] < 1.0) {
            return Err(Error::domain("power link needs 0 < v < 1", v.as_slice()));
        }
        ProjectedProb::new(vec![v[0].powf(1.0 / self.exponent)])
    }

    fn inverse_jacobian(&self, v: &DVector<f64>, _cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        if !(v[0] > 0.0 && v[0] < 1.0) {
            return Err(Error::domain("power link needs 0 < v < 1", v.as_slice()));
        }
        let k = self.exponent;
        Ok(DMatrix::from_element(1, 1, v[0].powf(1.0 / k - 1.0) / k))
    }

    fn inverse_jacobian_source(&self) -> DerivativeSource {
        DerivativeSource::Analytic
    }

    fn barycenter_image(&self) -> DVector<f64> {
        DVector::from_element(1, 0.5f64.powf(self.exponent))
    }

    fn forward(&self, p: &ProjectedProb, _cfg: &ToleranceConfig) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, p.full(0).powf(self.exponent)))
    }

    fn binary_second_derivative(&self, p: f64) -> Option<f64> {
        let k = self.exponent;
        Some(k * (k - 1.0) * p.powf(k - 2.0))
    }

    fn spec(&self) -> LinkSpec {
        LinkSpec::Power {
            exponent: self.exponent,
        }
    }
}
