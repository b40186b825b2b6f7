use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ProperLoss, SquareScaling};
use crate::designer::{weight_from_u, DesignSpec, UFunction};
use crate::error::{Error, Result};
use crate::numerics::{
    cell_tolerance, five_point_derivative, lobatto_nodes, quad_integrate, simpson_estimate,
    SymMatrix, ToleranceConfig,
};
use crate::simplex::ProjectedProb;
use crate::spec::LossSpec;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Registered weight functions, serialized as `{"kind": .., "params": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum WeightSpec {
    /// `w ≡ value`.
    Constant { value: f64 },
    /// `w(p) = scale / (p(1−p))`, the weight of `scale`-scaled log loss.
    Log { scale: f64 },
    /// `w(p) = (1−c)·exp(∫_{1/2}^p u) + c`.
    Designed { u: UFunction, modulus: f64 },
}

/// A binary weight `w(p) = −L̃″(p)` on `(0, 1)`.
#[derive(Clone)]
pub struct BinaryWeight {
    name: String,
    w: ScalarFn,
    dw: Option<ScalarFn>,
    spec: Option<WeightSpec>,
    normalized: bool,
}

impl fmt::Debug for BinaryWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryWeight")
            .field("name", &self.name)
            .field("analytic_derivative", &self.dw.is_some())
            .field("normalized", &self.normalized)
            .finish()
    }
}

/// `|w(1/2) − 1|` below which a weight counts as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

impl BinaryWeight {
    pub fn new<W>(name: impl Into<String>, w: W) -> Self
    where
        W: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(name.into(), Arc::new(w), None, None)
    }

    /// A weight with a closed-form derivative.
    pub fn with_derivative<W, D>(name: impl Into<String>, w: W, dw: D) -> Self
    where
        W: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(name.into(), Arc::new(w), Some(Arc::new(dw)), None)
    }

    fn build(name: String, w: ScalarFn, dw: Option<ScalarFn>, spec: Option<WeightSpec>) -> Self {
        let normalized = (w(0.5) - 1.0).abs() <= NORMALIZATION_TOL;
        Self {
            name,
            w,
            dw,
            spec,
            normalized,
        }
    }

    pub(crate) fn with_spec(mut self, spec: WeightSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn from_spec(spec: &WeightSpec, cfg: &ToleranceConfig) -> Result<Self> {
        let w = match *spec {
            WeightSpec::Constant { value } => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::Config(format!(
                        "constant weight must be positive, got {value}"
                    )));
                }
                Self::with_derivative(format!("const{value}"), move |_| value, |_| 0.0)
            }
            WeightSpec::Log { scale } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::Config(format!(
                        "log weight scale must be positive, got {scale}"
                    )));
                }
                Self::with_derivative(
                    format!("logw{scale}"),
                    move |p| scale / (p * (1.0 - p)),
                    move |p| scale * (2.0 * p - 1.0) / (p * (1.0 - p)).powi(2),
                )
            }
            WeightSpec::Designed { ref u, modulus } => {
                let design = DesignSpec::new(u.clone(), modulus, cfg.interior_margin)?;
                return weight_from_u(&design, cfg);
            }
        };
        Ok(w.with_spec(spec.clone()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, p: f64) -> f64 {
        (self.w)(p)
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.dw.is_some()
    }

    pub fn analytic_derivative(&self, p: f64) -> Option<f64> {
        self.dw.as_ref().map(|d| d(p))
    }

    /// `w′(p)`, analytic when registered, otherwise a five-point difference
    /// with its step shrunk to stay inside `(0, 1)`.
    pub fn derivative(&self, p: f64, cfg: &ToleranceConfig) -> Result<f64> {
        if let Some(d) = &self.dw {
            return Ok(d(p));
        }
        let h = cfg.fd_hessian_step.min(p / 4.0).min((1.0 - p) / 4.0);
        five_point_derivative(|t| (self.w)(t), p, h)
    }

    /// `w(1/2) = 1` within [`NORMALIZATION_TOL`].
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn spec(&self) -> Option<&WeightSpec> {
        self.spec.as_ref()
    }
}

/// `w(p) = −HL̃(p)` of a binary loss.
pub fn binary_weight(loss: Arc<dyn ProperLoss>, cfg: &ToleranceConfig) -> Result<BinaryWeight> {
    if loss.n() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: loss.n(),
        });
    }
    let cfg = *cfg;
    let name = format!("w[{}]", loss.name());
    let l = loss.clone();
    let w = move |p: f64| {
        ProjectedProb::new(vec![p])
            .and_then(|pp| l.bayes_hessian(&pp, &cfg))
            .map(|h| -h.get(0, 0))
            .unwrap_or(f64::NAN)
    };
    let has_dw = loss.analytic_weight_derivative(0.5).is_some();
    let mut weight = if has_dw {
        let l = loss.clone();
        BinaryWeight::with_derivative(name, w, move |p| {
            l.analytic_weight_derivative(p).unwrap_or(f64::NAN)
        })
    } else {
        BinaryWeight::new(name, w)
    };
    weight.spec = match loss.spec() {
        LossSpec::FromWeight { weight, .. } => Some(weight),
        LossSpec::Log { scale, .. } => Some(WeightSpec::Log {
            scale: scale.unwrap_or(1.0),
        }),
        LossSpec::Square { scaling, .. } => Some(WeightSpec::Constant {
            value: match scaling {
                SquareScaling::PaperBrier => 4.0,
                SquareScaling::UnitWeight => 1.0,
            },
        }),
        _ => None,
    };
    Ok(weight)
}

const TABLE_NODES: usize = 512;

/// Relative accuracy of the loss table cells; looser than the weight's own
/// accuracy so tabulated weights do not stall the quadrature.
const LOSS_CELL_RELATIVE_TOL: f64 = 1e-10;

/// The binary proper loss with a given weight:
/// `λ₁(p) = ∫ₚ^{1−ε}(1−t)w(t)dt`, `λ₂(p) = ∫_ε^p t·w(t)dt`.
///
/// Cumulative integrals are tabulated at Chebyshev–Lobatto nodes of
/// `[ε, 1−ε]`; an evaluation adds the quadrature over the partial cell
/// containing `p`. Probes outside `[ε, 1−ε]` are clamped.
#[derive(Debug, Clone)]
pub struct WeightLoss {
    weight: BinaryWeight,
    eps: f64,
    cfg: ToleranceConfig,
    nodes: Vec<f64>,
    /// `∫_ε^{xⱼ} t·w`.
    lower: Vec<f64>,
    /// `∫_{xⱼ}^{1−ε} (1−t)·w`.
    upper: Vec<f64>,
}

/// Builds [`WeightLoss`] with truncation `ε = cfg.interior_margin`.
pub fn from_binary_weight(w: BinaryWeight, cfg: &ToleranceConfig) -> Result<WeightLoss> {
    WeightLoss::new(w, cfg.interior_margin, cfg)
}

impl WeightLoss {
    pub fn new(weight: BinaryWeight, eps: f64, cfg: &ToleranceConfig) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::Config(format!(
                "truncation {eps} must lie in (0, 1/2)"
            )));
        }
        let (a, b) = (eps, 1.0 - eps);
        let m = TABLE_NODES - 1;
        let nodes = lobatto_nodes(a, b, TABLE_NODES);
        for &x in &nodes {
            let v = weight.eval(x);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("weight {v} is not positive"), &[x]));
            }
        }
        let cells: Vec<(f64, f64)> = (0..m)
            .into_par_iter()
            .map(|j| {
                let (x0, x1) = (nodes[j], nodes[j + 1]);
                let lo_g = |t: f64| t * weight.eval(t);
                let hi_g = |t: f64| (1.0 - t) * weight.eval(t);
                let local = cell_tolerance(
                    cfg,
                    x1 - x0,
                    b - a,
                    simpson_estimate(lo_g, x0, x1),
                    LOSS_CELL_RELATIVE_TOL,
                );
                let lo = quad_integrate(lo_g, x0, x1, &local)?;
                let local = cell_tolerance(
                    cfg,
                    x1 - x0,
                    b - a,
                    simpson_estimate(hi_g, x0, x1),
                    LOSS_CELL_RELATIVE_TOL,
                );
                let hi = quad_integrate(hi_g, x0, x1, &local)?;
                Ok((lo, hi))
            })
            .collect::<Result<_>>()?;
        let mut lower = vec![0.0; m + 1];
        for j in 0..m {
            lower[j + 1] = lower[j] + cells[j].0;
        }
        let mut upper = vec![0.0; m + 1];
        for j in (0..m).rev() {
            upper[j] = upper[j + 1] + cells[j].1;
        }
        Ok(Self {
            weight,
            eps,
            cfg: *cfg,
            nodes,
            lower,
            upper,
        })
    }

    pub fn weight(&self) -> &BinaryWeight {
        &self.weight
    }

    fn cell(&self, p: f64) -> usize {
        let j = self.nodes.partition_point(|&x| x <= p);
        j.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// `(λ₁(p), λ₂(p))`.
    pub fn lambdas(&self, p: f64) -> Result<(f64, f64)> {
        if !p.is_finite() {
            return Err(Error::domain("non-finite probability", &[p]));
        }
        let p = p.clamp(self.eps, 1.0 - self.eps);
        let j = self.cell(p);
        let (x0, x1) = (self.nodes[j], self.nodes[j + 1]);
        let span = 1.0 - 2.0 * self.eps;
        let w = &self.weight;
        let cfg = cell_tolerance(
            &self.cfg,
            x1 - x0,
            span,
            self.lower[j + 1] - self.lower[j],
            LOSS_CELL_RELATIVE_TOL,
        );
        let l2 = self.lower[j] + quad_integrate(|t| t * w.eval(t), x0, p, &cfg)?;
        let cfg = cell_tolerance(
            &self.cfg,
            x1 - x0,
            span,
            self.upper[j] - self.upper[j + 1],
            LOSS_CELL_RELATIVE_TOL,
        );
        let l1 = quad_integrate(|t| (1.0 - t) * w.eval(t), p, x1, &cfg)? + self.upper[j + 1];
        Ok((l1, l2))
    }
}

impl ProperLoss for WeightLoss {
    fn n(&self) -> usize {
        2
    }

    fn name(&self) -> String {
        format!("from_weight[{}]", self.weight.name())
    }

    fn partial(&self, i: usize, p: &ProjectedProb) -> f64 {
        match self.lambdas(p.full(0)) {
            Ok((l1, l2)) => {
                if i == 0 {
                    l1
                } else {
                    l2
                }
            }
            Err(_) => f64::NAN,
        }
    }

    fn bayes_risk(&self, p: &ProjectedProb) -> f64 {
        let q = p.full(0);
        match self.lambdas(q) {
            Ok((l1, l2)) => q * l1 + (1.0 - q) * l2,
            Err(_) => f64::NAN,
        }
    }

    fn analytic_bayes_gradient(&self, p: &ProjectedProb) -> Option<DVector<f64>> {
        // Properness: L̃′ = λ₁ − λ₂.
        let (l1, l2) = self.lambdas(p.full(0)).ok()?;
        Some(DVector::from_element(1, l1 - l2))
    }

    fn analytic_bayes_hessian(&self, p: &ProjectedProb) -> Option<SymMatrix> {
        let q = p.full(0).clamp(self.eps, 1.0 - self.eps);
        Some(SymMatrix::from_diagonal(&[-self.weight.eval(q)]))
    }

    fn analytic_weight_derivative(&self, p: f64) -> Option<f64> {
        self.weight
            .analytic_derivative(p.clamp(self.eps, 1.0 - self.eps))
    }

    fn epsilon_int(&self) -> Option<f64> {
        Some(self.eps)
    }

    fn spec(&self) -> LossSpec {
        match self.weight.spec() {
            Some(w) => LossSpec::FromWeight {
                n: 2,
                weight: w.clone(),
                epsilon: Some(self.eps),
            },
            None => LossSpec::Custom {
                n: 2,
                name: self.name(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::central_hessian;
    use crate::proper_loss::{verify_properness, LogLoss, SquareLoss, SquareScaling};
    use approx::assert_abs_diff_eq;

    fn pp(p: f64) -> ProjectedProb {
        ProjectedProb::new(vec![p]).unwrap()
    }

    #[test]
    fn weight_examples() {
        let cfg = ToleranceConfig::default();
        let log: Arc<dyn ProperLoss> = Arc::new(LogLoss::new(2).unwrap());
        let w = binary_weight(log, &cfg).unwrap();
        assert_abs_diff_eq!(w.eval(0.5), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.eval(0.2), 1.0 / 0.16, epsilon = 1e-12);
        assert!(!w.is_normalized());

        let quarter: Arc<dyn ProperLoss> = Arc::new(LogLoss::scaled(2, 0.25).unwrap());
        let w = binary_weight(quarter, &cfg).unwrap();
        assert_abs_diff_eq!(w.eval(0.5), 1.0, epsilon = 1e-12);
        assert!(w.is_normalized());

        let sq: Arc<dyn ProperLoss> =
            Arc::new(SquareLoss::new(2, SquareScaling::UnitWeight).unwrap());
        let w = binary_weight(sq, &cfg).unwrap();
        assert_eq!(w.eval(0.3), 1.0);

        let l3: Arc<dyn ProperLoss> = Arc::new(LogLoss::new(3).unwrap());
        assert!(matches!(
            binary_weight(l3, &cfg),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn unit_weight_recovers_square_loss() {
        let cfg = ToleranceConfig::default();
        let w = BinaryWeight::from_spec(&WeightSpec::Constant { value: 1.0 }, &cfg).unwrap();
        let loss = from_binary_weight(w, &cfg).unwrap();
        let eps = cfg.interior_margin;
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let (l1, l2) = loss.lambdas(p).unwrap();
            assert_abs_diff_eq!(l1, ((1.0 - p).powi(2) - eps * eps) / 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(l2, (p * p - eps * eps) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_weight_recovers_log_loss_up_to_constants() {
        let cfg = ToleranceConfig::default();
        let w = BinaryWeight::from_spec(&WeightSpec::Log { scale: 1.0 }, &cfg).unwrap();
        let loss = from_binary_weight(w, &cfg).unwrap();
        let eps = cfg.interior_margin;
        // ∫ₚ^{1−ε} 1/t = ln(1−ε) − ln p, ∫_ε^p 1/(1−t) = ln(1−ε) − ln(1−p)
        for p in [0.01, 0.2, 0.5, 0.9, 0.999] {
            let (l1, l2) = loss.lambdas(p).unwrap();
            assert_abs_diff_eq!(l1, (1.0 - eps).ln() - p.ln(), epsilon = 1e-9);
            assert_abs_diff_eq!(l2, (1.0 - eps).ln() - (1.0 - p).ln(), epsilon = 1e-9);
        }
        assert_eq!(loss.provenance().epsilon_int, Some(eps));
    }

    #[test]
    fn quarter_log_weight_is_linear_in_scale() {
        let cfg = ToleranceConfig::default();
        let full = from_binary_weight(
            BinaryWeight::from_spec(&WeightSpec::Log { scale: 1.0 }, &cfg).unwrap(),
            &cfg,
        )
        .unwrap();
        let quarter = from_binary_weight(
            BinaryWeight::from_spec(&WeightSpec::Log { scale: 0.25 }, &cfg).unwrap(),
            &cfg,
        )
        .unwrap();
        for p in [0.03, 0.4, 0.8] {
            let (a1, a2) = full.lambdas(p).unwrap();
            let (b1, b2) = quarter.lambdas(p).unwrap();
            assert_abs_diff_eq!(b1, a1 / 4.0, epsilon = 1e-10);
            assert_abs_diff_eq!(b2, a2 / 4.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn finite_difference_round_trip_of_weight() {
        let cfg = ToleranceConfig::default();
        for spec in [
            WeightSpec::Constant { value: 1.0 },
            WeightSpec::Log { scale: 0.25 },
        ] {
            let w = BinaryWeight::from_spec(&spec, &cfg).unwrap();
            let loss = from_binary_weight(w.clone(), &cfg).unwrap();
            for k in 1..50 {
                let p = 0.01 + 0.98 * k as f64 / 50.0;
                let h = central_hessian(
                    |x| loss.bayes_risk_at(x),
                    &DVector::from_element(1, p),
                    &cfg,
                )
                .unwrap();
                let rel = (-h.get(0, 0) - w.eval(p)).abs() / w.eval(p);
                assert!(rel <= 1e-4, "{spec:?} at {p}: {rel}");
            }
        }
    }

    #[test]
    fn weight_losses_are_proper() {
        let cfg = ToleranceConfig::default();
        let w = BinaryWeight::from_spec(&WeightSpec::Log { scale: 0.25 }, &cfg).unwrap();
        let loss = from_binary_weight(w, &cfg).unwrap();
        assert!(verify_properness(&loss, 1000, 3).unwrap().passed);
    }

    #[test]
    fn non_positive_weight_is_rejected() {
        let cfg = ToleranceConfig::default();
        let w = BinaryWeight::new("bad", |p| p - 0.5);
        assert!(matches!(
            from_binary_weight(w, &cfg),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn analytic_hessian_is_the_weight() {
        let cfg = ToleranceConfig::default();
        let w = BinaryWeight::from_spec(&WeightSpec::Log { scale: 1.0 }, &cfg).unwrap();
        let loss = from_binary_weight(w, &cfg).unwrap();
        let h = loss.bayes_hessian(&pp(0.25), &cfg).unwrap();
        assert_abs_diff_eq!(h.get(0, 0), -1.0 / 0.1875, epsilon = 1e-12);
    }
}
