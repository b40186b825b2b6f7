//! Designing binary proper losses with a prescribed strong-convexity
//! modulus.
//!
//! A slope function `u` inside the band `−1/p ≤ u(p) ≤ 1/(1−p)` induces the
//! weight `w(p) = (1−c)·exp(∫_{1/2}^p u) + c`, whose loss under the identity
//! link is `c`-strongly convex.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::convexity::{binary_iff_check, ConvexityReport, Grid, Verdict};
use crate::error::{Error, Result};
use crate::numerics::{quad_integrate, Antiderivative, ToleranceConfig};
use crate::proper_loss::{
    from_binary_weight, verify_properness, BinaryWeight, PropernessReport, WeightLoss, WeightSpec,
};

/// Registered slope functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum UFunction {
    /// `u ≡ 0`.
    Zero,
    /// `u ≡ value`.
    Constant { value: f64 },
    /// `u(p) = a/(1−p) − b/p`.
    Rational { a: f64, b: f64 },
    /// `u(p) = (2p−1)/(p(1−p))`, the log-derivative of `1/(4p(1−p))`.
    Log,
    /// `u(p) = 1/(1−p)`.
    UpperEnvelope,
    /// `u(p) = −1/p`.
    LowerEnvelope,
}

impl UFunction {
    pub fn eval(&self, p: f64) -> f64 {
        match *self {
            UFunction::Zero => 0.0,
            UFunction::Constant { value } => value,
            UFunction::Rational { a, b } => a / (1.0 - p) - b / p,
            UFunction::Log => (2.0 * p - 1.0) / (p * (1.0 - p)),
            UFunction::UpperEnvelope => 1.0 / (1.0 - p),
            UFunction::LowerEnvelope => -1.0 / p,
        }
    }

    pub fn id(&self) -> String {
        match *self {
            UFunction::Zero => "zero".into(),
            UFunction::Constant { value } => format!("constant({value})"),
            UFunction::Rational { a, b } => format!("rational({a},{b})"),
            UFunction::Log => "log".into(),
            UFunction::UpperEnvelope => "upper_envelope".into(),
            UFunction::LowerEnvelope => "lower_envelope".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub u: UFunction,
    /// Requested modulus `c ∈ [0, 1]`.
    pub modulus: f64,
    /// Boundary truncation of the reconstructed loss.
    pub epsilon: f64,
    pub name: String,
}

impl DesignSpec {
    pub fn new(u: UFunction, modulus: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&modulus) {
            return Err(Error::Config(format!("modulus {modulus} outside [0, 1]")));
        }
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::Config(format!(
                "truncation {epsilon} outside (0, 1/2)"
            )));
        }
        let name = format!("designed[{},c={modulus}]", u.id());
        Ok(Self {
            u,
            modulus,
            epsilon,
            name,
        })
    }
}

/// Outcome of [`validate_u`].
#[derive(Debug, Clone, Serialize)]
pub struct UValidation {
    pub passed: bool,
    /// `min over the grid of min(u + 1/p, 1/(1−p) − u)`.
    pub worst_margin: f64,
    pub witness: f64,
}

/// Checks `−1/p ≤ u(p) ≤ 1/(1−p)` at every grid point.
pub fn validate_u(spec: &DesignSpec, grid: &[f64]) -> UValidation {
    let mut worst = f64::INFINITY;
    let mut witness = f64::NAN;
    let mut passed = true;
    for &p in grid {
        let u = spec.u.eval(p);
        let (lo, hi) = (-1.0 / p, 1.0 / (1.0 - p));
        let margin = (u - lo).min(hi - u);
        let slack = 4.0 * f64::EPSILON * (hi - lo);
        if !(margin >= -slack) {
            passed = false;
        }
        let margin = if margin.is_nan() {
            f64::NEG_INFINITY
        } else {
            margin
        };
        if margin < worst {
            worst = margin;
            witness = p;
        }
    }
    UValidation {
        passed,
        worst_margin: worst,
        witness,
    }
}

/// Cells of the tabulated slope integral.
const SLOPE_NODES: usize = 512;

/// `w(p) = (1−c)·exp(∫_{1/2}^p u) + c`, with `w(1/2) = 1` exactly and the
/// closed-form derivative `w′ = (w − c)·u`.
///
/// `∫ u` is tabulated once on `[ε, 1−ε]`; arguments outside that interval
/// are integrated directly.
pub fn weight_from_u(spec: &DesignSpec, cfg: &ToleranceConfig) -> Result<BinaryWeight> {
    let c = spec.modulus;
    let cfg = *cfg;
    let u = spec.u.clone();
    let table = Arc::new(Antiderivative::new(
        Arc::new(move |t| u.eval(t)),
        spec.epsilon,
        1.0 - spec.epsilon,
        SLOPE_NODES,
        &cfg,
    )?);
    let anchor = table.eval(0.5)?;
    let u = spec.u.clone();
    let exponent = move |p: f64| -> Result<f64> {
        if table.contains(p) {
            Ok(table.eval(p)? - anchor)
        } else {
            let u = u.clone();
            quad_integrate(move |t| u.eval(t), 0.5, p, &cfg)
        }
    };
    let w = move |p: f64| {
        if p == 0.5 {
            return 1.0;
        }
        match exponent(p) {
            Ok(e) => (1.0 - c) * e.exp() + c,
            Err(_) => f64::NAN,
        }
    };
    let u = spec.u.clone();
    let w_for_dw = w.clone();
    let dw = move |p: f64| (w_for_dw(p) - c) * u.eval(p);
    Ok(
        BinaryWeight::with_derivative(spec.name.clone(), w, dw).with_spec(WeightSpec::Designed {
            u: spec.u.clone(),
            modulus: c,
        }),
    )
}

/// A designed loss with its certificates.
#[derive(Debug, Clone)]
pub struct Design {
    pub spec: DesignSpec,
    pub weight: BinaryWeight,
    pub loss: WeightLoss,
    pub validation: UValidation,
    pub report: ConvexityReport,
    pub properness: PropernessReport,
}

/// Validates `u`, builds the weight and loss, and certifies the requested
/// modulus with the binary iff condition on `grid`.
pub fn design_loss(spec: &DesignSpec, grid: &Grid, cfg: &ToleranceConfig) -> Result<Design> {
    let scalars = grid.binary_scalars()?;
    let validation = validate_u(spec, &scalars);
    if !validation.passed {
        return Err(Error::Certification {
            message: format!("slope {} leaves the admissible band", spec.u.id()),
            point: vec![validation.witness],
            value: validation.worst_margin,
        });
    }
    let weight = weight_from_u(spec, cfg)?;
    let loss = WeightLoss::new(weight.clone(), spec.epsilon, cfg)?;
    let report = binary_iff_check(&weight, spec.modulus, grid, cfg)?;
    if report.verdict != Verdict::CertifiedOnGrid {
        let (point, value) = report
            .witness
            .as_ref()
            .map(|w| (w.point.clone(), w.value))
            .unwrap_or_default();
        return Err(Error::Certification {
            message: format!("{} not certified at modulus {}", spec.name, spec.modulus),
            point,
            value,
        });
    }
    let properness = verify_properness(&loss, 1000, 0)?;
    if !properness.passed {
        return Err(Error::Certification {
            message: format!("{} failed the properness check", spec.name),
            point: properness.witness.clone().map(|w| w.1).unwrap_or_default(),
            value: properness.max_violation,
        });
    }
    Ok(Design {
        spec: spec.clone(),
        weight,
        loss,
        validation,
        report,
        properness,
    })
}

/// Convenience wrapper using [`from_binary_weight`]'s default truncation.
pub fn loss_from_u(u: UFunction, modulus: f64, cfg: &ToleranceConfig) -> Result<WeightLoss> {
    let spec = DesignSpec::new(u, modulus, cfg.interior_margin)?;
    from_binary_weight(weight_from_u(&spec, cfg)?, cfg)
}
