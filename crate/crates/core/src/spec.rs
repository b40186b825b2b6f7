//! Serializable descriptions of losses, links and composites.
//!
//! ```json
//! {"loss": {"kind": "log", "n": 3},
//!  "link": {"kind": "mixture", "alpha": [0.5, 0.5],
//!           "basis": [{"kind": "phi", "n": 3, "phi": "exp"},
//!                     {"kind": "phi", "n": 3, "phi": "squared"}]}}
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::composite::CompositeLoss;
use crate::error::{Error, Result};
use crate::links::{
    combine, CanonicalLink, IdentityLink, Link, LinkFamily, PhiKind, PhiLink, PowerLink,
    FAMILY_MONOTONICITY_TRIALS,
};
use crate::numerics::ToleranceConfig;
use crate::proper_loss::{
    BinaryWeight, LinearScore, LogLoss, ProperLoss, SquareLoss, SquareScaling, WeightLoss,
    WeightSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    Log {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Square {
        n: usize,
        #[serde(default)]
        scaling: SquareScaling,
    },
    FromWeight {
        n: usize,
        weight: WeightSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    LinearScore {
        n: usize,
    },
    /// A loss built in code with no serializable recipe.
    Custom {
        n: usize,
        name: String,
    },
}

impl LossSpec {
    pub fn n(&self) -> usize {
        match *self {
            LossSpec::Log { n, .. }
            | LossSpec::Square { n, .. }
            | LossSpec::FromWeight { n, .. }
            | LossSpec::LinearScore { n }
            | LossSpec::Custom { n, .. } => n,
        }
    }

    pub fn build(&self, cfg: &ToleranceConfig) -> Result<Arc<dyn ProperLoss>> {
        Ok(match self {
            LossSpec::Log { n, scale } => Arc::new(LogLoss::scaled(*n, scale.unwrap_or(1.0))?),
            LossSpec::Square { n, scaling } => Arc::new(SquareLoss::new(*n, *scaling)?),
            LossSpec::FromWeight { n, weight, epsilon } => {
                if *n != 2 {
                    return Err(Error::Unsupported(format!(
                        "weight-defined losses are binary, got n = {n}"
                    )));
                }
                let w = BinaryWeight::from_spec(weight, cfg)?;
                Arc::new(WeightLoss::new(
                    w,
                    epsilon.unwrap_or(cfg.interior_margin),
                    cfg,
                )?)
            }
            LossSpec::LinearScore { n } => Arc::new(LinearScore::new(*n)?),
            LossSpec::Custom { name, .. } => {
                return Err(Error::Unsupported(format!(
                    "loss {name} has no serializable recipe"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinkSpec {
    Identity {
        n: usize,
    },
    Canonical {
        loss: LossSpec,
    },
    Phi {
        n: usize,
        phi: PhiKind,
    },
    Mixture {
        alpha: Vec<f64>,
        basis: Vec<LinkSpec>,
    },
    /// Binary `ψ̃(p) = pᵏ`.
    Power {
        exponent: f64,
    },
}

impl LinkSpec {
    /// Mixtures pass the sampled monotonicity screen of
    /// [`crate::links::LinkFamily`].
    pub fn build(&self, cfg: &ToleranceConfig) -> Result<Arc<dyn Link>> {
        Ok(match self {
            LinkSpec::Identity { n } => Arc::new(IdentityLink::new(*n)?),
            LinkSpec::Canonical { loss } => Arc::new(CanonicalLink::new(loss.build(cfg)?, cfg)?),
            LinkSpec::Phi { n, phi } => {
                Arc::new(PhiLink::new(crate::links::PhiSpec::new(*phi), *n)?)
            }
            LinkSpec::Mixture { alpha, basis } => {
                let basis = basis
                    .iter()
                    .map(|b| b.build(cfg))
                    .collect::<Result<Vec<_>>>()?;
                let family =
                    LinkFamily::new(basis, alpha.clone(), FAMILY_MONOTONICITY_TRIALS, cfg)?;
                Arc::new(combine(&family)?)
            }
            LinkSpec::Power { exponent } => Arc::new(PowerLink::new(*exponent)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeSpec {
    pub loss: LossSpec,
    pub link: LinkSpec,
}

impl CompositeSpec {
    pub fn new(loss: LossSpec, link: LinkSpec) -> Self {
        Self { loss, link }
    }

    pub fn build(&self, cfg: &ToleranceConfig) -> Result<CompositeLoss> {
        CompositeLoss::new(self.loss.build(cfg)?, self.link.build(cfg)?, cfg)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads a composite spec, reporting malformed input against `path`.
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Deserializes a JSON file, naming `path` in parse errors.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// `x` rounded to 9 significant digits.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Locale-independent text for `x` at 9 significant digits.
pub fn fmt9(x: f64) -> String {
    let r = round9(x);
    if r.is_nan() {
        "nan".into()
    } else if r.is_infinite() {
        if r > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if r == 0.0 || (1e-4..1e15).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// Rounds every number inside a JSON value to 9 significant digits.
pub fn round_json(value: &mut serde_json::Value) {
    use serde_json::Value;
    match value {
        Value::Number(num) => {
            if let (false, Some(x)) = (num.is_i64() || num.is_u64(), num.as_f64()) {
                if let Some(r) = serde_json::Number::from_f64(round9(x)) {
                    *num = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}
