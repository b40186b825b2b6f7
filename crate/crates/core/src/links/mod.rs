//! Invertible links between the projected simplex Δ̃ⁿ and a prediction
//! space 𝒱.
//!
//! Predictions are always handled in `ñ = n − 1` internal coordinates. For
//! links whose 𝒱 is the zero-sum hyperplane of ℝⁿ the internal coordinates
//! are the first `ñ` ambient ones and `vₙ = −Σvᵢ`.

mod basic;
mod mixture;
mod phi;

pub use basic::{CanonicalLink, IdentityLink, PowerLink};
pub use mixture::{combine, LinkFamily, MixtureLink, FAMILY_MONOTONICITY_TRIALS};
pub use phi::{PhiKind, PhiLink, PhiSpec};

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{central_jacobian, invert, solve_monotone, ToleranceConfig};
use crate::proper_loss::DerivativeSource;
use crate::simplex::{sample_interior, ProbVector, ProjectedProb};
use crate::spec::LinkSpec;

/// Shape of a link's prediction space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkDomain {
    /// Points of Δ̃ⁿ themselves.
    Simplex,
    /// The image of Δ̃ⁿ under a canonical link.
    CanonicalImage,
    /// An open interval of ℝ (binary links only).
    Interval { lower: f64, upper: f64 },
    /// `{v ∈ ℝⁿ : Σvᵢ = 0}`, each ambient coordinate strictly below `upper`.
    ZeroSum { upper: Option<f64> },
}

impl LinkDomain {
    /// Whether two domains describe the same kind of space.
    pub fn compatible(&self, other: &LinkDomain) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

pub trait Link: Debug + Send + Sync {
    fn n(&self) -> usize;

    fn name(&self) -> String;

    fn domain(&self) -> LinkDomain;

    /// `ψ̃⁻¹(v)` for internal coordinates `v ∈ ℝⁿ̃`.
    fn inverse(&self, v: &DVector<f64>) -> Result<ProjectedProb>;

    /// `D(ψ̃⁻¹)(v)`, `ñ × ñ`. Central differences unless overridden.
    fn inverse_jacobian(&self, v: &DVector<f64>, cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        central_jacobian(|x| self.inverse(x).map(|p| p.to_dvector()), v, cfg.fd_step)
    }

    fn inverse_jacobian_source(&self) -> DerivativeSource {
        DerivativeSource::FiniteDifference
    }

    /// The prediction at the barycenter (the Newton seed for [`Link::forward`]).
    fn barycenter_image(&self) -> DVector<f64> {
        DVector::zeros(self.n() - 1)
    }

    /// `ψ̃(p̃)`, by default by inverting [`Link::inverse`].
    fn forward(&self, p: &ProjectedProb, cfg: &ToleranceConfig) -> Result<DVector<f64>> {
        forward_by_inversion(self, p, cfg)
    }

    /// A prediction indexed by `p̃`, ranging over all of 𝒱 as `p̃` ranges
    /// over the open simplex. This is `ψ̃(p̃)` unless `ψ̃⁻¹` is not onto.
    fn chart(&self, p: &ProjectedProb, cfg: &ToleranceConfig) -> Result<DVector<f64>> {
        self.forward(p, cfg)
    }

    /// `Dψ̃(p̃) = [D(ψ̃⁻¹)(ψ̃(p̃))]⁻¹`.
    fn jacobian(&self, p: &ProjectedProb, cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        let v = self.forward(p, cfg)?;
        invert(&self.inverse_jacobian(&v, cfg)?, p.tilde())
    }

    /// `ψ̃″(p)` for binary links with a closed form.
    fn binary_second_derivative(&self, _p: f64) -> Option<f64> {
        None
    }

    /// Ambient coordinates of `v` (the full vector for hyperplane links).
    fn ambient(&self, v: &DVector<f64>) -> Vec<f64> {
        v.as_slice().to_vec()
    }

    /// Probabilities paired with [`Link::ambient`] in monotonicity checks.
    fn ambient_prob(&self, p: &ProjectedProb) -> Vec<f64> {
        p.tilde().to_vec()
    }

    /// `ψ⁻¹` at ambient coordinates as a full probability vector. Hyperplane
    /// links accept any `v ∈ ℝⁿ` inside their validity box here.
    fn inverse_ambient(&self, v: &[f64]) -> Result<ProbVector> {
        Ok(self.inverse(&self.internal(v)?)?.lift())
    }

    /// Internal coordinates from user-supplied coordinates.
    fn internal(&self, v: &[f64]) -> Result<DVector<f64>> {
        if v.len() != self.n() - 1 {
            return Err(Error::Dimension {
                expected: self.n() - 1,
                got: v.len(),
            });
        }
        Ok(DVector::from_column_slice(v))
    }

    fn spec(&self) -> LinkSpec;
}

/// Solves `ψ̃⁻¹(v) = p̃` from the barycenter image.
pub fn forward_by_inversion<L: Link + ?Sized>(
    link: &L,
    p: &ProjectedProb,
    cfg: &ToleranceConfig,
) -> Result<DVector<f64>> {
    let map = |v: &DVector<f64>| link.inverse(v).ok().map(|q| q.to_dvector());
    let jac = |v: &DVector<f64>| link.inverse_jacobian(v, cfg).ok();
    let analytic = link.inverse_jacobian_source() == DerivativeSource::Analytic;
    solve_monotone(
        &map,
        analytic.then_some(&jac as &dyn Fn(&DVector<f64>) -> Option<DMatrix<f64>>),
        &p.to_dvector(),
        &link.barycenter_image(),
        cfg,
    )
}

/// Outcome of [`verify_strict_monotonicity`].
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub link: String,
    pub trials: usize,
    pub seed: u64,
    /// Margin of the simplex region the sampled predictions map to.
    pub sample_margin: f64,
    /// `min (ψ̃⁻¹(u) − ψ̃⁻¹(v))′(u − v)` in ambient coordinates.
    pub min_inner: f64,
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    pub passed: bool,
}

/// Default margin of the region whose image is sampled.
pub const MONOTONICITY_MARGIN: f64 = 0.05;

/// Samples seeded pairs `u ≠ v` as [`Link::chart`] images of interior
/// points with all coordinates at least `margin`, and reports the smallest inner product
/// `(ψ̃⁻¹(u) − ψ̃⁻¹(v))′(u − v)`. Passes iff it is positive.
pub fn verify_strict_monotonicity(
    link: &dyn Link,
    trials: usize,
    seed: u64,
    margin: f64,
    cfg: &ToleranceConfig,
) -> Result<MonotonicityReport> {
    let n = link.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_inner = f64::INFINITY;
    let mut witness = None;
    for _ in 0..trials {
        let u = link.chart(&sample_interior(n, margin, &mut rng)?, cfg)?;
        let v = link.chart(&sample_interior(n, margin, &mut rng)?, cfg)?;
        let pu = link.ambient_prob(&link.inverse(&u)?);
        let pv = link.ambient_prob(&link.inverse(&v)?);
        let (au, av) = (link.ambient(&u), link.ambient(&v));
        let inner: f64 = pu
            .iter()
            .zip(&pv)
            .zip(au.iter().zip(&av))
            .map(|((a, b), (x, y))| (a - b) * (x - y))
            .sum();
        if inner < min_inner || witness.is_none() {
            min_inner = inner;
            witness = Some((au, av));
        }
    }
    Ok(MonotonicityReport {
        link: link.name(),
        trials,
        seed,
        sample_margin: margin,
        min_inner,
        witness,
        passed: min_inner > 0.0,
    })
}
