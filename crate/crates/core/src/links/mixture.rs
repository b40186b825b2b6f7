use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::phi::zero_sum_internal;
use super::{
    verify_strict_monotonicity, Link, LinkDomain, MonotonicityReport, MONOTONICITY_MARGIN,
};
use crate::error::{Error, Result};
use crate::numerics::ToleranceConfig;
use crate::proper_loss::DerivativeSource;
use crate::simplex::{ProbVector, ProjectedProb};
use crate::spec::LinkSpec;

/// Default sampled monotonicity trials per basis link.
pub const FAMILY_MONOTONICITY_TRIALS: usize = 1000;

/// Basis links sharing `n` and 𝒱, plus a mixture weight on the basis simplex.
#[derive(Debug, Clone)]
pub struct LinkFamily {
    basis: Vec<Arc<dyn Link>>,
    alpha: ProbVector,
    monotonicity: Vec<MonotonicityReport>,
}

impl LinkFamily {
    /// Checks compatibility and sampled strict monotonicity of each basis.
    pub fn new(
        basis: Vec<Arc<dyn Link>>,
        alpha: Vec<f64>,
        trials: usize,
        cfg: &ToleranceConfig,
    ) -> Result<Self> {
        let first = basis
            .first()
            .ok_or_else(|| Error::Config("a link family needs at least one basis link".into()))?;
        if alpha.len() != basis.len() {
            return Err(Error::Config(format!(
                "mixture has {} weights for {} basis links",
                alpha.len(),
                basis.len()
            )));
        }
        let alpha = if alpha.len() == 1 {
            if (alpha[0] - 1.0).abs() > 1e-12 {
                return Err(Error::Config(
                    "a single-link mixture must have weight 1".into(),
                ));
            }
            ProbVector::new(vec![1.0, 0.0])?
        } else {
            ProbVector::new(alpha).map_err(|e| Error::Config(format!("mixture weights: {e}")))?
        };
        for b in &basis[1..] {
            if b.n() != first.n() || !b.domain().compatible(&first.domain()) {
                return Err(Error::Config(format!(
                    "basis links {} and {} have different prediction spaces",
                    first.name(),
                    b.name()
                )));
            }
        }
        let monotonicity = basis
            .iter()
            .map(|b| verify_strict_monotonicity(b.as_ref(), trials, 0, MONOTONICITY_MARGIN, cfg))
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = monotonicity.iter().find(|r| !r.passed) {
            return Err(Error::Config(format!(
                "basis link {} failed the monotonicity check (min inner product {:e})",
                bad.link, bad.min_inner
            )));
        }
        Ok(Self {
            basis,
            alpha,
            monotonicity,
        })
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.alpha.as_slice()[..self.basis.len()].to_vec()
    }

    pub fn monotonicity(&self) -> &[MonotonicityReport] {
        &self.monotonicity
    }
}

/// `Ψ⁻¹ = Σ_b α_b ψ_b⁻¹`.
pub fn combine(family: &LinkFamily) -> Result<MixtureLink> {
    MixtureLink::new(family.basis.clone(), family.alpha())
}

/// Convex combination of inverse links. Bases with zero weight are ignored,
/// so a vertex mixture behaves exactly like its basis link.
#[derive(Debug, Clone)]
pub struct MixtureLink {
    basis: Vec<Arc<dyn Link>>,
    alpha: Vec<f64>,
    /// `(weight, basis)` with positive weight.
    active: Vec<(f64, Arc<dyn Link>)>,
}

impl MixtureLink {
    /// Builds the mixture without the sampled monotonicity screen of
    /// [`LinkFamily::new`].
    pub fn new(basis: Vec<Arc<dyn Link>>, alpha: Vec<f64>) -> Result<Self> {
        if basis.is_empty() || basis.len() != alpha.len() {
            return Err(Error::Config(
                "mixture needs one weight per basis link".into(),
            ));
        }
        let n = basis[0].n();
        let dom = basis[0].domain();
        if basis
            .iter()
            .any(|b| b.n() != n || !b.domain().compatible(&dom))
        {
            return Err(Error::Config(
                "mixture basis links have different prediction spaces".into(),
            ));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0))
            || (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::Config(format!(
                "mixture weights {alpha:?} are not a probability vector"
            )));
        }
        let active = alpha
            .iter()
            .zip(&basis)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| (*a, b.clone()))
            .collect();
        Ok(Self {
            basis,
            alpha,
            active,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

impl Link for MixtureLink {
    fn n(&self) -> usize {
        self.basis[0].n()
    }

    fn name(&self) -> String {
        let parts: Vec<String> = self
            .alpha
            .iter()
            .zip(&self.basis)
            .map(|(a, b)| format!("{a}*{}", b.name()))
            .collect();
        format!("mix[{}]", parts.join("+"))
    }

    fn domain(&self) -> LinkDomain {
        match self.basis[0].domain() {
            LinkDomain::ZeroSum { .. } => LinkDomain::ZeroSum {
                upper: self
                    .active
                    .iter()
                    .filter_map(|(_, b)| match b.domain() {
                        LinkDomain::ZeroSum { upper } => upper,
                        _ => None,
                    })
                    .reduce(f64::min),
            },
            other => other,
        }
    }

    fn inverse(&self, v: &DVector<f64>) -> Result<ProjectedProb> {
        if let [(_, only)] = self.active.as_slice() {
            return only.inverse(v);
        }
        let mut acc = DVector::zeros(self.n() - 1);
        for (a, b) in &self.active {
            acc += b.inverse(v)?.to_dvector() * *a;
        }
        ProjectedProb::from_dvector(&acc)
    }

    fn inverse_jacobian(&self, v: &DVector<f64>, cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        let d = self.n() - 1;
        let mut acc = DMatrix::zeros(d, d);
        for (a, b) in &self.active {
            acc += b.inverse_jacobian(v, cfg)? * *a;
        }
        Ok(acc)
    }

    fn inverse_jacobian_source(&self) -> DerivativeSource {
        if self
            .active
            .iter()
            .all(|(_, b)| b.inverse_jacobian_source() == DerivativeSource::Analytic)
        {
            DerivativeSource::Analytic
        } else {
            DerivativeSource::FiniteDifference
        }
    }

    fn barycenter_image(&self) -> DVector<f64> {
        self.active[0].1.barycenter_image()
    }

    /// The chart of the active basis whose space is the mixture's: a
    /// proper mixture of bounded and unbounded bases is not onto the simplex
    /// interior, so its own forward map cannot index 𝒱.
    fn chart(&self, p: &ProjectedProb, cfg: &ToleranceConfig) -> Result<DVector<f64>> {
        let dom = self.domain();
        let basis = self
            .active
            .iter()
            .map(|(_, b)| b)
            .find(|b| b.domain() == dom)
            .unwrap_or(&self.active[0].1);
        basis.chart(p, cfg)
    }

    fn ambient(&self, v: &DVector<f64>) -> Vec<f64> {
        self.basis[0].ambient(v)
    }

    fn ambient_prob(&self, p: &ProjectedProb) -> Vec<f64> {
        self.basis[0].ambient_prob(p)
    }

    fn inverse_ambient(&self, v: &[f64]) -> Result<ProbVector> {
        let mut acc = vec![0.0; self.n()];
        for (a, b) in &self.active {
            let p = b.inverse_ambient(v)?;
            for (s, x) in acc.iter_mut().zip(p.as_slice()) {
                *s += a * x;
            }
        }
        ProbVector::new(acc)
    }

    fn internal(&self, v: &[f64]) -> Result<DVector<f64>> {
        match self.domain() {
            LinkDomain::ZeroSum { .. } => zero_sum_internal(self.n(), v),
            _ => self.basis[0].internal(v),
        }
    }

    fn spec(&self) -> LinkSpec {
        LinkSpec::Mixture {
            alpha: self.alpha.clone(),
            basis: self.basis.iter().map(|b| b.spec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::{IdentityLink, PhiLink};
    use crate::numerics::relative_error;
    use crate::simplex::sample_interior;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp_sq(n: usize) -> Vec<Arc<dyn Link>> {
        vec![
            Arc::new(PhiLink::exp(n).unwrap()),
            Arc::new(PhiLink::squared(n).unwrap()),
        ]
    }

    #[test]
    fn vertex_mixture_matches_basis() {
        let cfg = ToleranceConfig::default();
        let fam = LinkFamily::new(exp_sq(3), vec![1.0, 0.0], 200, &cfg).unwrap();
        let mix = combine(&fam).unwrap();
        let e = PhiLink::exp(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let v = DVector::from_fn(2, |_, _| rand::Rng::random_range(&mut rng, -2.0..0.4));
            assert_eq!(mix.inverse(&v).unwrap(), e.inverse(&v).unwrap());
        }
    }

    #[test]
    fn half_mixture_examples() {
        let mix = MixtureLink::new(exp_sq(3), vec![0.5, 0.5]).unwrap();
        let p = mix.inverse(&DVector::zeros(2)).unwrap();
        assert_abs_diff_eq!(p.full(0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.full(1), 1.0 / 3.0, epsilon = 1e-15);

        let l2 = 2f64.ln();
        let p = mix.inverse_ambient(&[l2, 0.0, 0.0]).unwrap();
        let soft = [0.5, 0.25, 0.25];
        let w = 1.0 / (1.0 - l2);
        let sq = [w / (w + 2.0), 1.0 / (w + 2.0), 1.0 / (w + 2.0)];
        for i in 0..3 {
            assert_abs_diff_eq!(p.get(i), 0.5 * soft[i] + 0.5 * sq[i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.get(0), 0.5598, epsilon = 1e-4);
    }

    #[test]
    fn mixture_is_affine_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = PhiLink::exp(4).unwrap();
        let s = PhiLink::squared(4).unwrap();
        for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mix = MixtureLink::new(exp_sq(4), vec![a, 1.0 - a]).unwrap();
            let v = DVector::from_fn(3, |_, _| rand::Rng::random_range(&mut rng, -0.3..0.3));
            let got = mix.inverse(&v).unwrap();
            let pe = e.inverse(&v).unwrap();
            let ps = s.inverse(&v).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(
                    got.full(i),
                    a * pe.full(i) + (1.0 - a) * ps.full(i),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn domain_mismatch_is_a_configuration_error() {
        let cfg = ToleranceConfig::default();
        let basis: Vec<Arc<dyn Link>> = vec![
            Arc::new(IdentityLink::new(3).unwrap()),
            Arc::new(PhiLink::exp(3).unwrap()),
        ];
        assert!(matches!(
            LinkFamily::new(basis.clone(), vec![0.5, 0.5], 10, &cfg),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            MixtureLink::new(basis, vec![0.5, 0.5]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            MixtureLink::new(exp_sq(3), vec![0.7, 0.7]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mixture_domain_takes_tightest_active_bound() {
        let m = MixtureLink::new(exp_sq(3), vec![0.5, 0.5]).unwrap();
        assert!(matches!(m.domain(), LinkDomain::ZeroSum { upper: Some(u) } if u < 1.0));
        let m = MixtureLink::new(exp_sq(3), vec![1.0, 0.0]).unwrap();
        assert_eq!(m.domain(), LinkDomain::ZeroSum { upper: None });
    }

    #[test]
    fn mixture_round_trip() {
        let cfg = ToleranceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [2, 3, 5] {
            let mix = MixtureLink::new(exp_sq(n), vec![0.5, 0.5]).unwrap();
            for _ in 0..30 {
                let v = mix
                    .chart(&sample_interior(n, 0.01, &mut rng).unwrap(), &cfg)
                    .unwrap();
                let p = mix.inverse(&v).unwrap();
                let back = mix.forward(&p, &cfg).unwrap();
                assert!(relative_error(back.as_slice(), v.as_slice(), 1.0) <= 1e-10);
            }
        }
    }

    #[test]
    fn proper_mixture_is_not_onto() {
        // Binary: the softmax part stays below σ(2) on the squared-φ box.
        let cfg = ToleranceConfig::default();
        let mix = MixtureLink::new(exp_sq(2), vec![0.5, 0.5]).unwrap();
        let cap = 0.5 / (1.0 + (-2.0f64).exp()) + 0.5;
        let edge = mix.inverse(&DVector::from_element(1, 1.0 - 1e-8)).unwrap();
        assert!((edge.full(0) - cap).abs() < 1e-7);
        let p = ProjectedProb::new(vec![0.97]).unwrap();
        assert!(mix.forward(&p, &cfg).is_err());
        let v = mix.chart(&p, &cfg).unwrap();
        assert!(v[0] < 1.0 && mix.inverse(&v).unwrap().full(0) < cap);
    }
}
