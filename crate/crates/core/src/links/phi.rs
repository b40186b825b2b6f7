use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Link, LinkDomain};
use crate::error::{Error, Result};
use crate::numerics::ToleranceConfig;
use crate::proper_loss::DerivativeSource;
use crate::simplex::{ProbVector, ProjectedProb};
use crate::spec::LinkSpec;

/// Registered convex, strictly decreasing margin functions φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiKind {
    /// `φ(t) = e⁻ᵗ`; induces softmax.
    Exp,
    /// `φ(t) = (1 − t)²` on `t < 1 − 1e-9`.
    Squared,
}

/// Largest admissible argument of the squared φ.
pub const SQUARED_UPPER: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiSpec {
    pub kind: PhiKind,
}

impl PhiSpec {
    pub fn new(kind: PhiKind) -> Self {
        Self { kind }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PhiKind::Exp => "exp",
            PhiKind::Squared => "squared",
        }
    }

    /// Arguments must be strictly below this bound.
    pub fn upper(&self) -> Option<f64> {
        match self.kind {
            PhiKind::Exp => None,
            PhiKind::Squared => Some(SQUARED_UPPER),
        }
    }

    pub fn phi(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::Exp => (-t).exp(),
            PhiKind::Squared => (1.0 - t).powi(2),
        }
    }

    pub fn dphi(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::Exp => -(-t).exp(),
            PhiKind::Squared => -2.0 * (1.0 - t),
        }
    }

    /// `−φ″/φ′`, the log-derivative of `1/φ′`.
    fn neg_curvature_ratio(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::Exp => 1.0,
            PhiKind::Squared => 1.0 / (1.0 - t),
        }
    }

    /// Spot-checks `φ′ < 0` and increasing secant slopes on a seeded grid.
    pub fn verify(&self, points: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hi = self.upper().map_or(5.0, |u| u - 1e-3);
        let mut ts: Vec<f64> = (0..points.max(3))
            .map(|_| rng.random_range(-5.0..hi))
            .collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        for &t in &ts {
            if !(self.dphi(t) < 0.0) {
                return Err(Error::Invariant(format!(
                    "φ′({t}) is not negative for {}",
                    self.name()
                )));
            }
        }
        for w in ts.windows(3) {
            let s1 = (self.phi(w[1]) - self.phi(w[0])) / (w[1] - w[0]);
            let s2 = (self.phi(w[2]) - self.phi(w[1])) / (w[2] - w[1]);
            if !(s2 > s1) {
                return Err(Error::Invariant(format!(
                    "secant slopes of {} do not increase around {}",
                    self.name(),
                    w[1]
                )));
            }
        }
        Ok(())
    }
}

/// Link induced by φ on the zero-sum hyperplane:
/// `pᵢ = (1/φ′(vᵢ)) / Σⱼ(1/φ′(vⱼ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiLink {
    n: usize,
    phi: PhiSpec,
}

impl PhiLink {
    pub fn new(phi: PhiSpec, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("a link needs n ≥ 2, got {n}")));
        }
        phi.verify(64, 0)?;
        Ok(Self { n, phi })
    }

    pub fn exp(n: usize) -> Result<Self> {
        Self::new(PhiSpec::new(PhiKind::Exp), n)
    }

    pub fn squared(n: usize) -> Result<Self> {
        Self::new(PhiSpec::new(PhiKind::Squared), n)
    }

    pub fn phi(&self) -> PhiSpec {
        self.phi
    }

    fn check_box(&self, v: &[f64]) -> Result<()> {
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::domain(format!("non-finite prediction {bad}"), v));
        }
        if let Some(u) = self.phi.upper() {
            if v.iter().any(|&x| x >= u) {
                return Err(Error::domain(
                    format!(
                        "prediction outside the validity box of φ = {}",
                        self.phi.name()
                    ),
                    v,
                ));
            }
        }
        Ok(())
    }

    /// Full probability vector at an arbitrary ambient `v ∈ ℝⁿ`.
    pub fn inverse_full(&self, v: &[f64]) -> Result<ProbVector> {
        if v.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: v.len(),
            });
        }
        self.check_box(v)?;
        let weights: Vec<f64> = match self.phi.kind {
            // 1/φ′(vᵢ) = −e^{vᵢ}; shift by the max for overflow safety.
            PhiKind::Exp => {
                let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                v.iter().map(|x| (x - top).exp()).collect()
            }
            PhiKind::Squared => v.iter().map(|x| 1.0 / (1.0 - x)).collect(),
        };
        let total: f64 = weights.iter().sum();
        let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // Summation rounding is far below the 1e-12 normalization tolerance.
        ProbVector::new(p)
    }

    fn full_of(&self, v: &DVector<f64>) -> Vec<f64> {
        let mut full = v.as_slice().to_vec();
        full.push(-v.sum());
        full
    }
}

impl Link for PhiLink {
    fn n(&self) -> usize {
        self.n
    }

    fn name(&self) -> String {
        format!("phi_{}", self.phi.name())
    }

    fn domain(&self) -> LinkDomain {
        LinkDomain::ZeroSum {
            upper: self.phi.upper(),
        }
    }

    fn inverse(&self, v: &DVector<f64>) -> Result<ProjectedProb> {
        if v.len() != self.n - 1 {
            return Err(Error::Dimension {
                expected: self.n - 1,
                got: v.len(),
            });
        }
        Ok(self.inverse_full(&self.full_of(v))?.project())
    }

    /// With `ρᵢ = pᵢ·(−φ″/φ′)(vᵢ)`:
    /// `∂p̃ᵢ/∂vₖ = ρᵢδᵢₖ − pᵢ(ρₖ − ρₙ)` along the hyperplane coordinates.
    fn inverse_jacobian(&self, v: &DVector<f64>, _cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
        let full = self.full_of(v);
        let p = self.inverse_full(&full)?;
        let rho: Vec<f64> = full
            .iter()
            .enumerate()
            .map(|(i, &t)| p.get(i) * self.phi.neg_curvature_ratio(t))
            .collect();
        let d = self.n - 1;
        let rho_n = rho[d];
        Ok(DMatrix::from_fn(d, d, |i, k| {
            let diag = if i == k { rho[i] } else { 0.0 };
            diag - p.get(i) * (rho[k] - rho_n)
        }))
    }

    fn inverse_jacobian_source(&self) -> DerivativeSource {
        DerivativeSource::Analytic
    }

    fn ambient(&self, v: &DVector<f64>) -> Vec<f64> {
        self.full_of(v)
    }

    fn ambient_prob(&self, p: &ProjectedProb) -> Vec<f64> {
        p.full_vec()
    }

    fn inverse_ambient(&self, v: &[f64]) -> Result<ProbVector> {
        self.inverse_full(v)
    }

    fn internal(&self, v: &[f64]) -> Result<DVector<f64>> {
        zero_sum_internal(self.n, v)
    }

    fn spec(&self) -> LinkSpec {
        LinkSpec::Phi {
            n: self.n,
            phi: self.phi.kind,
        }
    }
}

/// Accepts `ñ` internal coordinates or `n` ambient coordinates summing to 0.
pub(crate) fn zero_sum_internal(n: usize, v: &[f64]) -> Result<DVector<f64>> {
    if v.len() == n - 1 {
        return Ok(DVector::from_column_slice(v));
    }
    if v.len() == n {
        let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let sum: f64 = v.iter().sum();
        if sum.abs() > 1e-9 * scale {
            return Err(Error::domain(
                format!("ambient prediction sums to {sum}, not 0"),
                v,
            ));
        }
        return Ok(DVector::from_column_slice(&v[..n - 1]));
    }
    Err(Error::Dimension {
        expected: n - 1,
        got: v.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::{verify_strict_monotonicity, MONOTONICITY_MARGIN};
    use crate::numerics::{central_jacobian, relative_error};
    use crate::simplex::sample_interior;
    use approx::assert_abs_diff_eq;

    /// ψ_exp forward in closed form: `v = ln p − mean(ln p)`.
    fn softmax_forward(p: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = p.iter().map(|x| x.ln()).collect();
        let mean = logs.iter().sum::<f64>() / p.len() as f64;
        logs.iter().map(|l| l - mean).collect()
    }

    /// ψ_sq forward in closed form: `vᵢ = 1 − n/(pᵢ Σⱼ 1/pⱼ)`.
    fn squared_forward(p: &[f64]) -> Vec<f64> {
        let s: f64 = p.iter().map(|x| 1.0 / x).sum();
        p.iter().map(|x| 1.0 - p.len() as f64 / (x * s)).collect()
    }

    #[test]
    fn inverse_examples() {
        let e = PhiLink::exp(3).unwrap();
        let sq = PhiLink::squared(3).unwrap();
        for l in [&e, &sq] {
            let p = l.inverse(&DVector::zeros(2)).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(p.full(i), 1.0 / 3.0, epsilon = 1e-15);
            }
        }
        let p = e.inverse_full(&[2f64.ln(), 0.0, 0.0]).unwrap();
        for (a, b) in p.as_slice().iter().zip([0.5, 0.25, 0.25]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let p = sq.inverse_full(&[2f64.ln(), 0.0, 0.0]).unwrap();
        let w = 1.0 / (1.0 - 2f64.ln());
        for (a, b) in p.as_slice().iter().zip([w, 1.0, 1.0]) {
            assert_abs_diff_eq!(*a, b / (w + 2.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn squared_box_is_enforced() {
        let sq = PhiLink::squared(3).unwrap();
        assert!(matches!(
            sq.inverse_full(&[1.0, -0.5, -0.5]),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            sq.inverse(&DVector::from_vec(vec![1.5, -0.2])),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn forward_matches_closed_forms() {
        let cfg = ToleranceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2, 3, 5] {
            let e = PhiLink::exp(n).unwrap();
            let sq = PhiLink::squared(n).unwrap();
            for _ in 0..30 {
                let p = sample_interior(n, 0.01, &mut rng).unwrap();
                let full = p.full_vec();
                let v = e.forward(&p, &cfg).unwrap();
                let oracle = softmax_forward(&full);
                assert!(relative_error(&e.ambient(&v), &oracle, 1.0) < 1e-12);
                let v = sq.forward(&p, &cfg).unwrap();
                let oracle = squared_forward(&full);
                assert!(relative_error(&sq.ambient(&v), &oracle, 1.0) < 1e-11);
                let back = sq.inverse(&v).unwrap();
                assert!(relative_error(back.tilde(), p.tilde(), 1.0) <= cfg.root_tol);
            }
        }
    }

    #[test]
    fn analytic_inverse_jacobian_matches_differences() {
        let cfg = ToleranceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for n in [2, 3, 5] {
            for l in [PhiLink::exp(n).unwrap(), PhiLink::squared(n).unwrap()] {
                for _ in 0..20 {
                    let p = sample_interior(n, 0.02, &mut rng).unwrap();
                    let v = l.forward(&p, &cfg).unwrap();
                    let j = l.inverse_jacobian(&v, &cfg).unwrap();
                    let j_fd = central_jacobian(|x| l.inverse(x).map(|q| q.to_dvector()), &v, 1e-6)
                        .unwrap();
                    assert!(relative_error(j.as_slice(), j_fd.as_slice(), 1.0) < 1e-8);
                }
            }
        }
    }

    #[test]
    fn phi_specs_verify() {
        PhiSpec::new(PhiKind::Exp).verify(256, 3).unwrap();
        PhiSpec::new(PhiKind::Squared).verify(256, 3).unwrap();
    }

    #[test]
    fn phi_links_are_monotone_on_the_truncated_interior() {
        let cfg = ToleranceConfig::default();
        for n in [2, 3, 5] {
            for l in [PhiLink::exp(n).unwrap(), PhiLink::squared(n).unwrap()] {
                let r = verify_strict_monotonicity(&l, 300, 5, MONOTONICITY_MARGIN, &cfg).unwrap();
                assert!(r.passed, "{r:?}");
            }
        }
    }

    #[test]
    fn ambient_input_must_be_zero_sum() {
        assert_eq!(zero_sum_internal(3, &[0.5, -0.25, -0.25]).unwrap().len(), 2);
        assert!(zero_sum_internal(3, &[0.5, 0.0, 0.0]).is_err());
        assert_eq!(zero_sum_internal(3, &[0.5, 0.0]).unwrap()[0], 0.5);
    }
}
