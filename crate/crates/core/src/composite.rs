//! Composite losses `ℓ = λ ∘ ψ̃⁻¹` and their exact derivatives.
//!
//! With `κ(p̃) = −HL̃(p̃)·[Dψ̃(p̃)]⁻¹` and `aᵢ = eᵢ − p̃` (where the last class
//! has `eᵢ = 0`):
//!
//! * gradient: `∇ℓᵢ(v) = −κ′aᵢ`;
//! * Hessian: `Hℓᵢ(v) = −(aᵢ′ ⊗ I)·D[vec κ′](v) + κ′·D(ψ̃⁻¹)(v)`.
//!
//! The Hessian contracts the derivative of the *transposed* curvature ratio:
//! column `k` of the first term is `(∂ₖκ)′aᵢ`, which is what differentiating
//! `−κ′aᵢ` produces. It reduces to the untransposed contraction whenever κ is
//! symmetric, as it is for identity and canonical links.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::links::Link;
use crate::numerics::{kron, vec_of, SymMatrix, ToleranceConfig};
use crate::proper_loss::ProperLoss;
use crate::simplex::{ProjectedProb, UnitVector};

/// `|det Dψ̃|` at or below which the link counts as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// Largest `|κ − I|` entry accepted by [`CompositeLoss::canonical_fast`].
pub const CANONICAL_KAPPA_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CompositeLoss {
    loss: Arc<dyn ProperLoss>,
    link: Arc<dyn Link>,
    cfg: ToleranceConfig,
}

/// Curvature data at one prediction.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub p: ProjectedProb,
    /// `κ(p̃)`.
    pub kappa: DMatrix<f64>,
    /// `D(ψ̃⁻¹)(v) = [Dψ̃(p̃)]⁻¹`.
    pub inverse_jacobian: DMatrix<f64>,
}

/// A prediction with its cached inverse-link image and partial losses.
#[derive(Debug, Clone, Serialize)]
pub struct LossEvalPoint {
    pub v: Vec<f64>,
    pub p: ProjectedProb,
    pub values: Vec<f64>,
}

/// Both sides of the strong-convexity matrix inequality, symmetrized:
/// `Hℓᵢ = right − left`.
#[derive(Debug, Clone)]
pub struct HessianParts {
    /// `sym((aᵢ′ ⊗ I)·D[vec κ′])`.
    pub left: SymMatrix,
    /// `sym(κ′·D(ψ̃⁻¹))`.
    pub right: SymMatrix,
    pub hessian: SymMatrix,
    /// Frobenius norm of the antisymmetric part of the raw Hessian.
    pub asymmetry: f64,
}

/// Closed-form binary derivatives in `v`, classes `(1, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinaryDerivatives {
    pub p: f64,
    pub kappa: f64,
    /// `dκ/dp`.
    pub kappa_prime: f64,
    /// `ψ̃′(p)`.
    pub link_slope: f64,
    pub first: [f64; 2],
    pub second: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct CanonicalDerivatives {
    pub gradient: DVector<f64>,
    pub hessian: SymMatrix,
}

impl CompositeLoss {
    pub fn new(
        loss: Arc<dyn ProperLoss>,
        link: Arc<dyn Link>,
        cfg: &ToleranceConfig,
    ) -> Result<Self> {
        if loss.n() != link.n() {
            return Err(Error::Dimension {
                expected: loss.n(),
                got: link.n(),
            });
        }
        cfg.validate()?;
        Ok(Self {
            loss,
            link,
            cfg: *cfg,
        })
    }

    pub fn loss(&self) -> &Arc<dyn ProperLoss> {
        &self.loss
    }

    pub fn link(&self) -> &Arc<dyn Link> {
        &self.link
    }

    pub fn n(&self) -> usize {
        self.loss.n()
    }

    pub fn config(&self) -> &ToleranceConfig {
        &self.cfg
    }

    pub fn name(&self) -> String {
        format!("{}∘{}", self.loss.name(), self.link.name())
    }

    /// `(ℓ₁(v), …, ℓₙ(v))`.
    pub fn eval(&self, v: &DVector<f64>) -> Result<Vec<f64>> {
        Ok(self.eval_point(v)?.values)
    }

    pub fn eval_point(&self, v: &DVector<f64>) -> Result<LossEvalPoint> {
        let p = self.link.inverse(v)?;
        let values = self.loss.partials(&p);
        Ok(LossEvalPoint {
            v: v.as_slice().to_vec(),
            p,
            values,
        })
    }

    /// `ℓᵢ(v)`.
    pub fn partial(&self, v: &DVector<f64>, i: usize) -> Result<f64> {
        Ok(self.loss.partial(i, &self.link.inverse(v)?))
    }

    /// `ψ̃(p̃)`.
    pub fn predict(&self, p: &ProjectedProb) -> Result<DVector<f64>> {
        self.link.forward(p, &self.cfg)
    }

    /// [`Link::chart`]: a prediction indexed by `p̃` covering all of 𝒱.
    pub fn chart(&self, p: &ProjectedProb) -> Result<DVector<f64>> {
        self.link.chart(p, &self.cfg)
    }

    pub fn geometry(&self, v: &DVector<f64>) -> Result<LocalGeometry> {
        let p = self.link.inverse(v)?;
        self.geometry_at(v, p)
    }

    fn geometry_at(&self, v: &DVector<f64>, p: ProjectedProb) -> Result<LocalGeometry> {
        let jinv = self.link.inverse_jacobian(v, &self.cfg)?;
        let det = jinv.determinant();
        // det Dψ̃ = 1/det D(ψ̃⁻¹)
        if !det.is_finite()
            || !jinv.iter().all(|x| x.is_finite())
            || det.abs() >= 1.0 / SINGULAR_DET
        {
            return Err(Error::CurvatureSingularity {
                point: p.tilde().to_vec(),
                det: 1.0 / det.abs(),
            });
        }
        let h = self.loss.bayes_hessian(&p, &self.cfg)?;
        let kappa = -(h.as_matrix() * &jinv);
        Ok(LocalGeometry {
            p,
            kappa,
            inverse_jacobian: jinv,
        })
    }

    /// `κ(p̃)` at `p̃ = ψ̃⁻¹(v)`.
    pub fn kappa(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.geometry(v)?.kappa)
    }

    /// `∇ℓᵢ(v) = −κ′(eᵢ − p̃)`.
    pub fn gradient(&self, v: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        let g = self.geometry(v)?;
        Ok(gradient_from(&g, i)?)
    }

    /// All class gradients sharing one curvature evaluation.
    pub fn gradients(&self, v: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let g = self.geometry(v)?;
        (0..self.n()).map(|i| gradient_from(&g, i)).collect()
    }

    /// `D[vec κ′](v)`, `ñ² × ñ`.
    ///
    /// Binary composites whose loss and link both supply third-order closed
    /// forms are differentiated analytically; everything else uses a
    /// five-point stencil in `v` with step `fd_hessian_step`, retried once at
    /// an eighth of the step if a probe leaves the domain.
    pub fn kappa_transpose_derivative(
        &self,
        v: &DVector<f64>,
        g: &LocalGeometry,
    ) -> Result<DMatrix<f64>> {
        if let Some(d) = self.binary_kappa_v_derivative(g) {
            return Ok(DMatrix::from_element(1, 1, d));
        }
        match self.stencil_kappa_derivative(v, self.cfg.fd_hessian_step) {
            Err(Error::Domain { .. }) | Err(Error::CurvatureSingularity { .. }) => {
                self.stencil_kappa_derivative(v, self.cfg.fd_hessian_step / 8.0)
            }
            other => other,
        }
    }

    /// `dκ/dv` from `κ = w/ψ̃′` when `w′` and `ψ̃″` are known.
    fn binary_kappa_v_derivative(&self, g: &LocalGeometry) -> Option<f64> {
        if self.n() != 2 {
            return None;
        }
        let p = g.p.full(0);
        let dw = self.loss.analytic_weight_derivative(p)?;
        let d2psi = self.link.binary_second_derivative(p)?;
        let jinv = g.inverse_jacobian[(0, 0)];
        let slope = 1.0 / jinv;
        let w = g.kappa[(0, 0)] * slope;
        let kappa_p = (dw * slope - w * d2psi) / (slope * slope);
        Some(kappa_p * jinv)
    }

    fn stencil_kappa_derivative(&self, v: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        let d = v.len();
        let mut out = DMatrix::zeros(d * d, d);
        for k in 0..d {
            let at = |s: f64| -> Result<DVector<f64>> {
                let mut x = v.clone();
                x[k] += s * h;
                Ok(vec_of(&self.kappa(&x)?.transpose()))
            };
            let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
            let col = (-p2 + p1 * 8.0 - m1 * 8.0 + m2) / (12.0 * h);
            out.set_column(k, &col);
        }
        Ok(out)
    }

    /// Both sides of `(aᵢ′ ⊗ I)·D[vec κ′] ≼ κ′·D(ψ̃⁻¹) − cI` and the Hessian.
    pub fn hessian_parts(&self, v: &DVector<f64>, i: usize) -> Result<HessianParts> {
        let g = self.geometry(v)?;
        let dk = self.kappa_transpose_derivative(v, &g)?;
        hessian_parts_from(&g, &dk, i)
    }

    /// `Hℓᵢ(v)`, symmetrized.
    pub fn hessian(&self, v: &DVector<f64>, i: usize) -> Result<SymMatrix> {
        Ok(self.hessian_parts(v, i)?.hessian)
    }

    /// All class Hessians sharing one curvature derivative.
    pub fn hessians(&self, v: &DVector<f64>) -> Result<Vec<HessianParts>> {
        let g = self.geometry(v)?;
        let dk = self.kappa_transpose_derivative(v, &g)?;
        (0..self.n())
            .map(|i| hessian_parts_from(&g, &dk, i))
            .collect()
    }

    /// First and second derivatives of both partial losses of a binary
    /// composite, in closed form from `κ`, `κ′` and `ψ̃′`.
    pub fn binary_derivatives(&self, v: &DVector<f64>) -> Result<BinaryDerivatives> {
        if self.n() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: self.n(),
            });
        }
        let g = self.geometry(v)?;
        let p = g.p.full(0);
        let kappa = g.kappa[(0, 0)];
        let jinv = g.inverse_jacobian[(0, 0)];
        let slope = 1.0 / jinv;
        let kappa_v = self.kappa_transpose_derivative(v, &g)?[(0, 0)];
        let kappa_prime = kappa_v * slope;
        Ok(BinaryDerivatives {
            p,
            kappa,
            kappa_prime,
            link_slope: slope,
            first: [-(1.0 - p) * kappa, p * kappa],
            second: [
                (-(1.0 - p) * kappa_prime + kappa) / slope,
                (p * kappa_prime + kappa) / slope,
            ],
        })
    }

    /// Gradient `p̃ − eᵢ` and Hessian `[−HL̃]⁻¹`, valid for canonical links.
    pub fn canonical_fast(&self, v: &DVector<f64>, i: usize) -> Result<CanonicalDerivatives> {
        let g = self.geometry(v)?;
        let d = self.n() - 1;
        let dev = (&g.kappa - DMatrix::<f64>::identity(d, d)).abs().max();
        if !(dev <= CANONICAL_KAPPA_TOL) {
            return Err(Error::Misuse(format!(
                "{} is not canonical: |κ − I| = {dev:e}",
                self.name()
            )));
        }
        let e = UnitVector::new(i, self.n())?.to_dvector();
        let neg_h = self.loss.bayes_hessian(&g.p, &self.cfg)?.scale(-1.0);
        Ok(CanonicalDerivatives {
            gradient: g.p.to_dvector() - e,
            hessian: neg_h.inverse()?,
        })
    }
}

fn gradient_from(g: &LocalGeometry, i: usize) -> Result<DVector<f64>> {
    let a = UnitVector::new(i, g.p.n())?.to_dvector() - g.p.to_dvector();
    Ok(-(g.kappa.transpose() * a))
}

fn hessian_parts_from(g: &LocalGeometry, dk: &DMatrix<f64>, i: usize) -> Result<HessianParts> {
    let d = g.p.dim();
    let a = UnitVector::new(i, g.p.n())?.to_dvector() - g.p.to_dvector();
    let row = kron(
        &DMatrix::from_row_slice(1, d, a.as_slice()),
        &DMatrix::identity(d, d),
    );
    let left_raw = row * dk;
    let right_raw = g.kappa.transpose() * &g.inverse_jacobian;
    let raw = &right_raw - &left_raw;
    let (hessian, asymmetry) = SymMatrix::symmetrize(&raw);
    Ok(HessianParts {
        left: SymMatrix::symmetrize(&left_raw).0,
        right: SymMatrix::symmetrize(&right_raw).0,
        hessian,
        asymmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::{CanonicalLink, IdentityLink, MixtureLink, PhiLink, PowerLink};
    use crate::numerics::{central_gradient, central_hessian, relative_error};
    use crate::proper_loss::{LogLoss, SquareLoss, SquareScaling};
    use crate::simplex::sample_interior;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn sigma(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    fn log_identity(n: usize) -> CompositeLoss {
        CompositeLoss::new(
            Arc::new(LogLoss::new(n).unwrap()),
            Arc::new(IdentityLink::new(n).unwrap()),
            &cfg(),
        )
        .unwrap()
    }

    fn log_logit() -> CompositeLoss {
        let loss: Arc<dyn ProperLoss> = Arc::new(LogLoss::new(2).unwrap());
        let link = Arc::new(CanonicalLink::new(loss.clone(), &cfg()).unwrap());
        CompositeLoss::new(loss, link, &cfg()).unwrap()
    }

    fn unit_square_canonical() -> CompositeLoss {
        let loss: Arc<dyn ProperLoss> =
            Arc::new(SquareLoss::new(2, SquareScaling::UnitWeight).unwrap());
        let link = Arc::new(CanonicalLink::new(loss.clone(), &cfg()).unwrap());
        CompositeLoss::new(loss, link, &cfg()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let l = log_logit().eval(&v1(0.0)).unwrap();
        assert_abs_diff_eq!(l[0], std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(l[1], std::f64::consts::LN_2, epsilon = 1e-15);
        let l = log_identity(2).eval(&v1(1.0 / 3.0)).unwrap();
        assert_abs_diff_eq!(l[0], 3f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(l[1], 1.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let t = 1.0 / 3.0;
        let g = log_identity(3)
            .gradient(&DVector::from_vec(vec![t, t]), 0)
            .unwrap();
        assert_abs_diff_eq!(g[0], -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-12);
        let c = log_logit();
        for v in [-2.0, 0.0, 0.7] {
            assert_abs_diff_eq!(
                c.gradient(&v1(v), 0).unwrap()[0],
                sigma(v) - 1.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn hessian_examples() {
        let c = log_logit();
        for v in [-1.5, 0.0, 2.0] {
            let s = sigma(v);
            for i in 0..2 {
                assert_abs_diff_eq!(
                    c.hessian(&v1(v), i).unwrap().get(0, 0),
                    s * (1.0 - s),
                    epsilon = 1e-10
                );
            }
        }
        let h = log_identity(2).hessian(&v1(1.0 / 3.0), 0).unwrap();
        assert_abs_diff_eq!(h.get(0, 0), 9.0, epsilon = 1e-9);
        let u = unit_square_canonical();
        for v in [-0.3, 0.0, 0.4] {
            assert_abs_diff_eq!(
                u.hessian(&v1(v), 1).unwrap().get(0, 0),
                1.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn binary_derivative_examples() {
        let b = log_identity(2).binary_derivatives(&v1(1.0 / 3.0)).unwrap();
        let expect = [-3.0, 1.5, 9.0, 2.25];
        let got = [b.first[0], b.first[1], b.second[0], b.second[1]];
        for (g, e) in got.iter().zip(expect) {
            assert_abs_diff_eq!(*g, e, epsilon = 1e-9);
        }
        let b = log_logit().binary_derivatives(&v1(0.0)).unwrap();
        let got = [b.first[0], b.first[1], b.second[0], b.second[1]];
        for (g, e) in got.iter().zip([-0.5, 0.5, 0.25, 0.25]) {
            assert_abs_diff_eq!(*g, e, epsilon = 1e-12);
        }
        let sq: Arc<dyn ProperLoss> =
            Arc::new(SquareLoss::new(2, SquareScaling::UnitWeight).unwrap());
        let c = CompositeLoss::new(sq, Arc::new(IdentityLink::new(2).unwrap()), &cfg()).unwrap();
        let b = c.binary_derivatives(&v1(0.5)).unwrap();
        let got = [b.first[0], b.first[1], b.second[0], b.second[1]];
        for (g, e) in got.iter().zip([-0.5, 0.5, 1.0, 1.0]) {
            assert_abs_diff_eq!(*g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn canonical_fast_examples() {
        let c = log_logit();
        for v in [-1.0, 0.3] {
            let s = sigma(v);
            let f = c.canonical_fast(&v1(v), 0).unwrap();
            assert_abs_diff_eq!(f.gradient[0], s - 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(f.hessian.get(0, 0), s * (1.0 - s), epsilon = 1e-14);
        }
        let loss: Arc<dyn ProperLoss> = Arc::new(LogLoss::new(3).unwrap());
        let link = Arc::new(CanonicalLink::new(loss.clone(), &cfg()).unwrap());
        let c3 = CompositeLoss::new(loss, link, &cfg()).unwrap();
        let f = c3.canonical_fast(&DVector::zeros(2), 2).unwrap();
        assert_abs_diff_eq!(f.gradient[0], 1.0 / 3.0, epsilon = 1e-15);
        let u = unit_square_canonical().canonical_fast(&v1(0.2), 0).unwrap();
        assert_eq!(u.hessian.get(0, 0), 1.0);
        assert!(matches!(
            log_identity(2).canonical_fast(&v1(0.3), 0),
            Err(Error::Misuse(_))
        ));
    }

    #[test]
    fn singular_link_is_reported() {
        // ψ̃(p) = p⁸ is flat near 0.
        let c = CompositeLoss::new(
            Arc::new(LogLoss::new(2).unwrap()),
            Arc::new(PowerLink::new(8.0).unwrap()),
            &cfg(),
        )
        .unwrap();
        assert!(matches!(
            c.gradient(&v1(1e-20), 0),
            Err(Error::CurvatureSingularity { .. })
        ));
    }

    /// Composites with non-symmetric κ, where the transposed contraction matters.
    #[test]
    fn hessian_matches_differences_for_asymmetric_kappa() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in [3, 5] {
            // Log loss gives a symmetric κ for every φ-link; Brier does not.
            let loss: Arc<dyn ProperLoss> =
                Arc::new(SquareLoss::new(n, SquareScaling::PaperBrier).unwrap());
            let sq: Arc<dyn Link> = Arc::new(PhiLink::squared(n).unwrap());
            let mix: Arc<dyn Link> = Arc::new(
                MixtureLink::new(
                    vec![Arc::new(PhiLink::exp(n).unwrap()), sq.clone()],
                    vec![0.5, 0.5],
                )
                .unwrap(),
            );
            for link in [sq, mix] {
                let c = CompositeLoss::new(loss.clone(), link, &cfg).unwrap();
                let mut skew: f64 = 0.0;
                for _ in 0..10 {
                    let p = sample_interior(n, 0.05, &mut rng).unwrap();
                    let v = c.chart(&p).unwrap();
                    let kappa = c.kappa(&v).unwrap();
                    skew = skew.max((&kappa - kappa.transpose()).norm());
                    for i in 0..n {
                        let parts = c.hessian_parts(&v, i).unwrap();
                        let fd = central_hessian(|x| c.partial(x, i).unwrap_or(f64::NAN), &v, &cfg)
                            .unwrap();
                        let err = relative_error(
                            parts.hessian.as_matrix().as_slice(),
                            fd.as_matrix().as_slice(),
                            1e-3,
                        );
                        assert!(err <= 1e-3, "{} class {i}: {err}", c.name());
                        let scale = parts.hessian.as_matrix().norm();
                        assert!(
                            parts.asymmetry <= 1e-6 * scale,
                            "asymmetry {}",
                            parts.asymmetry
                        );
                    }
                }
                assert!(skew > 1e-3, "{}: κ unexpectedly symmetric", c.name());
            }
        }
    }

    #[test]
    fn weighted_gradients_vanish_at_truth() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let c = CompositeLoss::new(
            Arc::new(LogLoss::new(4).unwrap()),
            Arc::new(PhiLink::squared(4).unwrap()),
            &cfg,
        )
        .unwrap();
        for _ in 0..20 {
            let p = sample_interior(4, 0.02, &mut rng).unwrap();
            let v = c.predict(&p).unwrap();
            let total = c
                .gradients(&v)
                .unwrap()
                .iter()
                .enumerate()
                .fold(DVector::zeros(3), |acc, (i, g)| acc + g * p.full(i));
            assert!(total.amax() <= 1e-8);
            let g0 = c.gradient(&v, 0).unwrap();
            let fd = central_gradient(|x| c.partial(x, 0).unwrap_or(f64::NAN), &v, &cfg).unwrap();
            assert!(relative_error(g0.as_slice(), fd.as_slice(), 1e-3) <= 1e-6);
        }
    }
}
