use serde::Serialize;

use super::{
    check_modulus, region_bounds, sweep, ConvexityReport, Grid, ReportBuilder, Sample, Verdict,
    Witness,
};
use crate::composite::CompositeLoss;
use crate::error::{Error, Result};
use crate::numerics::{min_shifted_eigenvalue, SymMatrix, ToleranceConfig};
use crate::proper_loss::{BinaryWeight, ProperLoss};

fn require_grid(grid: &Grid, n: usize) -> Result<()> {
    if grid.n() != n {
        return Err(Error::Dimension {
            expected: n,
            got: grid.n(),
        });
    }
    Ok(())
}

/// `Hℓᵢ(ψ̃(p̃)) ≽ cI` for every grid point and class.
pub fn check_hessian_criterion(cl: &CompositeLoss, c: f64, grid: &Grid) -> Result<ConvexityReport> {
    check_modulus(c)?;
    require_grid(grid, cl.n())?;
    let results = sweep(grid, |p| {
        let v = cl.chart(p)?;
        let parts = cl.hessians(&v)?;
        Ok(Sample {
            asymmetry: parts.iter().map(|h| h.asymmetry).fold(0.0, f64::max),
            values: parts
                .iter()
                .enumerate()
                .map(|(i, h)| (Some(i), min_shifted_eigenvalue(&h.hessian, c)))
                .collect(),
        })
    });
    Ok(ReportBuilder {
        checker: "hessian_criterion",
        subject: cl.name(),
        modulus: c,
        psd_tol: cl.config().psd_tol,
        pass: Verdict::CertifiedOnGrid,
    }
    .build(grid, results))
}

/// `sym((aᵢ′ ⊗ I)·D[vec κ′]) ≼ sym(κ′·D(ψ̃⁻¹)) − cI` with `aᵢ = eᵢ − p̃`.
pub fn check_theorem5(cl: &CompositeLoss, c: f64, grid: &Grid) -> Result<ConvexityReport> {
    check_modulus(c)?;
    require_grid(grid, cl.n())?;
    let results = sweep(grid, |p| {
        let v = cl.chart(p)?;
        let parts = cl.hessians(&v)?;
        let values = parts
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let gap = SymMatrix::symmetrize(&(h.right.as_matrix() - h.left.as_matrix())).0;
                (Some(i), min_shifted_eigenvalue(&gap, c))
            })
            .collect();
        Ok(Sample {
            values,
            asymmetry: parts.iter().map(|h| h.asymmetry).fold(0.0, f64::max),
        })
    });
    Ok(ReportBuilder {
        checker: "theorem5",
        subject: cl.name(),
        modulus: c,
        psd_tol: cl.config().psd_tol,
        pass: Verdict::CertifiedOnGrid,
    }
    .build(grid, results))
}

/// Strong convexity of the canonical composite: `−HL̃ ≼ (1/c)I` on the grid.
///
/// At `c = 0` the composite is convex for every proper loss and the verdict
/// is a certificate regardless of the samples, which then report
/// `λ_min(−HL̃)` as a concavity diagnostic.
pub fn check_canonical(
    loss: &dyn ProperLoss,
    c: f64,
    grid: &Grid,
    cfg: &ToleranceConfig,
) -> Result<ConvexityReport> {
    check_modulus(c)?;
    require_grid(grid, loss.n())?;
    let results = sweep(grid, |p| {
        let neg_h = loss.bayes_hessian(p, cfg)?.scale(-1.0);
        let value = if c == 0.0 {
            neg_h.min_eigenvalue()
        } else {
            1.0 / c - neg_h.max_eigenvalue()
        };
        Ok(Sample {
            values: vec![(None, value)],
            asymmetry: 0.0,
        })
    });
    let mut report = ReportBuilder {
        checker: "canonical",
        subject: loss.name(),
        modulus: c,
        psd_tol: cfg.psd_tol,
        pass: Verdict::CertifiedOnGrid,
    }
    .build(grid, results);
    if c == 0.0 {
        report.verdict = Verdict::CertifiedOnGrid;
    }
    Ok(report)
}

/// Identity-link strong convexity of a binary weight:
/// `−1/p ≤ w′/(w − c) ≤ 1/(1−p)` and `w > c`.
///
/// Where `|w − c| ≤ psd_tol` the undivided pair
/// `(1−p)w′ ≤ w − c` and `−p·w′ ≤ w − c` is tested instead. Class 0 carries
/// the upper inequality (from `ℓ₁″ ≥ c`) and class 1 the lower one.
pub fn binary_iff_check(
    w: &BinaryWeight,
    c: f64,
    grid: &Grid,
    cfg: &ToleranceConfig,
) -> Result<ConvexityReport> {
    check_modulus(c)?;
    grid.binary_scalars()?;
    let tol = cfg.psd_tol;
    let results = sweep(grid, |pp| {
        let p = pp.tilde()[0];
        let gap = w.eval(p) - c;
        let dw = w.derivative(p, cfg)?;
        let values = if gap < -tol {
            vec![(None, gap)]
        } else if gap <= tol {
            vec![(Some(0), gap - (1.0 - p) * dw), (Some(1), gap + p * dw)]
        } else {
            let r = dw / gap;
            vec![(Some(0), 1.0 / (1.0 - p) - r), (Some(1), r + 1.0 / p)]
        };
        Ok(Sample {
            values,
            asymmetry: 0.0,
        })
    });
    Ok(ReportBuilder {
        checker: "binary_iff",
        subject: w.name().to_string(),
        modulus: c,
        psd_tol: tol,
        pass: Verdict::CertifiedOnGrid,
    }
    .build(grid, results))
}

/// Necessary condition for strong convexity of a normalized weight: `w(p)`
/// inside the band of [`region_bounds`]. Passing is never a certificate.
pub fn region_check(
    w: &BinaryWeight,
    c: f64,
    grid: &Grid,
    cfg: &ToleranceConfig,
) -> Result<ConvexityReport> {
    check_modulus(c)?;
    if !w.is_normalized() {
        return Err(Error::Misuse(format!(
            "region check needs w(1/2) = 1, got w(1/2) = {}",
            w.eval(0.5)
        )));
    }
    grid.binary_scalars()?;
    let results = sweep(grid, |pp| {
        let p = pp.tilde()[0];
        let (lo, hi) = region_bounds(p, c);
        let wp = w.eval(p);
        Ok(Sample {
            values: vec![(None, (wp - lo).min(hi - wp))],
            asymmetry: 0.0,
        })
    });
    Ok(ReportBuilder {
        checker: "region",
        subject: w.name().to_string(),
        modulus: c,
        psd_tol: cfg.psd_tol,
        pass: Verdict::PassedNecessary,
    }
    .build(grid, results))
}

/// `M/m` over the grid, with the points attaining each extreme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionBound {
    pub bound: f64,
    pub max_eigenvalue: f64,
    pub min_eigenvalue: f64,
    pub at_max: Witness,
    pub at_min: Witness,
}

/// `max λ_max(Hℓᵢ) / min λ_min(Hℓᵢ)` over grid points and classes. Refuses
/// composites whose smallest eigenvalue is at most `psd_tol`.
pub fn condition_number_bound(cl: &CompositeLoss, grid: &Grid) -> Result<ConditionBound> {
    require_grid(grid, cl.n())?;
    let results = sweep(grid, |p| {
        let v = cl.chart(p)?;
        let parts = cl.hessians(&v)?;
        let mut values = Vec::with_capacity(2 * parts.len());
        for (i, h) in parts.iter().enumerate() {
            values.push((Some(i), h.hessian.min_eigenvalue()));
            values.push((Some(i), -h.hessian.max_eigenvalue()));
        }
        Ok(Sample {
            values,
            asymmetry: 0.0,
        })
    });
    let mut lo: Option<Witness> = None;
    let mut hi: Option<Witness> = None;
    for (k, r) in results {
        let point = grid.points()[k].full_vec();
        let sample = r?;
        for pair in sample.values.chunks(2) {
            let (class, min) = pair[0];
            let max = -pair[1].1;
            if lo.as_ref().is_none_or(|w| min < w.value) {
                lo = Some(Witness {
                    point: point.clone(),
                    class,
                    value: min,
                });
            }
            if hi.as_ref().is_none_or(|w| max > w.value) {
                hi = Some(Witness {
                    point: point.clone(),
                    class,
                    value: max,
                });
            }
        }
    }
    let (lo, hi) = lo
        .zip(hi)
        .ok_or_else(|| Error::Config("empty grid".into()))?;
    if !(lo.value > cl.config().psd_tol) {
        return Err(Error::Certification {
            message: format!("{} is not strongly convex on the grid", cl.name()),
            point: lo.point,
            value: lo.value,
        });
    }
    Ok(ConditionBound {
        bound: hi.value / lo.value,
        max_eigenvalue: hi.value,
        min_eigenvalue: lo.value,
        at_max: hi,
        at_min: lo,
    })
}

/// Width of the final bracket in [`find_modulus`].
pub const MODULUS_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusSearch {
    /// Largest certified modulus found, `None` if `c = 0` is not certified.
    pub modulus: Option<f64>,
    /// Report at `modulus`, or at `c = 0` when nothing is certified.
    pub report: ConvexityReport,
    /// Smallest modulus known to fail.
    pub refuted_above: Option<f64>,
    pub evaluations: usize,
}

/// Bisects `[0, 1]` for the largest modulus `check` certifies, to within
/// [`MODULUS_RESOLUTION`]. Assumes certification is monotone in `c`.
pub fn find_modulus<F>(check: F) -> Result<ModulusSearch>
where
    F: Fn(f64) -> Result<ConvexityReport>,
{
    let zero = check(0.0)?;
    if !zero.verdict.is_certified() {
        return Ok(ModulusSearch {
            modulus: None,
            report: zero,
            refuted_above: Some(0.0),
            evaluations: 1,
        });
    }
    let one = check(1.0)?;
    if one.verdict.is_certified() {
        return Ok(ModulusSearch {
            modulus: Some(1.0),
            report: one,
            refuted_above: None,
            evaluations: 2,
        });
    }
    let (mut lo, mut hi, mut best, mut evaluations) = (0.0, 1.0, zero, 2);
    while hi - lo > MODULUS_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        let r = check(mid)?;
        evaluations += 1;
        if r.verdict.is_certified() {
            lo = mid;
            best = r;
        } else {
            hi = mid;
        }
    }
    Ok(ModulusSearch {
        modulus: Some(lo),
        report: best,
        refuted_above: Some(hi),
        evaluations,
    })
}
