//! Grid-based (strong-)convexity certification.
//!
//! Every verdict quantifies over an explicit grid of interior points, so a
//! certificate means "no sampled point violates the condition" and the
//! report carries the grid that was used.

mod checks;
mod region;

pub use checks::{
    binary_iff_check, check_canonical, check_hessian_criterion, check_theorem5,
    condition_number_bound, find_modulus, region_check, ConditionBound, ModulusSearch,
    MODULUS_RESOLUTION,
};
pub use region::{region_boundary, region_bounds, RegionCurve, RegionSample};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simplex::{interior_grid, ProjectedProb};

/// Default distance of grid points from the simplex boundary.
pub const DEFAULT_MARGIN: f64 = 0.02;

/// Fraction of skipped grid points above which a check is inconclusive.
pub const MAX_SKIP_FRACTION: f64 = 0.1;

/// Lattice resolution used when none is given.
pub fn default_resolution(n: usize) -> usize {
    match n {
        2 => 200,
        3 => 60,
        _ => 12,
    }
}

/// How a grid was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDescriptor {
    pub n: usize,
    /// Lattice resolution; absent for explicit point lists.
    pub resolution: Option<usize>,
    pub margin: Option<f64>,
    pub points: usize,
}

/// A finite set of interior points of Δ̃ⁿ.
#[derive(Debug, Clone)]
pub struct Grid {
    points: Vec<ProjectedProb>,
    descriptor: GridDescriptor,
}

impl Grid {
    /// The interior lattice of [`interior_grid`].
    pub fn new(n: usize, resolution: usize, margin: f64) -> Result<Self> {
        let points = interior_grid(n, resolution, margin)?;
        let descriptor = GridDescriptor {
            n,
            resolution: Some(resolution),
            margin: Some(margin),
            points: points.len(),
        };
        Ok(Self { points, descriptor })
    }

    pub fn default_for(n: usize) -> Result<Self> {
        Self::new(n, default_resolution(n), DEFAULT_MARGIN)
    }

    pub fn from_points(n: usize, points: Vec<ProjectedProb>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("a grid needs at least one point".into()));
        }
        if let Some(bad) = points.iter().find(|p| p.n() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: bad.n(),
            });
        }
        if let Some(bad) = points.iter().find(|p| !p.is_interior()) {
            return Err(Error::domain("grid points must be interior", bad.tilde()));
        }
        let margin = points
            .iter()
            .map(|p| p.min_component())
            .fold(f64::INFINITY, f64::min);
        let descriptor = GridDescriptor {
            n,
            resolution: None,
            margin: Some(margin),
            points: points.len(),
        };
        Ok(Self { points, descriptor })
    }

    /// Binary grid from values of `p = p₁`.
    pub fn binary(ps: &[f64]) -> Result<Self> {
        let points = ps
            .iter()
            .map(|&p| ProjectedProb::new(vec![p]))
            .collect::<Result<Vec<_>>>()?;
        Self::from_points(2, points)
    }

    pub fn n(&self) -> usize {
        self.descriptor.n
    }

    pub fn points(&self) -> &[ProjectedProb] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn descriptor(&self) -> &GridDescriptor {
        &self.descriptor
    }

    /// `p₁` at every point of a binary grid.
    pub fn binary_scalars(&self) -> Result<Vec<f64>> {
        if self.n() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: self.n(),
            });
        }
        Ok(self.points.iter().map(|p| p.tilde()[0]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Every evaluated sample satisfies the condition.
    CertifiedOnGrid,
    /// Some sample violates the condition by more than `psd_tol`.
    Refuted,
    /// Too many samples could not be evaluated.
    Inconclusive,
    /// A necessary condition holds everywhere sampled; not a certificate.
    PassedNecessary,
}

impl Verdict {
    pub fn is_certified(self) -> bool {
        self == Verdict::CertifiedOnGrid
    }
}

/// The worst sample of a check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// Full probability vector.
    pub point: Vec<f64>,
    /// Class index, for per-class conditions.
    pub class: Option<usize>,
    /// Smallest shifted eigenvalue (or inequality margin) at the point.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPoint {
    pub point: Vec<f64>,
    pub reason: String,
}

/// Number of skipped points kept in a report.
const SKIP_RECORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub checker: String,
    pub subject: String,
    pub modulus: f64,
    pub verdict: Verdict,
    /// Worst sample; `None` only when nothing was evaluated.
    pub witness: Option<Witness>,
    /// `witness.value`, or `+∞` when nothing was evaluated.
    pub min_shifted_eigenvalue: f64,
    pub psd_tol: f64,
    pub grid: GridDescriptor,
    pub evaluated: usize,
    pub skipped: usize,
    pub skipped_points: Vec<SkippedPoint>,
    /// Largest Frobenius norm of a Hessian's antisymmetric part.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_asymmetry: Option<f64>,
}

/// Per-point result of a sampled condition: one value per class (or a
/// single unclassed value), plus a diagnostic.
pub(crate) struct Sample {
    pub values: Vec<(Option<usize>, f64)>,
    pub asymmetry: f64,
}

/// Evaluates `f` at every grid point in parallel and reduces in grid order,
/// so the worst sample is the first minimum in `(point, class)` order.
pub(crate) fn sweep<F>(grid: &Grid, f: F) -> Vec<(usize, Result<Sample>)>
where
    F: Fn(&ProjectedProb) -> Result<Sample> + Sync,
{
    grid.points()
        .par_iter()
        .enumerate()
        .map(|(k, p)| (k, f(p)))
        .collect()
}

pub(crate) struct ReportBuilder<'a> {
    pub checker: &'a str,
    pub subject: String,
    pub modulus: f64,
    pub psd_tol: f64,
    /// Verdict when no sample is violated.
    pub pass: Verdict,
}

impl ReportBuilder<'_> {
    pub fn build(self, grid: &Grid, results: Vec<(usize, Result<Sample>)>) -> ConvexityReport {
        let mut witness: Option<Witness> = None;
        let mut evaluated = 0;
        let mut skipped_points = Vec::new();
        let mut skipped = 0;
        let mut max_asym: f64 = 0.0;
        for (k, r) in results {
            let point = grid.points()[k].full_vec();
            let sample = match r {
                Ok(s) if s.values.iter().any(|(_, v)| v.is_nan()) => {
                    let e = Error::Invariant("condition evaluated to NaN".into());
                    skip(&mut skipped, &mut skipped_points, &point, e);
                    continue;
                }
                Ok(s) => s,
                Err(e) => {
                    skip(&mut skipped, &mut skipped_points, &point, e);
                    continue;
                }
            };
            evaluated += 1;
            max_asym = max_asym.max(sample.asymmetry);
            for (class, value) in sample.values {
                if witness.as_ref().is_none_or(|w| value < w.value) {
                    witness = Some(Witness {
                        point: point.clone(),
                        class,
                        value,
                    });
                }
            }
        }
        let worst = witness.as_ref().map_or(f64::INFINITY, |w| w.value);
        let total = grid.len().max(1) as f64;
        let verdict = if worst < -self.psd_tol {
            Verdict::Refuted
        } else if skipped as f64 > MAX_SKIP_FRACTION * total || evaluated == 0 {
            Verdict::Inconclusive
        } else {
            self.pass
        };
        ConvexityReport {
            checker: self.checker.to_string(),
            subject: self.subject,
            modulus: self.modulus,
            verdict,
            witness,
            min_shifted_eigenvalue: worst,
            psd_tol: self.psd_tol,
            grid: grid.descriptor().clone(),
            evaluated,
            skipped,
            skipped_points,
            max_asymmetry: None,
        }
        .with_asymmetry(max_asym)
    }
}

fn skip(count: &mut usize, records: &mut Vec<SkippedPoint>, point: &[f64], e: Error) {
    *count += 1;
    if records.len() < SKIP_RECORDS {
        records.push(SkippedPoint {
            point: point.to_vec(),
            reason: e.to_string(),
        });
    }
}

impl ConvexityReport {
    fn with_asymmetry(mut self, a: f64) -> Self {
        if a > 0.0 {
            self.max_asymmetry = Some(a);
        }
        self
    }
}

fn check_modulus(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "modulus must lie in [0, 1], got {c}"
        )))
    }
}
