//! Points of the probability simplex Δⁿ and of its projected bottom Δ̃ⁿ.
//!
//! The projection drops the **last** class coordinate. Class indices are
//! 0-based, so the dropped class is `n - 1` and its unit vector in projected
//! coordinates is the zero vector.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σpᵢ = 1`.
pub const SUM_TOL: f64 = 1e-12;

/// A point of Δⁿ, `n ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbJson", into = "ProbJson")]
pub struct ProbVector(Vec<f64>);

/// A point of Δ̃ⁿ: the first `n − 1` coordinates of a [`ProbVector`].
///
/// The last coordinate is stored rather than recomputed so that
/// `lift ∘ project` is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbJson", into = "ProbJson")]
pub struct ProjectedProb {
    tilde: Vec<f64>,
    last: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbJson {
    n: usize,
    p: Vec<f64>,
}

impl ProbVector {
    /// Validates `p`, renormalizing when the sum defect is within
    /// [`SUM_TOL`].
    pub fn new(mut p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::Invariant(format!(
                "a probability vector needs at least 2 classes, got {}",
                p.len()
            )));
        }
        for v in &mut p {
            if !v.is_finite() || *v < -SUM_TOL || *v > 1.0 + SUM_TOL {
                return Err(Error::Invariant(format!("component {v} outside [0, 1]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Invariant(format!("components sum to {sum}, not 1")));
        }
        if sum != 1.0 {
            p.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// The vertex for class `i` (0-based).
    pub fn vertex(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::Invariant(format!(
                "class {i} out of range for n = {n}"
            )));
        }
        let mut p = vec![0.0; n];
        p[i] = 1.0;
        Self::new(p)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn project(&self) -> ProjectedProb {
        project(self)
    }

    /// Index of the largest component, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl ProjectedProb {
    /// Builds p̃ from its free coordinates; `pₙ = 1 − Σp̃ᵢ`.
    pub fn new(tilde: Vec<f64>) -> Result<Self> {
        if tilde.is_empty() {
            return Err(Error::Invariant("projected vector needs n ≥ 2".into()));
        }
        if let Some(v) = tilde.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Invariant(format!(
                "projected component {v} is negative"
            )));
        }
        let sum: f64 = tilde.iter().sum();
        if sum > 1.0 + SUM_TOL {
            return Err(Error::Invariant(format!(
                "projected components sum to {sum} > 1"
            )));
        }
        Ok(Self {
            tilde,
            last: (1.0 - sum).max(0.0),
        })
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        Self::new(v.iter().copied().collect())
    }

    pub fn barycenter(n: usize) -> Self {
        Self {
            tilde: vec![1.0 / n as f64; n - 1],
            last: 1.0 / n as f64,
        }
    }

    pub fn n(&self) -> usize {
        self.tilde.len() + 1
    }

    /// `ñ = n − 1`.
    pub fn dim(&self) -> usize {
        self.tilde.len()
    }

    pub fn tilde(&self) -> &[f64] {
        &self.tilde
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.tilde)
    }

    /// `pₙ(p̃)`.
    pub fn last(&self) -> f64 {
        self.last
    }

    /// Component `i` of the lifted vector (0-based, `i < n`).
    pub fn full(&self, i: usize) -> f64 {
        if i < self.tilde.len() {
            self.tilde[i]
        } else {
            self.last
        }
    }

    pub fn full_vec(&self) -> Vec<f64> {
        let mut v = self.tilde.clone();
        v.push(self.last);
        v
    }

    /// All lifted components strictly inside (0, 1).
    pub fn is_interior(&self) -> bool {
        self.tilde.iter().all(|&v| v > 0.0) && self.last > 0.0
    }

    pub fn min_component(&self) -> f64 {
        self.tilde.iter().copied().fold(self.last, f64::min)
    }

    pub fn lift(&self) -> ProbVector {
        lift(self)
    }
}

impl TryFrom<ProbJson> for ProbVector {
    type Error = Error;
    fn try_from(j: ProbJson) -> Result<Self> {
        if j.p.len() != j.n {
            return Err(Error::Dimension {
                expected: j.n,
                got: j.p.len(),
            });
        }
        Self::new(j.p)
    }
}

impl From<ProbVector> for ProbJson {
    fn from(p: ProbVector) -> Self {
        ProbJson { n: p.n(), p: p.0 }
    }
}

impl TryFrom<ProbJson> for ProjectedProb {
    type Error = Error;
    fn try_from(j: ProbJson) -> Result<Self> {
        if j.p.len() + 1 != j.n {
            return Err(Error::Dimension {
                expected: j.n.saturating_sub(1),
                got: j.p.len(),
            });
        }
        Self::new(j.p)
    }
}

impl From<ProjectedProb> for ProbJson {
    fn from(p: ProjectedProb) -> Self {
        ProbJson {
            n: p.n(),
            p: p.tilde,
        }
    }
}

/// `eᵢ` in projected coordinates; the last class maps to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitVector {
    index: usize,
    n: usize,
}

impl UnitVector {
    pub fn new(index: usize, n: usize) -> Result<Self> {
        if n < 2 || index >= n {
            return Err(Error::Invariant(format!(
                "class {index} out of range for n = {n}"
            )));
        }
        Ok(Self { index, n })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.n - 1);
        if self.index < self.n - 1 {
            e[self.index] = 1.0;
        }
        e
    }
}

/// Π_Δ: drops the last coordinate.
pub fn project(p: &ProbVector) -> ProjectedProb {
    let (last, tilde) = p.0.split_last().expect("n ≥ 2");
    ProjectedProb {
        tilde: tilde.to_vec(),
        last: *last,
    }
}

/// Π_Δ⁻¹: restores the last coordinate.
pub fn lift(p: &ProjectedProb) -> ProbVector {
    ProbVector(p.full_vec())
}

/// Lattice `pᵢ = margin + (1 − n·margin)·kᵢ/resolution` over all
/// non-negative integer `k` with `Σkᵢ = resolution`, in lexicographic order
/// of `k`, with the barycenter appended when absent.
///
/// Every point has all lifted coordinates `≥ margin`; neighbouring points
/// are `(1 − n·margin)/resolution ≤ 1/resolution` apart per coordinate.
pub fn interior_grid(n: usize, resolution: usize, margin: f64) -> Result<Vec<ProjectedProb>> {
    if n < 2 {
        return Err(Error::Config(format!("grid needs n ≥ 2, got {n}")));
    }
    if resolution == 0 {
        return Err(Error::Config("grid resolution must be positive".into()));
    }
    if !(margin > 0.0 && margin * (n as f64) < 1.0) {
        return Err(Error::Config(format!(
            "margin {margin} infeasible for n = {n}: need 0 < margin < 1/n"
        )));
    }
    let span = 1.0 - n as f64 * margin;
    let mut out = Vec::new();
    let mut k = vec![0usize; n - 1];
    lattice(&mut k, 0, resolution, &mut |k| {
        let tilde: Vec<f64> = k
            .iter()
            .map(|&ki| margin + span * ki as f64 / resolution as f64)
            .collect();
        let kn = resolution - k.iter().sum::<usize>();
        let last = margin + span * kn as f64 / resolution as f64;
        out.push(ProjectedProb { tilde, last });
    });
    let bary = ProjectedProb::barycenter(n);
    let has_bary = out
        .iter()
        .any(|p| p.tilde.iter().all(|v| (v - 1.0 / n as f64).abs() <= 1e-14));
    if !has_bary {
        out.push(bary);
    }
    Ok(out)
}

fn lattice(k: &mut Vec<usize>, pos: usize, remaining: usize, emit: &mut dyn FnMut(&[usize])) {
    if pos == k.len() {
        emit(k);
        return;
    }
    for v in 0..=remaining {
        k[pos] = v;
        lattice(k, pos + 1, remaining - v, emit);
    }
    k[pos] = 0;
}

/// Uniform (flat Dirichlet) sample squeezed into `{p : pᵢ ≥ margin}`.
pub fn sample_interior<R: Rng + ?Sized>(
    n: usize,
    margin: f64,
    rng: &mut R,
) -> Result<ProjectedProb> {
    if n < 2 || !(margin >= 0.0 && margin * (n as f64) < 1.0) {
        return Err(Error::Config(format!(
            "cannot sample n = {n} with margin {margin}"
        )));
    }
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    let span = 1.0 - n as f64 * margin;
    let p: Vec<f64> = e.iter().map(|x| margin + span * x / total).collect();
    Ok(project(&ProbVector::new(p)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_examples() {
        let p = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(project(&p).tilde(), &[0.2, 0.3]);
        let p = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(project(&p).tilde(), &[1.0]);
        let t = 1.0 / 3.0;
        let p = ProbVector::new(vec![t, t, t]).unwrap();
        assert_eq!(project(&p).tilde(), &[t, t]);
    }

    #[test]
    fn lift_examples() {
        let q = ProjectedProb::new(vec![0.2, 0.3]).unwrap();
        assert_eq!(lift(&q).as_slice(), &[0.2, 0.3, 0.5]);
        let q = ProjectedProb::new(vec![0.999, 0.0005]).unwrap();
        let l = lift(&q);
        assert!((l.get(2) - 0.0005).abs() < 1e-15);
        assert!(ProjectedProb::new(vec![]).is_err());
        assert!(ProjectedProb::new(vec![0.7, 0.4]).is_err());
    }

    #[test]
    fn normalization_and_rejection() {
        let p = ProbVector::new(vec![0.5, 0.5 + 5e-13]).unwrap();
        assert_eq!(p.as_slice().iter().sum::<f64>(), 1.0);
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn unit_vector_of_last_class_is_zero() {
        assert_eq!(
            UnitVector::new(2, 3).unwrap().to_dvector(),
            DVector::zeros(2)
        );
        assert_eq!(
            UnitVector::new(0, 3).unwrap().to_dvector(),
            DVector::from_vec(vec![1.0, 0.0])
        );
        assert!(UnitVector::new(3, 3).is_err());
    }

    #[test]
    fn binary_grid_example() {
        let g = interior_grid(2, 4, 0.1).unwrap();
        let xs: Vec<f64> = g.iter().map(|p| p.tilde()[0]).collect();
        let expect = [0.1, 0.3, 0.5, 0.7, 0.9];
        assert_eq!(xs.len(), expect.len());
        for (a, b) in xs.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn coarse_grid_contains_barycenter() {
        let g = interior_grid(3, 1, 0.3).unwrap();
        assert!(g
            .iter()
            .any(|p| p.tilde().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-14)));
    }

    #[test]
    fn infeasible_margin_is_rejected() {
        assert!(matches!(interior_grid(2, 10, 0.6), Err(Error::Config(_))));
        assert!(matches!(interior_grid(3, 10, 0.0), Err(Error::Config(_))));
        assert!(matches!(interior_grid(3, 0, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn grid_points_respect_margin_and_spacing() {
        for (n, res, m) in [(2, 200, 0.02), (3, 60, 0.02), (4, 12, 0.05), (5, 7, 0.01)] {
            let g = interior_grid(n, res, m).unwrap();
            for p in &g {
                assert!(p.is_interior());
                assert!(p.min_component() >= m - 1e-15);
                assert!(p.tilde().iter().sum::<f64>() <= 1.0 - m + 1e-15);
            }
            let step = (1.0 - n as f64 * m) / res as f64;
            assert!(step <= 1.0 / res as f64);
        }
    }

    #[test]
    fn json_carries_class_count() {
        let p = ProjectedProb::new(vec![0.2, 0.3]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"n":3,"p":[0.2,0.3]}"#);
        let back: ProjectedProb = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<ProbVector>(r#"{"n":3,"p":[0.5,0.5]}"#).is_err());
    }

    #[test]
    fn samples_respect_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = sample_interior(4, 0.05, &mut rng).unwrap();
            assert!(p.min_component() >= 0.05 - 1e-12);
        }
    }

    proptest! {
        #[test]
        fn lift_project_round_trip(raw in prop::collection::vec(0.0f64..1.0, 2..7)) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-3;
            let p = ProbVector::new(raw.iter().map(|v| v / total).chain([1e-3 / total]).collect()).unwrap();
            prop_assert_eq!(lift(&project(&p)), p.clone());
            let q = project(&p);
            prop_assert_eq!(project(&lift(&q)), q);
        }
    }
}
