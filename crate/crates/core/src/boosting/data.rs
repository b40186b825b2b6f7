use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Means of the three unit-covariance Gaussian classes.
pub const CENTERS: [[f64; 2]; 3] = [[0.0, 0.0], [2.0, 2.0], [-2.0, 2.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub features: Vec<[f64; 2]>,
    /// Class indices in `0..n_classes`.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        features: Vec<[f64; 2]>,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Dimension {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Labels cycle `0, 1, 2, 0, …` so every class gets exactly `m/3` points.
fn draw(rng: &mut ChaCha8Rng, m: usize, split: Split) -> Dataset {
    let mut features = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for j in 0..m {
        let y = j % 3;
        let [cx, cy] = CENTERS[y];
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        features.push([cx + dx, cy + dy]);
        labels.push(y);
    }
    Dataset {
        features,
        labels,
        n_classes: 3,
        split,
    }
}

/// Balanced train and test draws from the three-Gaussian task, train first
/// from one seeded stream.
pub fn gen_gaussian_mixture(
    seed: u64,
    m_train: usize,
    m_test: usize,
) -> Result<(Dataset, Dataset)> {
    if m_train % 3 != 0 || m_test % 3 != 0 {
        return Err(Error::Config(format!(
            "split sizes must be divisible by 3, got {m_train} and {m_test}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = draw(&mut rng, m_train, Split::Train);
    let test = draw(&mut rng, m_test, Split::Test);
    Ok((train, test))
}

/// Index of the closest center, lowest index on ties. This is the Bayes rule
/// for equal priors and identity covariances.
pub fn nearest_center(x: [f64; 2]) -> usize {
    let d = |c: [f64; 2]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    let mut best = 0;
    for k in 1..CENTERS.len() {
        if d(CENTERS[k]) < d(CENTERS[best]) {
            best = k;
        }
    }
    best
}

/// Monte Carlo estimate of the Bayes accuracy of the three-Gaussian task.
pub fn bayes_accuracy_mc(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = draw(&mut rng, samples, Split::Test);
    nearest_center_accuracy(&data)
}

pub fn nearest_center_accuracy(data: &Dataset) -> f64 {
    let hits = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(x, y)| nearest_center(**x) == **y)
        .count();
    hits as f64 / data.len().max(1) as f64
}
