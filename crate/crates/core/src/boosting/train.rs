use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::composite::CompositeLoss;
use crate::error::{Error, Result};
use crate::links::LinkDomain;

/// Distance kept from the upper bound of a boxed prediction space.
pub const CLIP_MARGIN: f64 = 1e-6;

/// Risk increase tolerated before a step is halved.
pub const RISK_SLACK: f64 = 1e-9;

/// Step halvings tried before a stage falls back to a zero step.
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub m_train: usize,
    pub m_test: usize,
    /// Candidate split thresholds per feature.
    pub thresholds: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            rounds: 200,
            learning_rate: 0.1,
            seed: 1,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            m_train: 4800,
            m_test: 1200,
            thresholds: 64,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.thresholds == 0 {
            return Err(Error::Config(
                "need at least one candidate threshold".into(),
            ));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
        }
        Ok(())
    }
}

/// A two-leaf split on one feature with a vector value per leaf.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Stump {
    pub fn output(&self, x: [f64; 2]) -> &[f64] {
        if x[self.feature] <= self.threshold {
            &self.left
        } else {
            &self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    pub stump: Stump,
    /// Learning rate after step halving; 0 for a rejected stage.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub composite: String,
    pub v0: Vec<f64>,
    pub stages: Vec<Stage>,
    /// Upper bound enforced on ambient predictions after every stage.
    pub clip_limit: Option<f64>,
    /// Round at which training stopped early, and why.
    pub stopped: Option<(usize, String)>,
}

/// Training trace entry after `round` stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub train_risk: f64,
    pub test_accuracy: Option<f64>,
    /// Cumulative clip events on the training set.
    pub clip_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// Upper bound on ambient prediction coordinates, if the link has one.
fn clip_limit(cl: &CompositeLoss) -> Result<Option<f64>> {
    match cl.link().domain() {
        LinkDomain::ZeroSum { upper } => Ok(upper.map(|u| u - CLIP_MARGIN)),
        LinkDomain::CanonicalImage => Ok(None),
        other => Err(Error::Unsupported(format!(
            "boosting needs an additive prediction space, {} has {other:?}",
            cl.link().name()
        ))),
    }
}

/// Scales `v` towards 0 until every ambient coordinate is at most `limit`.
/// Returns whether `v` changed.
fn clip(v: &mut DVector<f64>, limit: Option<f64>) -> bool {
    let Some(limit) = limit else { return false };
    let last = -v.sum();
    let top = v.iter().copied().fold(last, f64::max);
    if top <= limit {
        return false;
    }
    *v *= limit / top;
    true
}

/// Applies one stage to the predictions of `xs`, clipping afterwards.
fn advance(
    vs: &mut [DVector<f64>],
    xs: &[[f64; 2]],
    stump: &Stump,
    rate: f64,
    limit: Option<f64>,
) -> usize {
    let mut clips = 0;
    for (v, x) in vs.iter_mut().zip(xs) {
        for (vk, s) in v.iter_mut().zip(stump.output(*x)) {
            *vk += rate * s;
        }
        clips += clip(v, limit) as usize;
    }
    clips
}

/// Mean of `ℓ_y(v)`, summed in example order.
fn mean_loss(cl: &CompositeLoss, vs: &[DVector<f64>], labels: &[usize]) -> Result<f64> {
    let losses: Vec<f64> = vs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(v, &y)| cl.partial(v, y))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

fn accuracy(cl: &CompositeLoss, vs: &[DVector<f64>], labels: &[usize]) -> Result<f64> {
    let hits: Vec<bool> = vs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(v, &y)| Ok(cl.link().inverse(v)?.lift().argmax() == y))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / hits.len().max(1) as f64)
}

/// Candidate thresholds: `count` evenly spaced order statistics of each
/// feature, deduplicated.
fn thresholds(data: &Dataset, count: usize) -> [Vec<f64>; 2] {
    let m = data.len();
    std::array::from_fn(|f| {
        let mut xs: Vec<f64> = data.features.iter().map(|x| x[f]).collect();
        xs.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = (1..=count)
            .map(|k| xs[(k * m / (count + 1)).min(m - 1)])
            .collect();
        out.dedup();
        out
    })
}

/// Least-squares vector stump for targets `r`: maximizes
/// `‖S_L‖²/n_L + ‖S_R‖²/n_R` over candidate splits, first maximum in
/// (feature, threshold) order; leaves are the per-side mean targets.
fn fit_stump(
    data: &Dataset,
    order: &[Vec<usize>; 2],
    cands: &[Vec<f64>; 2],
    r: &[DVector<f64>],
) -> Option<Stump> {
    let d = r[0].len();
    let m = data.len();
    let total = r.iter().fold(DVector::zeros(d), |acc, x| acc + x);
    let mut best: Option<(f64, Stump)> = None;
    for f in 0..2 {
        let idx = &order[f];
        let mut prefix = DVector::zeros(d);
        let mut taken = 0;
        for &thr in &cands[f] {
            while taken < m && data.features[idx[taken]][f] <= thr {
                prefix += &r[idx[taken]];
                taken += 1;
            }
            if taken == 0 || taken == m {
                continue;
            }
            let (nl, nr) = (taken as f64, (m - taken) as f64);
            let rest = &total - &prefix;
            let score = prefix.norm_squared() / nl + rest.norm_squared() / nr;
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((
                    score,
                    Stump {
                        feature: f,
                        threshold: thr,
                        left: (&prefix / nl).as_slice().to_vec(),
                        right: (rest / nr).as_slice().to_vec(),
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
}

/// Functional gradient boosting of `cl` with one vector stump per round.
pub fn train(cl: &CompositeLoss, data: &Dataset, cfg: &BoostConfig) -> Result<Ensemble> {
    Ok(train_traced(cl, data, None, cfg)?.0)
}

/// [`train`] with a per-round trace, including test accuracy when a test
/// split is given. The trace starts at round 0 (the initial predictions).
pub fn train_traced(
    cl: &CompositeLoss,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &BoostConfig,
) -> Result<(Ensemble, Vec<RoundRecord>)> {
    cfg.validate()?;
    if data.n_classes != cl.n() || test.is_some_and(|t| t.n_classes != cl.n()) {
        return Err(Error::Dimension {
            expected: cl.n(),
            got: data.n_classes,
        });
    }
    if data.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let limit = clip_limit(cl)?;
    let d = cl.n() - 1;
    let v0 = DVector::zeros(d);
    let mut vs = vec![v0.clone(); data.len()];
    let mut test_vs = test.map(|t| vec![v0.clone(); t.len()]);
    let cands = thresholds(data, cfg.thresholds);
    let order: [Vec<usize>; 2] = std::array::from_fn(|f| {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.sort_by(|&a, &b| {
            data.features[a][f]
                .total_cmp(&data.features[b][f])
                .then(a.cmp(&b))
        });
        idx
    });
    let test_acc = |tv: &Option<Vec<DVector<f64>>>| -> Result<Option<f64>> {
        match (test, tv) {
            (Some(t), Some(v)) => Ok(Some(accuracy(cl, v, &t.labels)?)),
            _ => Ok(None),
        }
    };
    let mut risk = mean_loss(cl, &vs, &data.labels)?;
    let mut clips = 0;
    let mut trace = vec![RoundRecord {
        round: 0,
        train_risk: risk,
        test_accuracy: test_acc(&test_vs)?,
        clip_count: 0,
    }];
    let mut ensemble = Ensemble {
        composite: cl.name(),
        v0: v0.as_slice().to_vec(),
        stages: Vec::new(),
        clip_limit: limit,
        stopped: None,
    };
    for round in 1..=cfg.rounds {
        let targets: Vec<DVector<f64>> = vs
            .par_iter()
            .zip(data.labels.par_iter())
            .map(|(v, &y)| cl.gradient(v, y).map(|g| -g))
            .collect::<Result<_>>()?;
        if targets.iter().all(|t| t.amax() == 0.0) {
            ensemble.stopped = Some((round, "all functional gradients vanish".into()));
            break;
        }
        let Some(stump) = fit_stump(data, &order, &cands, &targets) else {
            ensemble.stopped = Some((round, "no admissible split".into()));
            break;
        };
        let mut rate = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = vs.clone();
            let c = advance(&mut trial, &data.features, &stump, rate, limit);
            match mean_loss(cl, &trial, &data.labels) {
                Ok(r) if r.is_finite() && r <= risk + RISK_SLACK => {
                    accepted = Some((trial, r, c));
                    break;
                }
                _ => rate *= 0.5,
            }
        }
        let Some((next, r, c)) = accepted else {
            ensemble.stages.push(Stage { stump, rate: 0.0 });
            ensemble.stopped = Some((round, "no step size decreased the risk".into()));
            trace.push(RoundRecord {
                round,
                train_risk: risk,
                test_accuracy: test_acc(&test_vs)?,
                clip_count: clips,
            });
            break;
        };
        vs = next;
        risk = r;
        clips += c;
        if let (Some(t), Some(tv)) = (test, test_vs.as_mut()) {
            advance(tv, &t.features, &stump, rate, limit);
        }
        ensemble.stages.push(Stage { stump, rate });
        trace.push(RoundRecord {
            round,
            train_risk: risk,
            test_accuracy: test_acc(&test_vs)?,
            clip_count: clips,
        });
    }
    Ok((ensemble, trace))
}

impl Ensemble {
    /// Prediction for `x`, clipping after every stage as in training.
    pub fn predict(&self, x: [f64; 2]) -> DVector<f64> {
        let mut v = DVector::from_column_slice(&self.v0);
        for s in &self.stages {
            for (vk, o) in v.iter_mut().zip(s.stump.output(x)) {
                *vk += s.rate * o;
            }
            clip(&mut v, self.clip_limit);
        }
        v
    }
}

/// Accuracy of `argmax ψ⁻¹(v(x))` (lowest class on ties) and mean loss.
pub fn evaluate(e: &Ensemble, cl: &CompositeLoss, data: &Dataset) -> Result<Evaluation> {
    if e.composite != cl.name() {
        return Err(Error::Misuse(format!(
            "ensemble was trained for {}, not {}",
            e.composite,
            cl.name()
        )));
    }
    let vs: Vec<DVector<f64>> = data.features.par_iter().map(|x| e.predict(*x)).collect();
    Ok(Evaluation {
        accuracy: accuracy(cl, &vs, &data.labels)?,
        mean_loss: mean_loss(cl, &vs, &data.labels)?,
    })
}
