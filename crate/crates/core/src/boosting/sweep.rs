use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::data::gen_gaussian_mixture;
use super::train::{train_traced, BoostConfig};
use crate::composite::CompositeLoss;
use crate::error::Result;
use crate::links::{combine, Link, LinkFamily, PhiLink, FAMILY_MONOTONICITY_TRIALS};
use crate::numerics::ToleranceConfig;
use crate::proper_loss::LogLoss;
use crate::spec::fmt9;

/// Log loss composed with `α·softmax⁻¹ + (1−α)·ψ_sq⁻¹` for three classes.
pub fn alpha_composite(alpha: f64, tol: &ToleranceConfig) -> Result<CompositeLoss> {
    let basis: Vec<Arc<dyn Link>> =
        vec![Arc::new(PhiLink::exp(3)?), Arc::new(PhiLink::squared(3)?)];
    let family = LinkFamily::new(
        basis,
        vec![alpha, 1.0 - alpha],
        FAMILY_MONOTONICITY_TRIALS,
        tol,
    )?;
    CompositeLoss::new(Arc::new(LogLoss::new(3)?), Arc::new(combine(&family)?), tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub round: usize,
    pub train_risk: f64,
    pub test_accuracy: f64,
    pub clip_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub alpha: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,round,train_risk,test_accuracy,clip_count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt9(r.alpha),
                r.round,
                fmt9(r.train_risk),
                fmt9(r.test_accuracy),
                r.clip_count
            ));
        }
        out
    }

    /// Rows of one `α`, in round order.
    pub fn trajectory(&self, alpha: f64) -> Vec<SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.alpha == alpha)
            .copied()
            .collect()
    }

    /// Test accuracy after the last round of every `α` that trained.
    pub fn final_accuracies(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some(last) if last.0 == r.alpha => last.1 = r.test_accuracy,
                _ => out.push((r.alpha, r.test_accuracy)),
            }
        }
        out
    }
}

/// Trains one ensemble per `α` on the same seeded data. Alphas run in
/// parallel; rows keep the order of `cfg.alphas`. A failing `α` is recorded
/// and the sweep continues.
pub fn alpha_sweep(cfg: &BoostConfig, tol: &ToleranceConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let (train_set, test_set) = gen_gaussian_mixture(cfg.seed, cfg.m_train, cfg.m_test)?;
    let runs: Vec<(f64, Result<Vec<SweepRow>>)> = cfg
        .alphas
        .par_iter()
        .map(|&alpha| {
            let run = alpha_composite(alpha, tol)
                .and_then(|cl| train_traced(&cl, &train_set, Some(&test_set), cfg))
                .map(|(_, trace)| {
                    trace
                        .into_iter()
                        .map(|t| SweepRow {
                            alpha,
                            round: t.round,
                            train_risk: t.train_risk,
                            test_accuracy: t.test_accuracy.unwrap_or(f64::NAN),
                            clip_count: t.clip_count,
                        })
                        .collect()
                });
            (alpha, run)
        })
        .collect();
    let mut table = SweepTable {
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (alpha, run) in runs {
        match run {
            Ok(rows) => table.rows.extend(rows),
            Err(e) => table.failures.push(SweepFailure {
                alpha,
                error: e.to_string(),
            }),
        }
    }
    Ok(table)
}
