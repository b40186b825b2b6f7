//! A fast self-check of the library's core invariants, run by `pcl verify`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::composite::CompositeLoss;
use crate::convexity::{check_canonical, region_bounds, Grid, Verdict};
use crate::designer::{loss_from_u, UFunction};
use crate::error::Result;
use crate::links::{
    combine, CanonicalLink, IdentityLink, Link, LinkFamily, PhiLink, FAMILY_MONOTONICITY_TRIALS,
};
use crate::numerics::{central_gradient, central_hessian, relative_error, ToleranceConfig};
use crate::proper_loss::{
    verify_properness, LinearScore, LogLoss, ProperLoss, SquareLoss, SquareScaling,
};
use crate::simplex::{sample_interior, ProjectedProb};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

const PROPERNESS_TRIALS: usize = 200;
const GRADIENT_POINTS: usize = 10;
const HESSIAN_POINTS: usize = 4;

fn outcome(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn composites(cfg: &ToleranceConfig) -> Result<Vec<CompositeLoss>> {
    let log: Arc<dyn ProperLoss> = Arc::new(LogLoss::new(3)?);
    let brier: Arc<dyn ProperLoss> = Arc::new(SquareLoss::new(3, SquareScaling::PaperBrier)?);
    let family = LinkFamily::new(
        vec![Arc::new(PhiLink::exp(3)?), Arc::new(PhiLink::squared(3)?)],
        vec![0.5, 0.5],
        FAMILY_MONOTONICITY_TRIALS,
        cfg,
    )?;
    let pairs: Vec<(Arc<dyn ProperLoss>, Arc<dyn Link>)> = vec![
        (log.clone(), Arc::new(IdentityLink::new(3)?)),
        (log.clone(), Arc::new(CanonicalLink::new(log.clone(), cfg)?)),
        (brier.clone(), Arc::new(PhiLink::squared(3)?)),
        (brier, Arc::new(PhiLink::exp(3)?)),
        (log, Arc::new(combine(&family)?)),
    ];
    pairs
        .into_iter()
        .map(|(loss, link)| CompositeLoss::new(loss, link, cfg))
        .collect()
}

fn properness_checks(cfg: &ToleranceConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let losses: Vec<Box<dyn ProperLoss>> = vec![
        Box::new(LogLoss::new(3)?),
        Box::new(SquareLoss::new(3, SquareScaling::PaperBrier)?),
        Box::new(SquareLoss::new(2, SquareScaling::UnitWeight)?),
        Box::new(loss_from_u(UFunction::Zero, 1.0, cfg)?),
    ];
    let mut out = Vec::new();
    for loss in &losses {
        let r = verify_properness(loss.as_ref(), PROPERNESS_TRIALS, seed)?;
        out.push(outcome(
            format!("properness {}", r.loss),
            r.passed,
            format!("max violation {:e}", r.max_violation),
        ));
    }
    let broken = verify_properness(&LinearScore::new(3)?, PROPERNESS_TRIALS, seed)?;
    out.push(outcome(
        "improper control is rejected",
        !broken.passed && broken.max_violation > 0.0,
        format!("max violation {:e}", broken.max_violation),
    ));
    Ok(out)
}

fn derivative_checks(cfg: &ToleranceConfig, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for cl in composites(cfg)? {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut grad_err, mut hess_err) = (0.0f64, 0.0f64);
        for k in 0..GRADIENT_POINTS {
            let v = cl.chart(&sample_interior(cl.n(), 0.05, &mut rng)?)?;
            for i in 0..cl.n() {
                let g = cl.gradient(&v, i)?;
                let fd = central_gradient(|x| cl.partial(x, i).unwrap_or(f64::NAN), &v, cfg)?;
                grad_err = grad_err.max(relative_error(g.as_slice(), fd.as_slice(), 1.0));
                if k < HESSIAN_POINTS {
                    let h = cl.hessian(&v, i)?;
                    let fd = central_hessian(|x| cl.partial(x, i).unwrap_or(f64::NAN), &v, cfg)?;
                    hess_err = hess_err.max(relative_error(
                        h.as_matrix().as_slice(),
                        fd.as_matrix().as_slice(),
                        1.0,
                    ));
                }
            }
        }
        out.push(outcome(
            format!("gradient identity {}", cl.name()),
            grad_err <= 1e-6,
            format!("max relative error {grad_err:e}"),
        ));
        out.push(outcome(
            format!("hessian identity {}", cl.name()),
            hess_err <= 1e-3,
            format!("max relative error {hess_err:e}"),
        ));
    }
    Ok(out)
}

fn geometry_checks(cfg: &ToleranceConfig) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for loss in [
        Box::new(LogLoss::new(3)?) as Box<dyn ProperLoss>,
        Box::new(SquareLoss::new(3, SquareScaling::PaperBrier)?),
    ] {
        let r = check_canonical(loss.as_ref(), 0.0, &Grid::default_for(3)?, cfg)?;
        let worst = r.min_shifted_eigenvalue;
        out.push(outcome(
            format!("canonical convexity {}", loss.name()),
            r.verdict == Verdict::CertifiedOnGrid && worst >= -1e-10,
            format!("min eigenvalue {worst:e}"),
        ));
    }
    let (lo, hi) = region_bounds(0.75, 0.0);
    out.push(outcome(
        "binary region at p = 3/4",
        (lo - 2.0 / 3.0).abs() <= 1e-12 && (hi - 2.0).abs() <= 1e-12,
        format!("({lo}, {hi})"),
    ));

    let logit = CompositeLoss::new(
        Arc::new(LogLoss::new(2)?),
        Arc::new(CanonicalLink::new(Arc::new(LogLoss::new(2)?), cfg)?),
        cfg,
    )?;
    let mut err = 0.0f64;
    for k in -5..=5 {
        let v = DVector::from_element(1, 0.6 * k as f64);
        let s = 1.0 / (1.0 + (-v[0]).exp());
        let g = logit.gradient(&v, 0)?[0];
        let h = logit.hessian(&v, 0)?.as_matrix()[(0, 0)];
        err = err
            .max((g - (s - 1.0)).abs())
            .max((h - s * (1.0 - s)).abs());
    }
    out.push(outcome(
        "binary log loss under logit",
        err <= 1e-10,
        format!("max deviation {err:e}"),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut round_trip = 0.0f64;
    for link in [PhiLink::exp(3)?, PhiLink::squared(3)?] {
        for _ in 0..20 {
            let p: ProjectedProb = sample_interior(3, 0.01, &mut rng)?;
            let back = link.inverse(&link.forward(&p, cfg)?)?;
            round_trip = round_trip.max(relative_error(back.tilde(), p.tilde(), 1.0));
        }
    }
    out.push(outcome(
        "phi-link round trip",
        round_trip <= 1e-10,
        format!("max error {round_trip:e}"),
    ));
    Ok(out)
}

/// Runs every check. Errors inside a group surface as a failed outcome.
pub fn run_invariant_suite(cfg: &ToleranceConfig, seed: u64) -> VerifyReport {
    let groups: [(&str, Result<Vec<CheckOutcome>>); 3] = [
        ("properness", properness_checks(cfg, seed)),
        ("derivatives", derivative_checks(cfg, seed)),
        ("geometry", geometry_checks(cfg)),
    ];
    let mut checks = Vec::new();
    for (group, result) in groups {
        match result {
            Ok(c) => checks.extend(c),
            Err(e) => checks.push(outcome(group, false, e.to_string())),
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport {
        seed,
        checks,
        passed,
    }
}
