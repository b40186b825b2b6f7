//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Oracles (finite differences, closed forms) are written
//! here independently of the library's own numerics.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use proper_composite::boosting::{alpha_sweep, bayes_accuracy_mc, BoostConfig, RISK_SLACK};
use proper_composite::composite::CompositeLoss;
use proper_composite::convexity::{
    check_hessian_criterion, check_theorem5, condition_number_bound, region_boundary, region_check,
    Grid, Verdict,
};
use proper_composite::designer::{design_loss, DesignSpec, UFunction};
use proper_composite::links::{
    combine, CanonicalLink, IdentityLink, Link, LinkFamily, PhiLink, PowerLink,
    FAMILY_MONOTONICITY_TRIALS,
};
use proper_composite::numerics::ToleranceConfig;
use proper_composite::proper_loss::{
    verify_properness, BinaryWeight, LinearScore, LogLoss, ProperLoss, SquareLoss, SquareScaling,
    WeightSpec,
};
use proper_composite::simplex::{sample_interior, ProjectedProb};

type Outcome = Result<String, String>;

fn cfg() -> ToleranceConfig {
    ToleranceConfig::default()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)`.
fn rel(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    num / b.iter().map(|y| y.abs()).fold(floor, f64::max)
}

fn fd_gradient(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn fd_hessian(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> Vec<f64> {
    let d = x.len();
    let mut out = vec![0.0; d * d];
    let at = |dj: (usize, f64), dk: (usize, f64)| {
        let mut y = x.clone();
        y[dj.0] += dj.1;
        y[dk.0] += dk.1;
        f(&y)
    };
    for j in 0..d {
        for k in 0..d {
            out[j + d * k] = (at((j, h), (k, h)) - at((j, h), (k, -h)) - at((j, -h), (k, h))
                + at((j, -h), (k, -h)))
                / (4.0 * h * h);
        }
    }
    out
}

fn mixture(n: usize, alpha: f64) -> proper_composite::Result<Arc<dyn Link>> {
    let family = LinkFamily::new(
        vec![Arc::new(PhiLink::exp(n)?), Arc::new(PhiLink::squared(n)?)],
        vec![alpha, 1.0 - alpha],
        FAMILY_MONOTONICITY_TRIALS,
        &cfg(),
    )?;
    Ok(Arc::new(combine(&family)?))
}

/// Every (loss, link) pair of the derivative criteria.
fn derivative_suite() -> proper_composite::Result<Vec<CompositeLoss>> {
    let mut out = Vec::new();
    for n in [2, 3, 5] {
        let mut losses: Vec<Arc<dyn ProperLoss>> = vec![
            Arc::new(LogLoss::new(n)?),
            Arc::new(SquareLoss::new(n, SquareScaling::PaperBrier)?),
        ];
        if n == 2 {
            losses.push(Arc::new(SquareLoss::new(2, SquareScaling::UnitWeight)?));
        }
        for loss in losses {
            let links: Vec<Arc<dyn Link>> = vec![
                Arc::new(IdentityLink::new(n)?),
                Arc::new(CanonicalLink::new(loss.clone(), &cfg())?),
                Arc::new(PhiLink::exp(n)?),
                Arc::new(PhiLink::squared(n)?),
                mixture(n, 0.5)?,
            ];
            for link in links {
                out.push(CompositeLoss::new(loss.clone(), link, &cfg())?);
            }
        }
    }
    Ok(out)
}

fn sample_points(
    cl: &CompositeLoss,
    count: usize,
    seed: u64,
) -> proper_composite::Result<Vec<DVector<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| cl.chart(&sample_interior(cl.n(), 0.02, &mut rng)?))
        .collect()
}

fn gradient_identity() -> Outcome {
    let start = Instant::now();
    let suite = derivative_suite().map_err(err)?;
    let mut worst = (0.0f64, String::new());
    for (k, cl) in suite.iter().enumerate() {
        for v in sample_points(cl, 100, 100 + k as u64).map_err(err)? {
            for i in 0..cl.n() {
                let g = cl.gradient(&v, i).map_err(err)?;
                let f = |x: &DVector<f64>| cl.partial(x, i).unwrap_or(f64::NAN);
                let e = rel(g.as_slice(), &fd_gradient(&f, &v, 1e-6), 1e-3);
                if !(e <= worst.0) {
                    worst = (e, cl.name());
                }
            }
        }
    }
    let t = start.elapsed();
    let detail = format!(
        "{} composites x 100 points, max relative error {:.2e} ({}), {:.1?}",
        suite.len(),
        worst.0,
        worst.1,
        t
    );
    ensure(
        worst.0 <= 1e-6 && t <= Duration::from_secs(60),
        detail.clone(),
    )?;
    Ok(detail)
}

fn hessian_identity() -> Outcome {
    let start = Instant::now();
    let suite = derivative_suite().map_err(err)?;
    let mut worst = (0.0f64, String::new());
    for (k, cl) in suite.iter().enumerate() {
        for v in sample_points(cl, 50, 200 + k as u64).map_err(err)? {
            for i in 0..cl.n() {
                let h = cl.hessian(&v, i).map_err(err)?;
                let f = |x: &DVector<f64>| cl.partial(x, i).unwrap_or(f64::NAN);
                let e = rel(h.as_matrix().as_slice(), &fd_hessian(&f, &v, 1e-4), 1e-3);
                if !(e <= worst.0) {
                    worst = (e, cl.name());
                }
            }
        }
    }
    let t = start.elapsed();
    let detail = format!(
        "{} composites x 50 points, max relative error {:.2e} ({}), {:.1?}",
        suite.len(),
        worst.0,
        worst.1,
        t
    );
    ensure(
        worst.0 <= 1e-3 && t <= Duration::from_secs(120),
        detail.clone(),
    )?;
    Ok(detail)
}

fn logit_signs() -> Outcome {
    let log2: Arc<dyn ProperLoss> = Arc::new(LogLoss::new(2).map_err(err)?);
    let link = CanonicalLink::new(log2.clone(), &cfg()).map_err(err)?;
    let cl = CompositeLoss::new(log2, Arc::new(link), &cfg()).map_err(err)?;
    let mut worst = 0.0f64;
    for k in 0..20 {
        let x = -6.0 + 12.0 * k as f64 / 19.0;
        let v = DVector::from_element(1, x);
        let s = 1.0 / (1.0 + (-x).exp());
        let g = cl.gradient(&v, 0).map_err(err)?[0];
        let h = cl.hessian(&v, 0).map_err(err)?.as_matrix()[(0, 0)];
        let fast = cl.canonical_fast(&v, 0).map_err(err)?;
        for d in [
            g - (s - 1.0),
            h - s * (1.0 - s),
            fast.gradient[0] - (s - 1.0),
            fast.hessian.as_matrix()[(0, 0)] - s * (1.0 - s),
        ] {
            worst = worst.max(d.abs());
        }
    }
    let detail = format!("20 points, max deviation {worst:.2e}");
    ensure(worst <= 1e-10, detail.clone())?;
    Ok(detail)
}

fn canonical_convexity() -> Outcome {
    let mut losses: Vec<Arc<dyn ProperLoss>> = Vec::new();
    for n in [2, 3, 5] {
        losses.push(Arc::new(LogLoss::new(n).map_err(err)?));
        losses.push(Arc::new(
            SquareLoss::new(n, SquareScaling::PaperBrier).map_err(err)?,
        ));
    }
    losses.push(Arc::new(
        SquareLoss::new(2, SquareScaling::UnitWeight).map_err(err)?,
    ));
    let mut lines = Vec::new();
    let mut ok = true;
    for loss in losses {
        let link = CanonicalLink::new(loss.clone(), &cfg()).map_err(err)?;
        let cl = CompositeLoss::new(loss, Arc::new(link), &cfg()).map_err(err)?;
        let grid = Grid::default_for(cl.n()).map_err(err)?;
        let r = check_hessian_criterion(&cl, 0.0, &grid).map_err(err)?;
        let good = r.verdict == Verdict::CertifiedOnGrid
            && r.min_shifted_eigenvalue >= -1e-10
            && r.skipped == 0;
        ok &= good;
        lines.push(format!("{} {:.3e}", cl.name(), r.min_shifted_eigenvalue));
    }
    let detail = format!("min eigenvalues: {}", lines.join(", "));
    ensure(ok, detail.clone())?;
    Ok(detail)
}

fn checker_equivalence() -> Outcome {
    let c = cfg();
    let log =
        |n| -> proper_composite::Result<Arc<dyn ProperLoss>> { Ok(Arc::new(LogLoss::new(n)?)) };
    let brier = |n| -> proper_composite::Result<Arc<dyn ProperLoss>> {
        Ok(Arc::new(SquareLoss::new(n, SquareScaling::PaperBrier)?))
    };
    let canon = |l: &Arc<dyn ProperLoss>| -> proper_composite::Result<Arc<dyn Link>> {
        Ok(Arc::new(CanonicalLink::new(l.clone(), &c)?))
    };
    let build = || -> proper_composite::Result<Vec<(Arc<dyn ProperLoss>, Arc<dyn Link>, f64)>> {
        let (l2, l3, l5, b2, b3) = (log(2)?, log(3)?, log(5)?, brier(2)?, brier(3)?);
        let unit: Arc<dyn ProperLoss> = Arc::new(SquareLoss::new(2, SquareScaling::UnitWeight)?);
        Ok(vec![
            (l3.clone(), canon(&l3)?, 0.0),
            (l3.clone(), Arc::new(IdentityLink::new(3)?), 0.0),
            (l3.clone(), Arc::new(PhiLink::exp(3)?), 0.0),
            (l3.clone(), mixture(3, 0.5)?, 0.0),
            (b3.clone(), Arc::new(PhiLink::squared(3)?), 0.0),
            (b3.clone(), Arc::new(PhiLink::exp(3)?), 0.0),
            (b3.clone(), canon(&b3)?, 0.1),
            (b3.clone(), canon(&b3)?, 0.4),
            (l2.clone(), Arc::new(IdentityLink::new(2)?), 1.0),
            (l2.clone(), Arc::new(PowerLink::new(3.0)?), 0.0),
            (b2.clone(), Arc::new(IdentityLink::new(2)?), 0.5),
            (unit.clone(), canon(&unit)?, 0.5),
            (l5.clone(), canon(&l5)?, 0.0),
            (l5, Arc::new(PhiLink::squared(5)?), 0.0),
        ])
    };
    let cases = build().map_err(err)?;
    let (mut worst, mut refuted, mut agree) = (0.0f64, 0, true);
    for (loss, link, modulus) in &cases {
        let cl = CompositeLoss::new(loss.clone(), link.clone(), &c).map_err(err)?;
        let grid = Grid::default_for(cl.n()).map_err(err)?;
        let h = check_hessian_criterion(&cl, *modulus, &grid).map_err(err)?;
        let t = check_theorem5(&cl, *modulus, &grid).map_err(err)?;
        agree &= h.verdict == t.verdict;
        worst = worst.max((h.min_shifted_eigenvalue - t.min_shifted_eigenvalue).abs());
        refuted += (h.verdict == Verdict::Refuted) as usize;
    }
    let detail = format!(
        "{} cases, {} refuted, verdicts agree: {}, max eigenvalue gap {:.2e}",
        cases.len(),
        refuted,
        agree,
        worst
    );
    ensure(
        agree && refuted >= 1 && cases.len() >= 12 && worst <= 1e-6,
        detail.clone(),
    )?;
    Ok(detail)
}

fn binary_region() -> Outcome {
    let c0 = region_boundary(0.0, 200).map_err(err)?;
    let at = c0
        .samples
        .iter()
        .find(|s| (s.p - 0.75).abs() < 1e-12)
        .ok_or("no sample at p = 0.75")?;
    let point_err = (at.lower - 2.0 / 3.0).abs().max((at.upper - 2.0).abs());

    let mods = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let curves: Vec<_> = mods
        .iter()
        .map(|&c| region_boundary(c, 200))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let mut nested = true;
    for pair in curves.windows(2) {
        for (outer, inner) in pair[0].samples.iter().zip(&pair[1].samples) {
            nested &= outer.lower <= inner.lower + 1e-12 && inner.upper <= outer.upper + 1e-12;
        }
    }

    let w = BinaryWeight::from_spec(&WeightSpec::Log { scale: 0.25 }, &cfg()).map_err(err)?;
    let ps: Vec<f64> = (1..=200).map(|k| k as f64 / 201.0).collect();
    let grid = Grid::binary(&ps).map_err(err)?;
    let pass0 = region_check(&w, 0.0, &grid, &cfg()).map_err(err)?;
    let fail = region_check(&w, 0.8, &Grid::binary(&[0.75]).map_err(err)?, &cfg()).map_err(err)?;
    let witness = fail
        .witness
        .as_ref()
        .map(|w| w.point[0])
        .unwrap_or(f64::NAN);
    let detail = format!(
        "c=0 band at 3/4 off by {point_err:.1e}; nested: {nested}; c=0 on {} points: {:?}; c=0.8: {:?} at p={witness}",
        grid.len(),
        pass0.verdict,
        fail.verdict
    );
    ensure(
        point_err <= 1e-9
            && nested
            && grid.len() == 200
            && pass0.verdict == Verdict::PassedNecessary
            && fail.verdict == Verdict::Refuted
            && (witness - 0.75).abs() < 1e-12,
        detail.clone(),
    )?;
    Ok(detail)
}

fn designer_round_trip() -> Outcome {
    let c = cfg();
    let grid = Grid::default_for(2).map_err(err)?;
    let unit = design_loss(
        &DesignSpec::new(UFunction::Zero, 1.0, 1e-7).map_err(err)?,
        &grid,
        &c,
    )
    .map_err(err)?;
    let mut square_err = 0.0f64;
    for k in 0..=98 {
        let p = 0.01 + 0.01 * k as f64;
        let pp = ProjectedProb::new(vec![p]).map_err(err)?;
        square_err = square_err
            .max((unit.loss.partial(0, &pp) - (1.0 - p).powi(2) / 2.0).abs())
            .max((unit.loss.partial(1, &pp) - p * p / 2.0).abs());
    }
    let log = design_loss(
        &DesignSpec::new(UFunction::Log, 0.0, 1e-7).map_err(err)?,
        &grid,
        &c,
    )
    .map_err(err)?;
    let mut weight_err = 0.0f64;
    for k in 0..=98 {
        let p = 0.01 + 0.01 * k as f64;
        weight_err = weight_err.max((log.weight.eval(p) - 1.0 / (4.0 * p * (1.0 - p))).abs());
    }
    let mut ok = square_err <= 1e-5 && weight_err <= 1e-4;
    let mut checks = Vec::new();
    for d in [&unit, &log] {
        let prop = verify_properness(&d.loss, 1000, 7).map_err(err)?;
        ok &= prop.passed && d.report.verdict == Verdict::CertifiedOnGrid;
        checks.push(format!(
            "{} proper={} {:?}",
            d.spec.name, prop.passed, d.report.verdict
        ));
    }
    let detail = format!(
        "square partials off by {square_err:.1e}, log weight off by {weight_err:.1e}; {}",
        checks.join(", ")
    );
    ensure(ok, detail.clone())?;
    Ok(detail)
}

fn condition_numbers() -> Outcome {
    let c = cfg();
    let mut bounds = Vec::new();
    for scaling in [SquareScaling::PaperBrier, SquareScaling::UnitWeight] {
        let sq: Arc<dyn ProperLoss> = Arc::new(SquareLoss::new(2, scaling).map_err(err)?);
        let cl = CompositeLoss::new(
            sq.clone(),
            Arc::new(CanonicalLink::new(sq, &c).map_err(err)?),
            &c,
        )
        .map_err(err)?;
        bounds.push(
            condition_number_bound(&cl, &Grid::default_for(2).map_err(err)?)
                .map_err(err)?
                .bound,
        );
    }
    let log: Arc<dyn ProperLoss> = Arc::new(LogLoss::new(2).map_err(err)?);
    let cl = CompositeLoss::new(
        log.clone(),
        Arc::new(CanonicalLink::new(log, &c).map_err(err)?),
        &c,
    )
    .map_err(err)?;
    let log_bound = condition_number_bound(&cl, &Grid::new(2, 200, 0.1).map_err(err)?)
        .map_err(err)?
        .bound;
    let detail = format!(
        "square {bounds:?}, log on margin 0.1 {log_bound:.6} (25/9 = {:.6})",
        25.0 / 9.0
    );
    ensure(
        bounds.iter().all(|b| (b - 1.0).abs() <= 1e-9) && (log_bound - 25.0 / 9.0).abs() <= 1e-3,
        detail.clone(),
    )?;
    Ok(detail)
}

fn boosting() -> Outcome {
    let start = Instant::now();
    let cfg_b = BoostConfig::default();
    let table = alpha_sweep(&cfg_b, &cfg()).map_err(err)?;
    let again = alpha_sweep(&cfg_b, &cfg()).map_err(err)?;
    let t = start.elapsed();
    let bayes = bayes_accuracy_mc(1_000_000, 2024);
    let finals = table.final_accuracies();
    let softmax = finals
        .iter()
        .find(|(a, _)| *a == 1.0)
        .map(|f| f.1)
        .unwrap_or(f64::NAN);
    let mut max_rise = f64::NEG_INFINITY;
    for &alpha in &cfg_b.alphas {
        for w in table.trajectory(alpha).windows(2) {
            max_rise = max_rise.max(w[1].train_risk - w[0].train_risk);
        }
    }
    let bits = |t: &proper_composite::boosting::SweepTable| {
        t.rows
            .iter()
            .map(|r| {
                (
                    r.alpha.to_bits(),
                    r.round,
                    r.train_risk.to_bits(),
                    r.test_accuracy.to_bits(),
                    r.clip_count,
                )
            })
            .collect::<Vec<_>>()
    };
    let reproducible = bits(&table) == bits(&again) && table.to_csv() == again.to_csv();
    let accs: Vec<f64> = finals.iter().map(|f| f.1).collect();
    let spread = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - accs.iter().copied().fold(f64::INFINITY, f64::min);
    let complete = table.failures.is_empty() && finals.len() == cfg_b.alphas.len();
    let detail = format!(
        "softmax accuracy {softmax:.4} vs Bayes {bayes:.4}; max risk rise {max_rise:.1e}; reproducible: {reproducible}; \
         final accuracies {accs:?} (spread {spread:.4}); two sweeps in {t:.1?}"
    );
    ensure(
        complete
            && (softmax - bayes).abs() <= 0.05
            && max_rise <= RISK_SLACK
            && reproducible
            && spread > 0.0
            && t <= Duration::from_secs(300),
        detail.clone(),
    )?;
    Ok(detail)
}

fn properness_suite() -> Outcome {
    let c = cfg();
    let mut losses: Vec<Box<dyn ProperLoss>> = Vec::new();
    for n in [2, 3, 5] {
        losses.push(Box::new(LogLoss::new(n).map_err(err)?));
        losses.push(Box::new(
            SquareLoss::new(n, SquareScaling::PaperBrier).map_err(err)?,
        ));
    }
    losses.push(Box::new(
        SquareLoss::new(2, SquareScaling::UnitWeight).map_err(err)?,
    ));
    let grid = Grid::default_for(2).map_err(err)?;
    for (u, modulus) in [
        (UFunction::Zero, 1.0),
        (UFunction::Log, 0.0),
        (UFunction::Zero, 0.5),
    ] {
        let d = design_loss(&DesignSpec::new(u, modulus, 1e-7).map_err(err)?, &grid, &c)
            .map_err(err)?;
        losses.push(Box::new(d.loss));
    }
    let mut worst = (f64::NEG_INFINITY, String::new());
    let mut ok = true;
    for loss in &losses {
        let r = verify_properness(loss.as_ref(), 1000, 11).map_err(err)?;
        ok &= r.passed;
        if r.max_violation > worst.0 {
            worst = (r.max_violation, r.loss.clone());
        }
    }
    let broken = verify_properness(&LinearScore::new(3).map_err(err)?, 1000, 11).map_err(err)?;
    let caught = !broken.passed && broken.max_violation > 0.0 && broken.witness.is_some();
    let detail = format!(
        "{} losses pass (worst gap {:.2e}, {}); linear score rejected with gap {:.3}",
        losses.len(),
        worst.0,
        worst.1,
        broken.max_violation
    );
    ensure(ok && caught, detail.clone())?;
    Ok(detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient identity", gradient_identity),
        ("hessian identity", hessian_identity),
        ("binary log loss under logit", logit_signs),
        ("canonical composites are convex", canonical_convexity),
        ("checker equivalence", checker_equivalence),
        ("binary strong-convexity region", binary_region),
        ("designer round trip", designer_round_trip),
        ("condition number bounds", condition_numbers),
        ("boosting sweep", boosting),
        ("properness suite", properness_suite),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
