//! Grid certificates for canonical composites, the largest certified
//! modulus, and a refuted non-canonical link.

use std::sync::Arc;

use proper_composite::convexity::{
    check_hessian_criterion, condition_number_bound, find_modulus, Grid,
};
use proper_composite::links::{CanonicalLink, PowerLink};
use proper_composite::numerics::ToleranceConfig;
use proper_composite::proper_loss::{LogLoss, ProperLoss, SquareLoss, SquareScaling};
use proper_composite::CompositeLoss;

fn main() -> proper_composite::Result<()> {
    let cfg = ToleranceConfig::default();
    let losses: Vec<Arc<dyn ProperLoss>> = vec![
        Arc::new(LogLoss::new(3)?),
        Arc::new(SquareLoss::new(3, SquareScaling::PaperBrier)?),
    ];
    for loss in losses {
        let cl = CompositeLoss::new(
            loss.clone(),
            Arc::new(CanonicalLink::new(loss, &cfg)?),
            &cfg,
        )?;
        let grid = Grid::default_for(3)?;
        let r = check_hessian_criterion(&cl, 0.0, &grid)?;
        let search = find_modulus(|c| check_hessian_criterion(&cl, c, &grid))?;
        println!(
            "{}: {:?} at c = 0 over {} points (min eigenvalue {:.4}); largest certified modulus {:?}",
            cl.name(),
            r.verdict,
            r.evaluated,
            r.min_shifted_eigenvalue,
            search.modulus
        );
    }

    let log2: Arc<dyn ProperLoss> = Arc::new(LogLoss::new(2)?);
    let logit = CompositeLoss::new(
        log2.clone(),
        Arc::new(CanonicalLink::new(log2.clone(), &cfg)?),
        &cfg,
    )?;
    let bound = condition_number_bound(&logit, &Grid::new(2, 200, 0.1)?)?;
    println!(
        "binary logit on [0.1, 0.9]: condition number bound {:.6}",
        bound.bound
    );

    let cubic = CompositeLoss::new(log2, Arc::new(PowerLink::new(3.0)?), &cfg)?;
    let r = check_hessian_criterion(&cubic, 0.0, &Grid::default_for(2)?)?;
    let w = r.witness.expect("evaluated");
    println!(
        "{}: {:?}, witness p = {:.3?} class {:?} value {:.3e}",
        cubic.name(),
        r.verdict,
        w.point,
        w.class,
        w.value
    );
    Ok(())
}
