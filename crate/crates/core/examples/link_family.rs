//! Mixtures of the softmax and squared-φ inverse links. A proper mixture
//! lives on the squared-φ box but does not reach every probability vector.

use std::sync::Arc;

use nalgebra::DVector;
use proper_composite::links::{combine, Link, LinkFamily, PhiLink, FAMILY_MONOTONICITY_TRIALS};
use proper_composite::numerics::ToleranceConfig;

fn main() -> proper_composite::Result<()> {
    let cfg = ToleranceConfig::default();
    let v = DVector::from_vec(vec![0.6, -0.2]);
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let basis: Vec<Arc<dyn Link>> =
            vec![Arc::new(PhiLink::exp(3)?), Arc::new(PhiLink::squared(3)?)];
        let family = LinkFamily::new(
            basis,
            vec![alpha, 1.0 - alpha],
            FAMILY_MONOTONICITY_TRIALS,
            &cfg,
        )?;
        let link = combine(&family)?;
        let worst = family
            .monotonicity()
            .iter()
            .map(|r| r.min_inner)
            .fold(f64::INFINITY, f64::min);
        let p = link.inverse(&v)?.lift();
        println!(
            "α = {alpha:4}: ψ⁻¹(v) = {:?}  domain {:?}  basis monotonicity margin {worst:.3e}",
            p.as_slice(),
            link.domain()
        );
    }

    let basis: Vec<Arc<dyn Link>> =
        vec![Arc::new(PhiLink::exp(2)?), Arc::new(PhiLink::squared(2)?)];
    let half = combine(&LinkFamily::new(
        basis,
        vec![0.5, 0.5],
        FAMILY_MONOTONICITY_TRIALS,
        &cfg,
    )?)?;
    let edge = half.inverse(&DVector::from_element(1, 1.0 - 1e-8))?;
    println!("binary α = 0.5 reaches at most p = {:.6}", edge.full(0));
    Ok(())
}
