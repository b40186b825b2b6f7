//! Partial losses, gradients, Hessians and the curvature ratio of a
//! three-class composite loss at one prediction.

use std::sync::Arc;

use proper_composite::links::PhiLink;
use proper_composite::numerics::ToleranceConfig;
use proper_composite::proper_loss::{SquareLoss, SquareScaling};
use proper_composite::simplex::ProbVector;
use proper_composite::CompositeLoss;

fn main() -> proper_composite::Result<()> {
    let cfg = ToleranceConfig::default();
    let cl = CompositeLoss::new(
        Arc::new(SquareLoss::new(3, SquareScaling::PaperBrier)?),
        Arc::new(PhiLink::squared(3)?),
        &cfg,
    )?;
    let p = ProbVector::new(vec![0.5, 0.3, 0.2])?.project();
    let v = cl.predict(&p)?;
    println!("{}: v = ψ̃(p̃) = {:?}", cl.name(), v.as_slice());
    println!("partial losses {:?}", cl.eval(&v)?);
    println!("curvature ratio κ ={}", cl.kappa(&v)?);
    for i in 0..cl.n() {
        let parts = cl.hessian_parts(&v, i)?;
        println!("class {i}: gradient {:?}", cl.gradient(&v, i)?.as_slice());
        println!(
            "  Hessian{}  asymmetry before symmetrizing {:.1e}",
            parts.hessian.as_matrix(),
            parts.asymmetry
        );
    }
    Ok(())
}
