//! Sampled properness checks: built-in losses pass, the linear score fails
//! with a witness pair.

use proper_composite::proper_loss::{
    verify_properness, LinearScore, LogLoss, ProperLoss, SquareLoss, SquareScaling,
};

fn main() -> proper_composite::Result<()> {
    let losses: Vec<Box<dyn ProperLoss>> = vec![
        Box::new(LogLoss::new(4)?),
        Box::new(SquareLoss::new(4, SquareScaling::PaperBrier)?),
        Box::new(SquareLoss::new(2, SquareScaling::UnitWeight)?),
        Box::new(LinearScore::new(3)?),
    ];
    for loss in &losses {
        let r = verify_properness(loss.as_ref(), 1000, 0)?;
        println!(
            "{:<12} passed={:<5} max L(p,p) − L(p,q) = {:+.3e}",
            r.loss, r.passed, r.max_violation
        );
        if !r.passed {
            if let Some((p, q)) = &r.witness {
                println!("             witness p = {p:.3?}, q = {q:.3?}");
            }
        }
    }
    Ok(())
}
