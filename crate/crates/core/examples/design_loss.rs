//! Designing binary losses of prescribed strong-convexity modulus from
//! slope functions, then serializing the result as a loss spec.

use proper_composite::convexity::Grid;
use proper_composite::designer::{design_loss, DesignSpec, UFunction};
use proper_composite::numerics::ToleranceConfig;
use proper_composite::proper_loss::ProperLoss;
use proper_composite::simplex::ProjectedProb;

fn main() -> proper_composite::Result<()> {
    let cfg = ToleranceConfig::default();
    let grid = Grid::default_for(2)?;
    let designs = [
        (UFunction::Zero, 1.0),
        (UFunction::Log, 0.0),
        (UFunction::Rational { a: 0.5, b: 0.5 }, 0.3),
        (UFunction::UpperEnvelope, 0.0),
    ];
    for (u, c) in designs {
        let d = design_loss(&DesignSpec::new(u, c, cfg.interior_margin)?, &grid, &cfg)?;
        let p = ProjectedProb::new(vec![0.8])?;
        println!(
            "{}: w(0.2) = {:.4}, w(0.8) = {:.4}, ℓ(0.8) = ({:.4}, {:.4}), certificate {:?}, proper {}",
            d.spec.name,
            d.weight.eval(0.2),
            d.weight.eval(0.8),
            d.loss.partial(0, &p),
            d.loss.partial(1, &p),
            d.report.verdict,
            d.properness.passed
        );
        println!(
            "  spec: {}",
            serde_json::to_string(&d.loss.spec()).expect("serializable")
        );
    }
    let bad = DesignSpec::new(UFunction::Constant { value: 5.0 }, 0.5, cfg.interior_margin)?;
    if let Err(e) = design_loss(&bad, &grid, &cfg) {
        println!("rejected: {e}");
    }
    Ok(())
}
