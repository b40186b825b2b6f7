//! The necessary band for normalized binary weights at several moduli, and
//! membership of the normalized log weight.

use proper_composite::convexity::{region_boundary, region_check, Grid};
use proper_composite::numerics::ToleranceConfig;
use proper_composite::proper_loss::{BinaryWeight, WeightSpec};

fn main() -> proper_composite::Result<()> {
    let cfg = ToleranceConfig::default();
    println!("c,p,lower,upper");
    for c in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        for s in region_boundary(c, 8)?.samples {
            println!("{c},{},{:.6},{:.6}", s.p, s.lower, s.upper);
        }
    }
    let w = BinaryWeight::from_spec(&WeightSpec::Log { scale: 0.25 }, &cfg)?;
    let grid = Grid::default_for(2)?;
    for c in [0.0, 0.5, 0.8] {
        let r = region_check(&w, c, &grid, &cfg)?;
        let at = r.witness.map(|w| w.point[0]).unwrap_or(f64::NAN);
        println!(
            "1/(4p(1−p)) at c = {c}: {:?} (tightest at p = {at:.3})",
            r.verdict
        );
    }
    Ok(())
}
