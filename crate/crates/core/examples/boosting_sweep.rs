//! Stump boosting under the mixture links, with the final test accuracy per
//! mixture weight. Pass a round count to shorten the run.

use proper_composite::boosting::{alpha_sweep, bayes_accuracy_mc, BoostConfig};
use proper_composite::numerics::ToleranceConfig;

fn main() -> proper_composite::Result<()> {
    let rounds = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    let cfg = BoostConfig {
        rounds,
        ..BoostConfig::default()
    };
    let table = alpha_sweep(&cfg, &ToleranceConfig::default())?;
    println!(
        "Monte Carlo Bayes accuracy {:.4}",
        bayes_accuracy_mc(500_000, 9)
    );
    for (alpha, acc) in table.final_accuracies() {
        let last = *table.trajectory(alpha).last().expect("trained");
        println!(
            "α = {alpha:4}: test accuracy {acc:.4} after {} rounds, train risk {:.4}, clip events {}",
            last.round, last.train_risk, last.clip_count
        );
    }
    for f in &table.failures {
        println!("α = {} failed: {}", f.alpha, f.error);
    }
    Ok(())
}
