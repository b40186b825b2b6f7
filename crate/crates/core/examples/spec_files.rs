//! Composites described as JSON, built, evaluated and written back.

use nalgebra::DVector;
use proper_composite::numerics::ToleranceConfig;
use proper_composite::CompositeSpec;

const SPECS: [&str; 3] = [
    r#"{"loss": {"kind": "log", "n": 3}, "link": {"kind": "canonical", "loss": {"kind": "log", "n": 3}}}"#,
    r#"{"loss": {"kind": "square", "n": 3, "scaling": "paper_brier"}, "link": {"kind": "phi", "n": 3, "phi": "exp"}}"#,
    r#"{"loss": {"kind": "log", "n": 3},
        "link": {"kind": "mixture", "alpha": [0.5, 0.5],
                 "basis": [{"kind": "phi", "n": 3, "phi": "exp"}, {"kind": "phi", "n": 3, "phi": "squared"}]}}"#,
];

fn main() -> proper_composite::Result<()> {
    let cfg = ToleranceConfig::default();
    let v = DVector::from_vec(vec![0.3, -0.1]);
    for text in SPECS {
        let spec = CompositeSpec::from_json(text).map_err(|e| proper_composite::Error::Parse {
            path: "inline".into(),
            message: e.to_string(),
        })?;
        let cl = spec.build(&cfg)?;
        println!("{:<40} ℓ(v) = {:.6?}", cl.name(), cl.eval(&v)?);
        println!("  {}", serde_json::to_string(&spec).expect("serializable"));
    }
    Ok(())
}
