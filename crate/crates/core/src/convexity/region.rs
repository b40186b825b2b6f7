use serde::Serialize;

use super::check_modulus;
use crate::error::{Error, Result};

/// Necessary band for a normalized weight at modulus `c`:
/// `w(p)` lies between `(1−c)/(2p) + c` and `(1−c)/(2(1−p)) + c`.
pub fn region_bounds(p: f64, c: f64) -> (f64, f64) {
    let a = (1.0 - c) / (2.0 * p) + c;
    let b = (1.0 - c) / (2.0 * (1.0 - p)) + c;
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSample {
    pub p: f64,
    pub lower: f64,
    pub upper: f64,
}

/// The band of [`region_bounds`] sampled at `p = k/resolution`,
/// `k = 1, …, resolution − 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCurve {
    pub modulus: f64,
    pub samples: Vec<RegionSample>,
}

pub fn region_boundary(c: f64, resolution: usize) -> Result<RegionCurve> {
    check_modulus(c)?;
    if resolution < 2 {
        return Err(Error::Config(format!(
            "region resolution must be at least 2, got {resolution}"
        )));
    }
    let samples = (1..resolution)
        .map(|k| {
            let p = k as f64 / resolution as f64;
            let (lower, upper) = region_bounds(p, c);
            RegionSample { p, lower, upper }
        })
        .collect();
    Ok(RegionCurve {
        modulus: c,
        samples,
    })
}

impl RegionCurve {
    /// `p,lower,upper` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,lower,upper\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{}\n",
                crate::spec::fmt9(s.p),
                crate::spec::fmt9(s.lower),
                crate::spec::fmt9(s.upper)
            ));
        }
        out
    }

    /// Whether this band contains `other`'s at every shared abscissa.
    pub fn contains(&self, other: &RegionCurve) -> bool {
        self.samples
            .iter()
            .zip(&other.samples)
            .all(|(a, b)| a.p == b.p && a.lower <= b.lower + 1e-15 && b.upper <= a.upper + 1e-15)
    }
}
