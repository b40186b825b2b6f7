use std::sync::Arc;

use rayon::prelude::*;

use super::ToleranceConfig;
use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 60;
const MIN_DEPTH: u32 = 3;
const MAX_PANELS: usize = 1 << 18;

struct Segment {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

fn eval<G: Fn(f64) -> f64>(g: &G, t: f64) -> Result<f64> {
    let v = g(t);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(format!("integrand is {v}"), &[t]))
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson integration of `g` over `[a, b]` to absolute error
/// `cfg.quad_tol`. `∫ₐᵇ = −∫ᵇₐ`.
///
/// The acceptance test per panel is floored at a few ulps of the panel
/// estimate, since no rule can resolve below rounding.
pub fn quad_integrate<G>(g: G, a: f64, b: f64, cfg: &ToleranceConfig) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("infinite integration bound", &[a, b]));
    }
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return quad_integrate(g, b, a, cfg).map(|v| -v);
    }
    let fa = eval(&g, a)?;
    let fb = eval(&g, b)?;
    let m = 0.5 * (a + b);
    let fm = eval(&g, m)?;
    let mut stack = vec![Segment {
        a,
        b,
        fa,
        fm,
        fb,
        whole: simpson(a, b, fa, fm, fb),
        tol: cfg.quad_tol,
        depth: 0,
    }];
    let mut total = 0.0;
    let mut exhausted = false;
    let mut panels = 0usize;
    while let Some(s) = stack.pop() {
        panels += 1;
        let m = 0.5 * (s.a + s.b);
        let lm = 0.5 * (s.a + m);
        let rm = 0.5 * (m + s.b);
        let flm = eval(&g, lm)?;
        let frm = eval(&g, rm)?;
        let left = simpson(s.a, m, s.fa, flm, s.fm);
        let right = simpson(m, s.b, s.fm, frm, s.fb);
        let refined = left + right;
        let diff = refined - s.whole;
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        let converged = s.depth >= MIN_DEPTH && diff.abs() <= 15.0 * s.tol.max(floor);
        let too_narrow = m <= s.a || m >= s.b || lm <= s.a || rm >= s.b;
        if converged || too_narrow || s.depth >= MAX_DEPTH || panels >= MAX_PANELS {
            if !converged && !too_narrow {
                exhausted = true;
            }
            total += refined + diff / 15.0;
            continue;
        }
        let tol = 0.5 * s.tol;
        // Right first so the left half is processed next (depth-first, left to right).
        stack.push(Segment {
            a: m,
            b: s.b,
            fa: s.fm,
            fm: frm,
            fb: s.fb,
            whole: right,
            tol,
            depth: s.depth + 1,
        });
        stack.push(Segment {
            a: s.a,
            b: m,
            fa: s.fa,
            fm: flm,
            fb: s.fm,
            whole: left,
            tol,
            depth: s.depth + 1,
        });
    }
    if exhausted {
        return Err(Error::QuadratureAccuracy {
            a,
            b,
            estimate: total,
        });
    }
    Ok(total)
}

/// Chebyshev–Lobatto nodes of `[a, b]`, `count ≥ 2`, ascending.
pub fn lobatto_nodes(a: f64, b: f64, count: usize) -> Vec<f64> {
    let m = (count.max(2) - 1) as f64;
    let mut nodes: Vec<f64> = (0..count.max(2))
        .map(|j| {
            let c = -(std::f64::consts::PI * j as f64 / m).cos();
            0.5 * (a + b) + 0.5 * (b - a) * c
        })
        .collect();
    nodes[0] = a;
    *nodes.last_mut().unwrap() = b;
    nodes
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative accuracy of the cells of an [`Antiderivative`].
pub const CELL_RELATIVE_TOL: f64 = 1e-12;

/// Tolerance for one cell of a tabulated integral: the cell's share of
/// `cfg.quad_tol`, relaxed to `relative` times the cell integral.
pub fn cell_tolerance(
    cfg: &ToleranceConfig,
    width: f64,
    span: f64,
    cell_integral: f64,
    relative: f64,
) -> ToleranceConfig {
    ToleranceConfig {
        quad_tol: (cfg.quad_tol * width / span).max(relative * cell_integral.abs()),
        ..*cfg
    }
}

/// Three-point Simpson estimate, used to scale cell tolerances.
pub fn simpson_estimate<G: Fn(f64) -> f64>(g: G, a: f64, b: f64) -> f64 {
    simpson(a, b, g(a), g(0.5 * (a + b)), g(b))
}

/// `G(x) = ∫ₐˣ g` on `[a, b]`, tabulated at Chebyshev–Lobatto nodes. An
/// evaluation adds the quadrature over the partial cell containing `x` at
/// the tolerance of [`cell_tolerance`].
#[derive(Clone)]
pub struct Antiderivative {
    g: ScalarFn,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    cfg: ToleranceConfig,
}

impl std::fmt::Debug for Antiderivative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Antiderivative")
            .field("a", &self.nodes[0])
            .field("b", &self.nodes[self.nodes.len() - 1])
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

impl Antiderivative {
    pub fn new(g: ScalarFn, a: f64, b: f64, nodes: usize, cfg: &ToleranceConfig) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::domain(
                "antiderivative needs a finite interval a < b",
                &[a, b],
            ));
        }
        let nodes = lobatto_nodes(a, b, nodes);
        let span = b - a;
        let cells: Vec<f64> = nodes
            .par_windows(2)
            .map(|w| {
                let estimate = simpson_estimate(|t| g(t), w[0], w[1]);
                let local = cell_tolerance(cfg, w[1] - w[0], span, estimate, CELL_RELATIVE_TOL);
                quad_integrate(|t| g(t), w[0], w[1], &local)
            })
            .collect::<Result<_>>()?;
        let mut cumulative = Vec::with_capacity(nodes.len());
        cumulative.push(0.0);
        for c in &cells {
            cumulative.push(cumulative[cumulative.len() - 1] + c);
        }
        Ok(Self {
            g,
            nodes,
            cumulative,
            cfg: *cfg,
        })
    }

    pub fn lower(&self) -> f64 {
        self.nodes[0]
    }

    pub fn upper(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lower()..=self.upper()).contains(&x)
    }

    /// `∫ₐˣ g` for `x ∈ [a, b]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::domain("outside the tabulated interval", &[x]));
        }
        let j = self
            .nodes
            .partition_point(|&t| t <= x)
            .saturating_sub(1)
            .min(self.nodes.len() - 2);
        let (x0, x1) = (self.nodes[j], self.nodes[j + 1]);
        let cell = self.cumulative[j + 1] - self.cumulative[j];
        let local = cell_tolerance(
            &self.cfg,
            x1 - x0,
            self.upper() - self.lower(),
            cell,
            CELL_RELATIVE_TOL,
        );
        Ok(self.cumulative[j] + quad_integrate(|t| (self.g)(t), x0, x, &local)?)
    }
}
