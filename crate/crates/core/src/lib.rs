//! Multiclass proper composite losses.
//!
//! A composite loss pairs a proper loss `λ` on the probability simplex with
//! an invertible link `ψ`, giving `ℓ(v) = λ(ψ⁻¹(v))` on a prediction space.
//! The crate evaluates such losses with exact gradients and Hessians,
//! certifies (strong) convexity on grids, designs binary losses with a
//! prescribed modulus and builds link families by mixing inverse links.

pub mod boosting;
pub mod cli;
pub mod composite;
pub mod convexity;
pub mod designer;
pub mod error;
pub mod links;
pub mod numerics;
pub mod proper_loss;
pub mod simplex;
pub mod spec;
pub mod verify;

pub use composite::CompositeLoss;
pub use error::{Error, Result};
pub use numerics::ToleranceConfig;
pub use spec::{CompositeSpec, LinkSpec, LossSpec};
