//! Stump boosting on a three-Gaussian task, driven by composite-loss
//! gradients, and the sweep over mixtures of the softmax and squared-φ
//! links.

mod data;
mod sweep;
mod train;

pub use data::{
    bayes_accuracy_mc, gen_gaussian_mixture, nearest_center, nearest_center_accuracy, Dataset,
    Split, CENTERS,
};
pub use sweep::{alpha_composite, alpha_sweep, SweepRow, SweepTable};
pub use train::{
    evaluate, train, train_traced, BoostConfig, Ensemble, Evaluation, RoundRecord, Stage, Stump,
    CLIP_MARGIN, MAX_HALVINGS, RISK_SLACK,
};
