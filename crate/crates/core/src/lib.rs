//! Loss-driven adaptive spectrogram augmentation.
//!
//! * [`kernels`]: time masking, frequency masking and time warping on
//!   [`FeatureMatrix`] values, plus seeded plan realization.
//! * [`policy`]: per-epoch strategy probabilities and strength schedule
//!   computed from per-strategy validation losses.
//! * [`beta`]: the regularized incomplete beta function behind the strength
//!   schedule.
//! * [`sim`]: a small closed-loop surrogate experiment.
//! * [`formats`] and [`cli`]: on-disk formats and the batch commands.

pub mod beta;
pub mod cli;
pub mod config;
pub mod feature;
pub mod formats;
pub mod kernels;
pub mod policy;
pub mod sim;

pub use beta::{log_beta, reg_inc_beta, BetaError, BetaParams};
pub use config::{AugmentConfig, Fill, RealizedParams};
pub use feature::{derive_sample_seed, FeatureMatrix, MatrixError, SampleSeed, StrategyId, StrategySet};
pub use kernels::{apply_plan, realize_draws, AugmentationPlan, KernelError, MaskDraw, WarpDirection, WarpDraw};
pub use policy::{
    compute_lambda, compute_probabilities, compute_relative_loss, make_plan, map_parameters, select_strategies,
    AugmentVariant, LossReport, PolicyError, PolicyState,
};
pub use sim::{run_simulation, EpochTrace, SimConfig, SimError};
