//! Loss-driven augmentation policy.
//!
//! Each epoch the engine receives one validation loss per strategy. From
//! those it derives
//!
//! * selection probabilities, the losses normalized to sum to one;
//! * a relative loss per strategy, the epoch-over-epoch change of that
//!   strategy's loss scaled by the larger of the two losses;
//! * a strength factor `lambda = 1 - I_relative(a, b)` per strategy, which is
//!   mapped onto warp strength and mask counts.
//!
//! A fresh state starts at epoch 0 with all previous losses at zero. Epoch 0
//! is sampled with the uniform single-strategy policy; after the first report
//! every relative loss is exactly 1 and every strength factor exactly 0.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beta::{reg_inc_beta, BetaError, BetaParams};
use crate::config::{AugmentConfig, RealizedParams, MASKS_MAX, MASKS_MIN, RHO0_MAX, RHO0_MIN};
use crate::feature::{FeatureMatrix, PerStrategy, SampleSeed, StrategyId, StrategySet, NUM_STRATEGIES};
use crate::kernels::{
    realize_stage, stream_rng, AugmentationPlan, KernelError, DRAW_STREAM, EXTRA_DRAW_STREAM, SELECT_STREAM,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("loss for {strategy} must be positive and finite, got {value}")]
    NonPositiveLoss { strategy: StrategyId, value: f64 },
    #[error("losses sum to {0}, cannot normalize")]
    ZeroSum(f64),
    #[error("current loss must be positive and finite, got {0}")]
    NonPositiveCurrent(f64),
    #[error("value {0} is outside its domain")]
    Domain(f64),
    #[error("variant {0} needs a policy state past epoch 0")]
    StaleState(AugmentVariant),
    #[error("loss report is for epoch {got}, expected {expected}")]
    EpochMismatch { expected: u64, got: u64 },
    #[error(transparent)]
    Beta(#[from] BetaError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// The augmentation systems, in ladder order 0 through 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AugmentVariant {
    /// No augmentation.
    None,
    /// All three strategies on every sample, fixed parameters.
    SpecAugment,
    /// One strategy per sample, uniformly chosen.
    Random,
    /// One strategy per sample, chosen with loss-proportional probability.
    Prob,
    /// `Prob` with strength scheduled from the relative loss.
    ProbIbf,
    /// `ProbIbf` followed by the fixed full triple.
    ProbIbfPlusSpec,
    /// Independent on/off per strategy with scheduled strength.
    Policy,
}

impl AugmentVariant {
    pub const ALL: [AugmentVariant; 7] = [
        AugmentVariant::None,
        AugmentVariant::SpecAugment,
        AugmentVariant::Random,
        AugmentVariant::Prob,
        AugmentVariant::ProbIbf,
        AugmentVariant::ProbIbfPlusSpec,
        AugmentVariant::Policy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentVariant::None => "NONE",
            AugmentVariant::SpecAugment => "SPEC_AUGMENT",
            AugmentVariant::Random => "RANDOM",
            AugmentVariant::Prob => "PROB",
            AugmentVariant::ProbIbf => "PROB_IBF",
            AugmentVariant::ProbIbfPlusSpec => "PROB_IBF_PLUS_SPEC",
            AugmentVariant::Policy => "POLICY",
        }
    }

    /// Position in the system ladder.
    pub fn system_index(self) -> usize {
        Self::ALL.iter().position(|v| *v == self).unwrap()
    }

    /// Needs loss-derived probabilities, hence a state past epoch 0.
    pub fn needs_losses(self) -> bool {
        matches!(
            self,
            AugmentVariant::Prob | AugmentVariant::ProbIbf | AugmentVariant::ProbIbfPlusSpec | AugmentVariant::Policy
        )
    }

    /// Draws parameters from the strength schedule rather than the defaults.
    pub fn schedules_strength(self) -> bool {
        matches!(self, AugmentVariant::ProbIbf | AugmentVariant::ProbIbfPlusSpec | AugmentVariant::Policy)
    }
}

impl fmt::Display for AugmentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| format!("unknown variant {s:?}; expected one of {}", Self::ALL.map(|v| v.name()).join(", ")))
    }
}

/// Per-strategy validation losses for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: u64,
    pub losses: PerStrategy<f64>,
}

fn check_losses(losses: &PerStrategy<f64>) -> Result<(), PolicyError> {
    for s in StrategyId::ALL {
        let value = losses[s.index()];
        if !(value.is_finite() && value > 0.0) {
            return Err(PolicyError::NonPositiveLoss { strategy: s, value });
        }
    }
    Ok(())
}

/// Normalizes positive losses into a probability vector.
pub fn compute_probabilities(losses: &PerStrategy<f64>) -> Result<PerStrategy<f64>, PolicyError> {
    check_losses(losses)?;
    let total: f64 = losses.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(PolicyError::ZeroSum(total));
    }
    Ok(losses.map(|l| l / total))
}

/// Change of a loss between consecutive epochs, relative to the larger one.
pub fn compute_relative_loss(prev: f64, curr: f64) -> Result<f64, PolicyError> {
    if !(curr.is_finite() && curr > 0.0) {
        return Err(PolicyError::NonPositiveCurrent(curr));
    }
    if !(prev.is_finite() && prev >= 0.0) {
        return Err(PolicyError::Domain(prev));
    }
    Ok(if curr < prev { (prev - curr) / prev } else { (curr - prev) / curr })
}

/// Strength factor `1 - I_relative(a, b)`.
pub fn compute_lambda(relative: f64, beta: BetaParams) -> Result<f64, PolicyError> {
    if !(0.0..=1.0).contains(&relative) {
        return Err(PolicyError::Domain(relative));
    }
    Ok(1.0 - reg_inc_beta(relative, beta)?)
}

fn check_lambda(lambda: f64) -> Result<(), PolicyError> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(PolicyError::Domain(lambda))
    }
}

fn warp_strength(lambda: f64) -> f64 {
    (RHO0_MIN + (RHO0_MAX - RHO0_MIN) * lambda).clamp(RHO0_MIN, RHO0_MAX)
}

fn mask_count(lambda: f64) -> u32 {
    ((MASKS_MIN as f64 + (MASKS_MAX - MASKS_MIN) as f64 * lambda).floor() as u32).clamp(MASKS_MIN, MASKS_MAX)
}

/// Maps one strength factor onto every strategy's parameters.
pub fn map_parameters(lambda: f64, base: &AugmentConfig) -> Result<RealizedParams, PolicyError> {
    map_strategy_parameters(&[lambda; NUM_STRATEGIES], base)
}

/// Maps each strategy's own strength factor onto its parameters: warp
/// strength from the warp factor, mask counts from the respective mask
/// factors. Widths and fill are copied from `base`.
pub fn map_strategy_parameters(
    lambda: &PerStrategy<f64>,
    base: &AugmentConfig,
) -> Result<RealizedParams, PolicyError> {
    lambda.iter().try_for_each(|&l| check_lambda(l))?;
    Ok(RealizedParams {
        rho0: warp_strength(lambda[StrategyId::TimeWarp.index()]),
        n_time_masks: mask_count(lambda[StrategyId::TimeMask.index()]),
        n_freq_masks: mask_count(lambda[StrategyId::FreqMask.index()]),
        ..base.default_params()
    })
}

/// Evolving per-strategy loss history and the quantities derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub epoch: u64,
    pub variant: AugmentVariant,
    pub beta: BetaParams,
    pub master_seed: u64,
    pub prev_losses: PerStrategy<f64>,
    pub curr_losses: PerStrategy<f64>,
    pub probabilities: PerStrategy<f64>,
    pub relative: PerStrategy<f64>,
    pub lambda: PerStrategy<f64>,
}

impl PolicyState {
    pub fn new(variant: AugmentVariant, beta: BetaParams, master_seed: u64) -> Self {
        PolicyState {
            epoch: 0,
            variant,
            beta,
            master_seed,
            prev_losses: [0.0; NUM_STRATEGIES],
            curr_losses: [0.0; NUM_STRATEGIES],
            probabilities: [1.0 / NUM_STRATEGIES as f64; NUM_STRATEGIES],
            relative: [0.0; NUM_STRATEGIES],
            lambda: [0.0; NUM_STRATEGIES],
        }
    }

    /// Installs the next epoch's validation losses.
    pub fn advance_epoch(&self, report: &LossReport) -> Result<PolicyState, PolicyError> {
        let expected = self.epoch + 1;
        if report.epoch != expected {
            return Err(PolicyError::EpochMismatch { expected, got: report.epoch });
        }
        let probabilities = compute_probabilities(&report.losses)?;
        let prev_losses = self.curr_losses;
        let mut relative = [0.0; NUM_STRATEGIES];
        let mut lambda = [0.0; NUM_STRATEGIES];
        for i in 0..NUM_STRATEGIES {
            relative[i] = compute_relative_loss(prev_losses[i], report.losses[i])?;
            lambda[i] = compute_lambda(relative[i], self.beta)?;
        }
        Ok(PolicyState {
            epoch: expected,
            prev_losses,
            curr_losses: report.losses,
            probabilities,
            relative,
            lambda,
            ..self.clone()
        })
    }

    /// True while no loss report has been installed.
    pub fn is_bootstrap(&self) -> bool {
        self.epoch == 0
    }

    pub fn validate(&self) -> Result<(), String> {
        self.beta.validate().map_err(|e| e.to_string())?;
        let unit = |name: &str, v: &PerStrategy<f64>| -> Result<(), String> {
            match v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                Some(x) => Err(format!("{name} value {x} outside [0, 1]")),
                None => Ok(()),
            }
        };
        unit("probability", &self.probabilities)?;
        unit("relative", &self.relative)?;
        unit("lambda", &self.lambda)?;
        if self.epoch >= 1 {
            let sum: f64 = self.probabilities.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(format!("probabilities sum to {sum}"));
            }
        }
        Ok(())
    }
}

/// Outcome of strategy selection for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    /// Strategies drawn by the variant's sampling rule.
    pub sampled: StrategySet,
    /// Set when every independent on/off draw came up off and one strategy
    /// was drawn from the categorical instead.
    pub fallback: bool,
    /// The fixed full triple is appended after the sampled strategies.
    pub with_full_triple: bool,
}

impl Selection {
    fn of(sampled: StrategySet) -> Self {
        Selection { sampled, fallback: false, with_full_triple: false }
    }

    pub fn active(&self) -> StrategySet {
        if self.with_full_triple {
            StrategySet::ALL
        } else {
            self.sampled
        }
    }
}

fn categorical<R: Rng>(rng: &mut R, p: &PerStrategy<f64>) -> StrategyId {
    let dist = WeightedIndex::new(p).expect("probabilities are validated non-negative with positive sum");
    StrategyId::ALL[dist.sample(rng)]
}

/// Chooses which strategies augment one sample.
pub fn select_strategies(
    variant: AugmentVariant,
    state: &PolicyState,
    seed: &SampleSeed,
) -> Result<Selection, PolicyError> {
    if variant.needs_losses() && state.is_bootstrap() {
        return Err(PolicyError::StaleState(variant));
    }
    let mut rng = stream_rng(seed, SELECT_STREAM);
    let p = &state.probabilities;
    Ok(match variant {
        AugmentVariant::None => Selection::of(StrategySet::EMPTY),
        AugmentVariant::SpecAugment => Selection::of(StrategySet::ALL),
        AugmentVariant::Random => {
            Selection::of(StrategySet::single(StrategyId::ALL[rng.random_range(0..NUM_STRATEGIES)]))
        }
        AugmentVariant::Prob | AugmentVariant::ProbIbf => Selection::of(StrategySet::single(categorical(&mut rng, p))),
        AugmentVariant::ProbIbfPlusSpec => Selection {
            with_full_triple: true,
            ..Selection::of(StrategySet::single(categorical(&mut rng, p)))
        },
        AugmentVariant::Policy => {
            let on: StrategySet = StrategyId::ALL.into_iter().filter(|s| rng.random_bool(p[s.index()])).collect();
            if on.is_empty() {
                Selection { sampled: StrategySet::single(categorical(&mut rng, p)), fallback: true, with_full_triple: false }
            } else {
                Selection::of(on)
            }
        }
    })
}

/// Builds the full augmentation plan for one sample.
///
/// Loss-driven variants fall back to uniform single-strategy sampling while
/// the state is still at epoch 0; the appended full triple of
/// [`AugmentVariant::ProbIbfPlusSpec`] is kept through the bootstrap.
pub fn make_plan(
    variant: AugmentVariant,
    state: &PolicyState,
    seed: SampleSeed,
    matrix: &FeatureMatrix,
    config: &AugmentConfig,
) -> Result<AugmentationPlan, PolicyError> {
    matrix.validate().map_err(KernelError::from)?;
    let bootstrap = variant.needs_losses() && state.is_bootstrap();
    let selection = if bootstrap {
        Selection {
            with_full_triple: variant == AugmentVariant::ProbIbfPlusSpec,
            ..select_strategies(AugmentVariant::Random, state, &seed)?
        }
    } else {
        select_strategies(variant, state, &seed)?
    };

    let sampled_params = if variant.schedules_strength() && !bootstrap {
        map_strategy_parameters(&state.lambda, config)?
    } else {
        config.default_params()
    };

    let mut plan = AugmentationPlan::empty(seed, matrix.shape());
    if !selection.sampled.is_empty() {
        let mut rng = stream_rng(&seed, DRAW_STREAM);
        plan.push_stage(realize_stage(&mut rng, matrix, &sampled_params, selection.sampled)?);
    }
    if selection.with_full_triple {
        let mut rng = stream_rng(&seed, EXTRA_DRAW_STREAM);
        plan.push_stage(realize_stage(&mut rng, matrix, &config.default_params(), StrategySet::ALL)?);
    }
    Ok(plan)
}
