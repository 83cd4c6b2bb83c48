//! Closed-loop surrogate experiment.
//!
//! A synthetic spectrogram classification task stands in for speech data and
//! a linear softmax over time-pooled features stands in for the recognizer.
//! Every epoch the per-strategy validation losses of the current model are
//! fed to the policy engine, which then drives augmentation of the next
//! training pass.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::AugmentConfig;
use crate::feature::{derive_sample_seed, FeatureMatrix, PerStrategy, SampleSeed, StrategyId, StrategySet};
use crate::kernels::{apply_plan, realize_draws, KernelError};
use crate::policy::{make_plan, AugmentVariant, LossReport, PolicyError, PolicyState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Added to the tone band over the active half of the frames.
pub const TONE_ENERGY: f64 = 3.0;
/// Channels per tone band.
pub const TONE_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub split: Split,
    pub generator_seed: u64,
    pub classes: usize,
    pub samples: Vec<(FeatureMatrix, usize)>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.iter().map(|(_, y)| *y)
    }
}

fn generate_split(
    seed: u64,
    split: Split,
    n: usize,
    shape: (usize, usize),
    classes: usize,
    tone_energy: f64,
) -> Result<SyntheticDataset, SimError> {
    let (tau, nu) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match split {
        Split::Train => 0,
        Split::Validation => 1,
    });
    let band = nu / classes;
    let active = (tau / 2).max(1);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        let mut values: Vec<f64> = (0..tau * nu).map(|_| rng.sample(StandardNormal)).collect();
        let start = rng.random_range(0..=tau - active);
        let lo = label * band;
        for t in start..start + active {
            for c in lo..lo + TONE_WIDTH {
                values[t * nu + c] += tone_energy;
            }
        }
        let m = FeatureMatrix::new(tau, nu, values).map_err(|e| SimError::InvalidShape(e.to_string()))?;
        samples.push((m, label));
    }
    Ok(SyntheticDataset { split, generator_seed: seed, classes, samples })
}

/// Unit-variance noise plus a class-specific band of added energy over a
/// random contiguous half of the frames. Returns `(train, validation)`.
pub fn make_synthetic_dataset(
    seed: u64,
    n_train: usize,
    n_val: usize,
    tau: usize,
    nu: usize,
    classes: usize,
) -> Result<(SyntheticDataset, SyntheticDataset), SimError> {
    make_synthetic_dataset_with_energy(seed, n_train, n_val, tau, nu, classes, TONE_ENERGY)
}

/// [`make_synthetic_dataset`] with a custom tone energy.
pub fn make_synthetic_dataset_with_energy(
    seed: u64,
    n_train: usize,
    n_val: usize,
    tau: usize,
    nu: usize,
    classes: usize,
    tone_energy: f64,
) -> Result<(SyntheticDataset, SyntheticDataset), SimError> {
    if !tone_energy.is_finite() {
        return Err(SimError::InvalidShape(format!("tone energy {tone_energy} is not finite")));
    }
    if n_train == 0 || n_val == 0 || tau == 0 || nu == 0 || classes == 0 {
        return Err(SimError::InvalidShape(format!(
            "counts must be positive (n_train={n_train}, n_val={n_val}, tau={tau}, nu={nu}, classes={classes})"
        )));
    }
    if classes > nu / 4 {
        return Err(SimError::InvalidShape(format!("classes={classes} exceeds nu/4={}", nu / 4)));
    }
    Ok((
        generate_split(seed, Split::Train, n_train, (tau, nu), classes, tone_energy)?,
        generate_split(seed, Split::Validation, n_val, (tau, nu), classes, tone_energy)?,
    ))
}

/// Linear softmax classifier on per-channel time means.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub classes: usize,
    pub nu: usize,
    /// Row-major `classes x nu`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SurrogateModel {
    pub fn zeros(classes: usize, nu: usize) -> Self {
        SurrogateModel { classes, nu, weights: vec![0.0; classes * nu], bias: vec![0.0; classes] }
    }

    pub fn probabilities(&self, features: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.classes)
            .map(|k| {
                let row = &self.weights[k * self.nu..(k + 1) * self.nu];
                self.bias[k] + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        let p = self.probabilities(features);
        // First maximum wins ties.
        (0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best })
    }

    pub fn cross_entropy(&self, features: &[f64], label: usize) -> f64 {
        -self.probabilities(features)[label].max(f64::MIN_POSITIVE).ln()
    }

    /// One mini-batch gradient-descent step on the mean cross-entropy.
    pub fn step(&mut self, batch: &[(&[f64], usize)], learning_rate: f64) {
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.classes];
        for (x, y) in batch {
            let p = self.probabilities(x);
            for k in 0..self.classes {
                let err = p[k] - if k == *y { 1.0 } else { 0.0 };
                grad_b[k] += err;
                for (g, xi) in grad_w[k * self.nu..(k + 1) * self.nu].iter_mut().zip(x.iter()) {
                    *g += err * xi;
                }
            }
        }
        let scale = learning_rate / batch.len() as f64;
        self.weights.iter_mut().zip(&grad_w).for_each(|(w, g)| *w -= scale * g);
        self.bias.iter_mut().zip(&grad_b).for_each(|(b, g)| *b -= scale * g);
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> f64 {
        let hits = features.iter().zip(labels).filter(|(x, y)| self.predict(x) == **y).count();
        hits as f64 / labels.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub variant: AugmentVariant,
    pub epochs: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub tau: usize,
    pub nu: usize,
    pub classes: usize,
    /// Energy added to the class band of each synthetic sample.
    pub tone_energy: f64,
    /// Seeds the synthetic data; augmentation and shuffling use a seed
    /// derived from it.
    pub seed: u64,
    /// Read from the `[augment]` table of a config file.
    #[serde(skip)]
    pub augment: AugmentConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            variant: AugmentVariant::Policy,
            epochs: 20,
            learning_rate: 0.1,
            batch_size: 32,
            n_train: 500,
            n_val: 200,
            tau: 100,
            nu: 40,
            classes: 4,
            tone_energy: TONE_ENERGY,
            seed: 1,
            augment: AugmentConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SimError::InvalidConfig(format!("learning_rate={}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(SimError::InvalidConfig("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(SimError::InvalidConfig("batch_size must be positive".into()));
        }
        self.augment.validate().map_err(SimError::InvalidConfig)
    }

    /// Master seed for per-sample augmentation seeds.
    pub fn master_seed(&self) -> u64 {
        derive_sample_seed(self.seed, u64::MAX, u64::MAX)
    }
}

/// One epoch of the closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: u64,
    pub val_loss: PerStrategy<f64>,
    pub probability: PerStrategy<f64>,
    pub relative_loss: PerStrategy<f64>,
    pub lambda: PerStrategy<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

impl EpochTrace {
    pub fn accuracy_gap(&self) -> f64 {
        self.train_accuracy - self.val_accuracy
    }
}

const PROBE_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const SHUFFLE_SALT: u64 = 0x8CB9_2BA7_2F3D_8DD7;

/// Master seed of the validation probe for one strategy.
pub fn probe_master_seed(master_seed: u64, strategy: StrategyId) -> u64 {
    master_seed ^ PROBE_SALT.rotate_left(8 * (strategy.index() as u32 + 1))
}

/// Mean validation cross-entropy with exactly one strategy applied at its
/// fixed default parameters, for each strategy in turn. `epoch` labels the
/// report and keys the probe seeds; the dataset is only read.
pub fn evaluate_strategy_losses(
    model: &SurrogateModel,
    val: &SyntheticDataset,
    config: &AugmentConfig,
    epoch: u64,
    master_seed: u64,
) -> Result<LossReport, SimError> {
    let params = config.default_params();
    let mut losses = [0.0; 3];
    for s in StrategyId::ALL {
        let master = probe_master_seed(master_seed, s);
        let per_sample: Vec<f64> = val
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, (m, y))| {
                let plan = realize_draws(SampleSeed::new(master, epoch, i as u64), m, &params, StrategySet::single(s))?;
                let out = apply_plan(m, &plan)?;
                Ok(model.cross_entropy(&out.time_mean(), *y))
            })
            .collect::<Result<_, KernelError>>()?;
        losses[s.index()] = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    }
    Ok(LossReport { epoch, losses })
}

fn augmented_features(
    train: &SyntheticDataset,
    variant: AugmentVariant,
    state: &PolicyState,
    config: &AugmentConfig,
    epoch: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    train
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, (m, _))| {
            let plan = make_plan(variant, state, SampleSeed::new(state.master_seed, epoch, i as u64), m, config)?;
            Ok(apply_plan(m, &plan)?.time_mean())
        })
        .collect()
}

fn train_pass(
    model: &mut SurrogateModel,
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &SimConfig,
    epoch: u64,
) {
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_sample_seed(cfg.master_seed() ^ SHUFFLE_SALT, epoch, 0));
    order.shuffle(&mut rng);
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (features[i].as_slice(), labels[i])).collect();
        model.step(&batch, cfg.learning_rate);
    }
}

/// Everything a simulation produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub config: SimConfig,
    pub traces: Vec<EpochTrace>,
    pub model: SurrogateModel,
}

impl SimulationRun {
    pub fn final_trace(&self) -> Option<&EpochTrace> {
        self.traces.last()
    }
}

/// Runs the closed loop on an already generated dataset.
///
/// Epoch 0 is a bootstrap training pass; epochs `1..=epochs` each probe the
/// validation losses, advance the policy, train one pass and record a trace.
pub fn run_on_dataset(
    config: &SimConfig,
    train: &SyntheticDataset,
    val: &SyntheticDataset,
) -> Result<SimulationRun, SimError> {
    config.validate()?;
    let master = config.master_seed();
    let mut state = PolicyState::new(config.variant, config.augment.beta, master);
    let mut model = SurrogateModel::zeros(train.classes, config.nu);

    let train_labels: Vec<usize> = train.labels().collect();
    let val_labels: Vec<usize> = val.labels().collect();
    let clean_train: Vec<Vec<f64>> = train.samples.iter().map(|(m, _)| m.time_mean()).collect();
    let clean_val: Vec<Vec<f64>> = val.samples.iter().map(|(m, _)| m.time_mean()).collect();

    let features = augmented_features(train, config.variant, &state, &config.augment, 0)?;
    train_pass(&mut model, &features, &train_labels, config, 0);

    let mut traces = Vec::with_capacity(config.epochs as usize);
    for epoch in 1..=config.epochs {
        let report = evaluate_strategy_losses(&model, val, &config.augment, epoch, master)?;
        state = state.advance_epoch(&report)?;
        let features = augmented_features(train, config.variant, &state, &config.augment, epoch)?;
        train_pass(&mut model, &features, &train_labels, config, epoch);
        traces.push(EpochTrace {
            epoch,
            val_loss: report.losses,
            probability: state.probabilities,
            relative_loss: state.relative,
            lambda: state.lambda,
            train_accuracy: model.accuracy(&clean_train, &train_labels),
            val_accuracy: model.accuracy(&clean_val, &val_labels),
        });
    }
    Ok(SimulationRun { config: *config, traces, model })
}

/// Generates the synthetic data from `config` and runs the closed loop.
pub fn run_simulation(config: &SimConfig) -> Result<SimulationRun, SimError> {
    config.validate()?;
    let (train, val) = make_synthetic_dataset_with_energy(
        config.seed,
        config.n_train,
        config.n_val,
        config.tau,
        config.nu,
        config.classes,
        config.tone_energy,
    )?;
    run_on_dataset(config, &train, &val)
}
