//! Time masking, frequency masking and time warping, plus the seeded draw
//! realization and the plan driver that composes them.
//!
//! Kernels are pure: they take drawn parameters and return a new matrix.
//! All randomness lives in [`realize_draws`], which consumes a ChaCha8 stream
//! keyed by the per-sample seed in the fixed order warp, frequency masks,
//! time masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Fill, FillKeyword, RealizedParams};
use crate::feature::{FeatureMatrix, MatrixError, SampleSeed, StrategyId, StrategySet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("mask [{start}, {end}) exceeds axis extent {extent}")]
    OutOfRange { start: usize, end: usize, extent: usize },
    #[error("infeasible warp: {0}")]
    Infeasible(String),
    #[error("plan was realized for a {expected:?} matrix, got {actual:?}")]
    ShapeMismatch { expected: (usize, usize), actual: (usize, usize) },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// One realized mask on a single axis: cells `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskDraw {
    pub start: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarpDirection {
    Left,
    Right,
}

/// One realized warp: the frame at `center` is moved `distance` frames in
/// `direction`; `budget` is the realized maximum displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpDraw {
    pub center: usize,
    pub distance: usize,
    pub direction: WarpDirection,
    pub budget: usize,
}

impl WarpDraw {
    pub fn identity(center: usize) -> Self {
        WarpDraw { center, distance: 0, direction: WarpDirection::Right, budget: 0 }
    }

    /// Where the center frame lands in the output.
    pub fn target(&self) -> usize {
        match self.direction {
            WarpDirection::Left => self.center - self.distance,
            WarpDirection::Right => self.center + self.distance,
        }
    }

    fn check(&self, tau: usize) -> Result<(), KernelError> {
        if self.distance > self.budget {
            return Err(KernelError::Infeasible(format!(
                "distance {} exceeds budget {}",
                self.distance, self.budget
            )));
        }
        if self.center < self.budget || self.center + self.budget > tau.saturating_sub(1) {
            return Err(KernelError::Infeasible(format!(
                "center {} must lie in [{}, {}] for tau={tau}",
                self.center,
                self.budget,
                tau as i64 - 1 - self.budget as i64
            )));
        }
        if self.distance > 0 && tau < 3 {
            return Err(KernelError::Infeasible(format!("tau={tau} is too short to warp")));
        }
        Ok(())
    }
}

fn check_masks(draws: &[MaskDraw], extent: usize) -> Result<(), KernelError> {
    for d in draws {
        let end = d.start.checked_add(d.width).unwrap_or(usize::MAX);
        if end > extent {
            return Err(KernelError::OutOfRange { start: d.start, end, extent });
        }
    }
    Ok(())
}

fn check_fill(fill: f64) -> Result<(), KernelError> {
    if fill.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidParams(format!("fill value {fill} is not finite")))
    }
}

/// Sets every channel of the frames covered by `draws` to `fill`.
pub fn time_mask(m: &FeatureMatrix, draws: &[MaskDraw], fill: f64) -> Result<FeatureMatrix, KernelError> {
    check_masks(draws, m.tau())?;
    check_fill(fill)?;
    let nu = m.nu();
    let mut values = m.values().to_vec();
    for d in draws {
        values[d.start * nu..(d.start + d.width) * nu].fill(fill);
    }
    Ok(FeatureMatrix::from_parts_unchecked(m.tau(), nu, values))
}

/// Sets the channels covered by `draws` to `fill` in every frame.
pub fn freq_mask(m: &FeatureMatrix, draws: &[MaskDraw], fill: f64) -> Result<FeatureMatrix, KernelError> {
    check_masks(draws, m.nu())?;
    check_fill(fill)?;
    let nu = m.nu();
    let mut values = m.values().to_vec();
    for frame in values.chunks_exact_mut(nu) {
        for d in draws {
            frame[d.start..d.start + d.width].fill(fill);
        }
    }
    Ok(FeatureMatrix::from_parts_unchecked(m.tau(), nu, values))
}

/// Source position for every output frame under the two-segment linear map
/// with knots `s(0) = 0`, `s(target) = center`, `s(tau-1) = tau-1`.
pub fn warp_source_map(tau: usize, d: &WarpDraw) -> Vec<f64> {
    let last = tau.saturating_sub(1);
    let c = d.center as f64;
    let cp = d.target();
    let end = last as f64;
    (0..tau)
        .map(|t| {
            if t == 0 || t == last {
                t as f64
            } else if t <= cp {
                t as f64 * c / cp as f64
            } else {
                c + (t - cp) as f64 * (end - c) / (last - cp) as f64
            }
        })
        .collect()
}

/// Remaps the time axis so the `center` frame moves to `center ± distance`,
/// linearly interpolating between neighbouring input frames.
pub fn time_warp(m: &FeatureMatrix, d: &WarpDraw) -> Result<FeatureMatrix, KernelError> {
    let tau = m.tau();
    d.check(tau)?;
    if d.distance == 0 {
        return Ok(m.clone());
    }
    let nu = m.nu();
    let mut values = Vec::with_capacity(tau * nu);
    for s in warp_source_map(tau, d) {
        let lo = (s.floor() as usize).min(tau - 1);
        let hi = (lo + 1).min(tau - 1);
        let frac = s - lo as f64;
        let (a, b) = (m.frame(lo), m.frame(hi));
        if frac == 0.0 {
            values.extend_from_slice(a);
        } else {
            values.extend(a.iter().zip(b).map(|(x, y)| x + frac * (y - x)));
        }
    }
    Ok(FeatureMatrix::from_parts_unchecked(tau, nu, values))
}

/// Frame budget for a warp of strength `rho0`, clamped so a warp point with
/// room on both sides always exists.
pub fn warp_budget(rho0: f64, warp_base: usize, tau: usize) -> usize {
    let raw = (rho0 * warp_base as f64).round().max(0.0) as usize;
    let cap = tau.saturating_sub(2) / 2;
    raw.min(cap)
}

/// The draws for one set of active strategies, all sharing one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStage {
    pub active: StrategySet,
    pub params: RealizedParams,
    /// The fill value resolved against the source matrix.
    pub fill: f64,
    pub warp: Option<WarpDraw>,
    pub freq_masks: Vec<MaskDraw>,
    pub time_masks: Vec<MaskDraw>,
}

/// Every random choice needed to augment one sample. Stages are applied in
/// order; within a stage the order is warp, frequency masks, time masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub sample_index: u64,
    pub seed: SampleSeed,
    pub tau: usize,
    pub nu: usize,
    pub active: StrategySet,
    pub stages: Vec<PlanStage>,
}

impl AugmentationPlan {
    pub fn empty(seed: SampleSeed, shape: (usize, usize)) -> Self {
        AugmentationPlan {
            sample_index: seed.sample_index,
            seed,
            tau: shape.0,
            nu: shape.1,
            active: StrategySet::EMPTY,
            stages: Vec::new(),
        }
    }

    pub fn push_stage(&mut self, stage: PlanStage) {
        self.active = self.active.union(stage.active);
        self.stages.push(stage);
    }

    pub fn operation_count(&self) -> usize {
        self.stages
            .iter()
            .map(|s| s.warp.is_some() as usize + s.freq_masks.len() + s.time_masks.len())
            .sum()
    }
}

/// ChaCha stream reserved for strategy selection.
pub(crate) const SELECT_STREAM: u64 = 0;
/// ChaCha stream for the primary draw stage.
pub(crate) const DRAW_STREAM: u64 = 1;
/// ChaCha stream for the appended fixed-parameter stage.
pub(crate) const EXTRA_DRAW_STREAM: u64 = 2;

pub(crate) fn stream_rng(seed: &SampleSeed, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.derived);
    rng.set_stream(stream);
    rng
}

fn draw_masks(rng: &mut ChaCha8Rng, count: u32, max_width: usize, extent: usize) -> Vec<MaskDraw> {
    let cap = max_width.min(extent);
    (0..count)
        .map(|_| {
            let width = rng.random_range(0..=cap);
            let start = rng.random_range(0..=extent - width);
            MaskDraw { start, width }
        })
        .collect()
}

pub(crate) fn realize_stage(
    rng: &mut ChaCha8Rng,
    m: &FeatureMatrix,
    p: &RealizedParams,
    active: StrategySet,
) -> Result<PlanStage, KernelError> {
    p.validate().map_err(KernelError::InvalidParams)?;
    let (tau, nu) = m.shape();
    let fill = match p.fill {
        Fill::Value(v) => v,
        Fill::Keyword(FillKeyword::UtteranceMean) => m.mean(),
    };

    let warp = active.contains(StrategyId::TimeWarp).then(|| {
        let budget = warp_budget(p.rho0, p.warp_base, tau);
        let center = rng.random_range(budget..=tau - 1 - budget);
        let distance = rng.random_range(0..=budget);
        let direction = if rng.random_bool(0.5) { WarpDirection::Right } else { WarpDirection::Left };
        WarpDraw { center, distance, direction, budget }
    });
    let freq_masks = if active.contains(StrategyId::FreqMask) {
        draw_masks(rng, p.n_freq_masks, p.f_width, nu)
    } else {
        Vec::new()
    };
    let time_masks = if active.contains(StrategyId::TimeMask) {
        draw_masks(rng, p.n_time_masks, p.t_width, tau)
    } else {
        Vec::new()
    };
    Ok(PlanStage { active, params: *p, fill, warp, freq_masks, time_masks })
}

/// Draws the random parameters of every active strategy for one sample.
pub fn realize_draws(
    seed: SampleSeed,
    m: &FeatureMatrix,
    p: &RealizedParams,
    active: StrategySet,
) -> Result<AugmentationPlan, KernelError> {
    m.validate()?;
    let mut plan = AugmentationPlan::empty(seed, m.shape());
    if !active.is_empty() {
        let mut rng = stream_rng(&seed, DRAW_STREAM);
        plan.push_stage(realize_stage(&mut rng, m, p, active)?);
    }
    Ok(plan)
}

pub fn apply_stage(m: &FeatureMatrix, stage: &PlanStage) -> Result<FeatureMatrix, KernelError> {
    let mut out = match &stage.warp {
        Some(w) => time_warp(m, w)?,
        None => m.clone(),
    };
    if !stage.freq_masks.is_empty() {
        out = freq_mask(&out, &stage.freq_masks, stage.fill)?;
    }
    if !stage.time_masks.is_empty() {
        out = time_mask(&out, &stage.time_masks, stage.fill)?;
    }
    Ok(out)
}

/// Applies a realized plan to the matrix it was realized for.
pub fn apply_plan(m: &FeatureMatrix, plan: &AugmentationPlan) -> Result<FeatureMatrix, KernelError> {
    if m.shape() != (plan.tau, plan.nu) {
        return Err(KernelError::ShapeMismatch { expected: (plan.tau, plan.nu), actual: m.shape() });
    }
    let mut out = m.clone();
    for stage in &plan.stages {
        out = apply_stage(&out, stage)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AugmentConfig;

    fn ones(tau: usize, nu: usize) -> FeatureMatrix {
        FeatureMatrix::filled(tau, nu, 1.0).unwrap()
    }

    fn ramp(tau: usize, nu: usize) -> FeatureMatrix {
        FeatureMatrix::from_fn(tau, nu, |t, c| (t * nu + c) as f64 * 0.5 - 3.0).unwrap()
    }

    #[test]
    fn time_mask_zeroes_rows() {
        let out = time_mask(&ones(10, 4), &[MaskDraw { start: 2, width: 3 }], 0.0).unwrap();
        for t in 0..10 {
            let expected = if (2..5).contains(&t) { 0.0 } else { 1.0 };
            assert!(out.frame(t).iter().all(|&v| v == expected), "frame {t}");
        }
    }

    #[test]
    fn overlapping_time_masks_union() {
        let draws = [MaskDraw { start: 2, width: 3 }, MaskDraw { start: 4, width: 2 }];
        let out = time_mask(&ones(10, 4), &draws, 0.0).unwrap();
        // By hand: first mask covers 2,3,4; second covers 4,5.
        let zero_rows: Vec<usize> = (0..10).filter(|&t| out.frame(t)[0] == 0.0).collect();
        assert_eq!(zero_rows, vec![2, 3, 4, 5]);
    }

    #[test]
    fn zero_width_masks_are_identity() {
        let m = ramp(7, 5);
        let d = [MaskDraw { start: 3, width: 0 }];
        assert_eq!(time_mask(&m, &d, 9.0).unwrap(), m);
        assert_eq!(freq_mask(&m, &d, 9.0).unwrap(), m);
    }

    #[test]
    fn freq_mask_zeroes_channels() {
        let out = freq_mask(&ones(4, 10), &[MaskDraw { start: 1, width: 2 }], 0.0).unwrap();
        for t in 0..4 {
            for c in 0..10 {
                let expected = if c == 1 || c == 2 { 0.0 } else { 1.0 };
                assert_eq!(out.get(t, c), expected);
            }
        }
    }

    #[test]
    fn full_coverage_freq_mask_is_constant() {
        let draws = [MaskDraw { start: 0, width: 6 }, MaskDraw { start: 6, width: 4 }];
        let out = freq_mask(&ramp(5, 10), &draws, -2.5).unwrap();
        assert!(out.values().iter().all(|&v| v == -2.5));
    }

    #[test]
    fn masks_out_of_range_fail() {
        let m = ones(10, 4);
        assert!(matches!(
            time_mask(&m, &[MaskDraw { start: 8, width: 3 }], 0.0),
            Err(KernelError::OutOfRange { extent: 10, .. })
        ));
        assert!(matches!(
            freq_mask(&m, &[MaskDraw { start: 3, width: 2 }], 0.0),
            Err(KernelError::OutOfRange { extent: 4, .. })
        ));
    }

    #[test]
    fn zero_distance_warp_is_identity() {
        let m = ramp(12, 3);
        let d = WarpDraw { center: 5, distance: 0, direction: WarpDirection::Left, budget: 3 };
        assert_eq!(time_warp(&m, &d).unwrap(), m);
    }

    #[test]
    fn warp_of_constant_is_constant() {
        let m = FeatureMatrix::filled(20, 4, 5.0).unwrap();
        for (center, distance, direction) in
            [(6, 3, WarpDirection::Left), (10, 5, WarpDirection::Right), (13, 1, WarpDirection::Right)]
        {
            let d = WarpDraw { center, distance, direction, budget: 6 };
            let out = time_warp(&m, &d).unwrap();
            assert!(out.values().iter().all(|&v| v == 5.0));
        }
    }

    #[test]
    fn golden_eight_frame_warp() {
        // s(t) = 4t/5 for t <= 5, then 4 + (t - 5) * 3/2; input frames hold
        // their own index so the output equals s(t).
        let m = FeatureMatrix::from_fn(8, 1, |t, _| t as f64).unwrap();
        let d = WarpDraw { center: 4, distance: 1, direction: WarpDirection::Right, budget: 1 };
        let out = time_warp(&m, &d).unwrap();
        let golden = [0.0, 0.8, 1.6, 2.4, 3.2, 4.0, 5.5, 7.0];
        for (t, (got, want)) in out.values().iter().zip(golden).enumerate() {
            assert!((got - want).abs() < 1e-12, "frame {t}: {got} vs {want}");
        }
    }

    #[test]
    fn warp_keeps_first_and_last_frames() {
        let m = ramp(30, 2);
        let d = WarpDraw { center: 12, distance: 7, direction: WarpDirection::Left, budget: 9 };
        let out = time_warp(&m, &d).unwrap();
        assert_eq!(out.frame(0), m.frame(0));
        assert_eq!(out.frame(29), m.frame(29));
    }

    #[test]
    fn degenerate_warp_to_edge_still_pins_endpoints() {
        // distance == budget == center pushes the control point onto frame 0.
        let m = ramp(10, 1);
        let d = WarpDraw { center: 3, distance: 3, direction: WarpDirection::Left, budget: 3 };
        let s = warp_source_map(10, &d);
        assert_eq!(s[0], 0.0);
        assert_eq!(s[9], 9.0);
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        let out = time_warp(&m, &d).unwrap();
        assert_eq!(out.frame(0), m.frame(0));
    }

    #[test]
    fn infeasible_warps_rejected() {
        let m = ramp(10, 1);
        let too_far = WarpDraw { center: 4, distance: 3, direction: WarpDirection::Right, budget: 2 };
        assert!(matches!(time_warp(&m, &too_far), Err(KernelError::Infeasible(_))));
        let off_center = WarpDraw { center: 1, distance: 1, direction: WarpDirection::Right, budget: 2 };
        assert!(matches!(time_warp(&m, &off_center), Err(KernelError::Infeasible(_))));
        let short = ramp(2, 1);
        let d = WarpDraw { center: 0, distance: 1, direction: WarpDirection::Right, budget: 1 };
        assert!(time_warp(&short, &d).is_err());
    }

    #[test]
    fn budget_rounds_and_clamps() {
        assert_eq!(warp_budget(0.2, 80, 1000), 16);
        assert_eq!(warp_budget(0.6, 80, 1000), 48);
        assert_eq!(warp_budget(0.6, 80, 100), 48);
        assert_eq!(warp_budget(0.6, 80, 50), 24);
        assert_eq!(warp_budget(0.6, 80, 3), 0);
        assert_eq!(warp_budget(0.6, 80, 1), 0);
    }

    #[test]
    fn empty_active_set_gives_empty_plan() {
        let m = ramp(10, 4);
        let plan = realize_draws(SampleSeed::new(1, 0, 0), &m, &AugmentConfig::default().default_params(), StrategySet::EMPTY)
            .unwrap();
        assert_eq!(plan.operation_count(), 0);
        assert_eq!(apply_plan(&m, &plan).unwrap(), m);
    }

    #[test]
    fn tiny_matrix_clamps_warp_to_identity() {
        let m = ramp(3, 2);
        let mut p = AugmentConfig::default().default_params();
        p.rho0 = 0.6;
        let plan = realize_draws(SampleSeed::new(5, 1, 2), &m, &p, StrategySet::single(StrategyId::TimeWarp)).unwrap();
        let w = plan.stages[0].warp.unwrap();
        assert_eq!(w.budget, 0);
        assert_eq!(w.distance, 0);
        assert_eq!(apply_plan(&m, &plan).unwrap(), m);
    }

    #[test]
    fn single_freq_mask_plan_matches_direct_call() {
        let m = ramp(6, 8);
        let mut p = AugmentConfig::default().default_params();
        p.f_width = 3;
        let plan = realize_draws(SampleSeed::new(9, 0, 4), &m, &p, StrategySet::single(StrategyId::FreqMask)).unwrap();
        let stage = &plan.stages[0];
        assert!(stage.warp.is_none() && stage.time_masks.is_empty());
        assert_eq!(stage.freq_masks.len(), 2);
        let direct = freq_mask(&m, &stage.freq_masks, stage.fill).unwrap();
        assert_eq!(apply_plan(&m, &plan).unwrap(), direct);
    }

    #[test]
    fn realize_is_deterministic() {
        let m = ramp(50, 20);
        let p = AugmentConfig::default().default_params();
        let seed = SampleSeed::new(3, 2, 1);
        let a = realize_draws(seed, &m, &p, StrategySet::ALL).unwrap();
        let b = realize_draws(seed, &m, &p, StrategySet::ALL).unwrap();
        assert_eq!(a, b);
        let other = realize_draws(SampleSeed::new(3, 2, 2), &m, &p, StrategySet::ALL).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn mean_fill_resolves_against_input() {
        let m = FeatureMatrix::from_fn(4, 2, |t, _| t as f64).unwrap();
        let mut p = AugmentConfig::default().default_params();
        p.fill = Fill::MEAN;
        let plan = realize_draws(SampleSeed::new(0, 0, 0), &m, &p, StrategySet::single(StrategyId::TimeMask)).unwrap();
        assert_eq!(plan.stages[0].fill, 1.5);
    }

    #[test]
    fn apply_rejects_shape_mismatch() {
        let m = ramp(10, 4);
        let plan = realize_draws(SampleSeed::new(0, 0, 0), &m, &AugmentConfig::default().default_params(), StrategySet::ALL)
            .unwrap();
        assert!(matches!(apply_plan(&ramp(10, 5), &plan), Err(KernelError::ShapeMismatch { .. })));
    }
}
