//! Static augmentation configuration and the per-sample realized parameters.

use serde::{Deserialize, Serialize};

use crate::beta::BetaParams;

/// Value written into masked cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fill {
    Value(f64),
    Keyword(FillKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillKeyword {
    /// Mean of the utterance being augmented.
    #[serde(rename = "mean")]
    UtteranceMean,
}

impl Fill {
    pub const ZERO: Fill = Fill::Value(0.0);
    pub const MEAN: Fill = Fill::Keyword(FillKeyword::UtteranceMean);
}

impl Default for Fill {
    fn default() -> Self {
        Fill::ZERO
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Upper bound `T` on a time-mask width, in frames.
    pub time_mask_width: usize,
    /// Upper bound `F` on a frequency-mask width, in channels.
    pub freq_mask_width: usize,
    /// Frames of warp budget at strength 1.0.
    pub warp_base: usize,
    pub fill: Fill,
    /// Fixed-policy parameters used wherever strength is not scheduled.
    pub default_rho0: f64,
    pub default_time_masks: u32,
    pub default_freq_masks: u32,
    pub beta: BetaParams,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            time_mask_width: 40,
            freq_mask_width: 30,
            warp_base: 80,
            fill: Fill::ZERO,
            default_rho0: RHO0_MIN,
            default_time_masks: MASKS_MIN,
            default_freq_masks: MASKS_MIN,
            beta: BetaParams::POLICY_DEFAULT,
        }
    }
}

pub const RHO0_MIN: f64 = 0.2;
pub const RHO0_MAX: f64 = 0.6;
pub const MASKS_MIN: u32 = 2;
pub const MASKS_MAX: u32 = 6;

impl AugmentConfig {
    pub fn default_params(&self) -> RealizedParams {
        RealizedParams {
            rho0: self.default_rho0,
            n_time_masks: self.default_time_masks,
            n_freq_masks: self.default_freq_masks,
            t_width: self.time_mask_width,
            f_width: self.freq_mask_width,
            warp_base: self.warp_base,
            fill: self.fill,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.beta.validate().map_err(|e| e.to_string())?;
        self.default_params().validate()
    }
}

/// Strategy parameters for one sample, either scheduled from the strength
/// factor or copied from the fixed defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedParams {
    pub rho0: f64,
    pub n_time_masks: u32,
    pub n_freq_masks: u32,
    pub t_width: usize,
    pub f_width: usize,
    pub warp_base: usize,
    pub fill: Fill,
}

impl RealizedParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(RHO0_MIN..=RHO0_MAX).contains(&self.rho0) {
            return Err(format!("rho0={} outside [{RHO0_MIN}, {RHO0_MAX}]", self.rho0));
        }
        for (name, n) in [("n_time_masks", self.n_time_masks), ("n_freq_masks", self.n_freq_masks)] {
            if !(MASKS_MIN..=MASKS_MAX).contains(&n) {
                return Err(format!("{name}={n} outside {{{MASKS_MIN}..{MASKS_MAX}}}"));
            }
        }
        if self.t_width == 0 || self.f_width == 0 {
            return Err("mask widths T and F must be positive".into());
        }
        if let Fill::Value(v) = self.fill {
            if !v.is_finite() {
                return Err(format!("fill value {v} is not finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = AugmentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.time_mask_width, 40);
        assert_eq!(cfg.freq_mask_width, 30);
        assert_eq!(cfg.warp_base, 80);
    }

    #[test]
    fn fill_parses_number_or_mean() {
        #[derive(Deserialize)]
        struct W {
            fill: Fill,
        }
        let w: W = toml::from_str("fill = -1.5").unwrap();
        assert_eq!(w.fill, Fill::Value(-1.5));
        let w: W = toml::from_str("fill = \"mean\"").unwrap();
        assert_eq!(w.fill, Fill::MEAN);
        assert!(toml::from_str::<W>("fill = \"median\"").is_err());
    }

    #[test]
    fn out_of_range_params_rejected() {
        let mut p = AugmentConfig::default().default_params();
        p.rho0 = 0.7;
        assert!(p.validate().is_err());
        let mut p = AugmentConfig::default().default_params();
        p.n_freq_masks = 1;
        assert!(p.validate().is_err());
    }
}
