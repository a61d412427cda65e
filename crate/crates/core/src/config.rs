//! Run configuration: one structured document with a section per module.
//! Every field has a default, so a partial (or absent) file works.

use crate::birth::BirthConfig;
use crate::motion::{MotionParams, SceneBounds};
use crate::occlusion::OcclusionConfig;
use crate::sensing::{ExtentLogRange, SensorNoise};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    pub noise: SensorNoise,
    pub extent_log_range: ExtentLogRange,
    /// Weight of the stable feature mode (the unstable mode takes the rest).
    pub feature_stable_weight: f64,
    /// EMA momentum of the stable feature mode.
    pub feature_momentum: f64,
    pub feature_dim: usize,
    /// Unscented transform spread parameter.
    pub ut_kappa: f64,
    /// Ablation switch: false makes the feature likelihood uniform.
    pub use_features: bool,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            noise: SensorNoise::default(),
            extent_log_range: ExtentLogRange::default(),
            feature_stable_weight: 0.9,
            feature_momentum: 0.9,
            feature_dim: 128,
            ut_kappa: 2.0,
            use_features: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmbConfig {
    /// Hypothesis cap after truncation.
    pub h_max: usize,
    /// Gibbs sweeps per hypothesis per step.
    pub gibbs_sweeps: usize,
    pub seed: u64,
    /// Keep only the best hypothesis each step.
    pub single_hypothesis: bool,
    /// Normalized hypotheses below this weight are dropped (0 disables).
    pub weight_floor: f64,
    /// A label enters the emitted trajectory only from its n-th appearance
    /// in the estimate; suppresses single-frame clutter births (1 disables).
    pub confirm_frames: u32,
    /// Optional JSONL dump of per-step hypothesis weights and association
    /// maps.
    pub debug_dump: Option<PathBuf>,
}

impl Default for GlmbConfig {
    fn default() -> Self {
        Self {
            h_max: 1000,
            gibbs_sweeps: 1000,
            seed: 0,
            single_hypothesis: false,
            weight_floor: 1e-6,
            confirm_frames: 2,
            debug_dump: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReidConfig {
    pub enabled: bool,
    /// Recall threshold tau_R.
    pub tau_r: f64,
    /// Recall window in frames; TT tracks expire after it.
    pub t_recall: u32,
    /// Labels dropped before accumulating this many density inclusions are
    /// deleted permanently instead of retained as TT tracks; keeps
    /// short-lived clutter births out of the recall pool.
    pub min_e_count: u32,
}

impl Default for ReidConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            tau_r: 0.9,
            t_recall: 300,
            min_e_count: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub motion: MotionParams,
    pub scene: SceneBounds,
    pub sensing: SensingConfig,
    pub occlusion: OcclusionConfig,
    pub birth: BirthConfig,
    pub glmb: GlmbConfig,
    pub reid: ReidConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.glmb.h_max, 1000);
        assert_eq!(back.sensing.noise.center_var, [400.0, 400.0]);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[glmb]\nh_max = 50\nseed = 7\n\n[occlusion]\nmodel = \"constant\"\nconstant_pd = 0.8\n",
        )
        .unwrap();
        assert_eq!(cfg.glmb.h_max, 50);
        assert_eq!(cfg.glmb.seed, 7);
        assert_eq!(cfg.glmb.gibbs_sweeps, 1000);
        assert_eq!(cfg.occlusion.constant_pd, 0.8);
        assert_eq!(cfg.birth.r_max, 0.5);
        assert_eq!(cfg.reid.tau_r, 0.9);
    }
}
