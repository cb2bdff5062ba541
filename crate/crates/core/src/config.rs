//! Pipeline configuration.
//!
//! Loaded from a JSON object whose keys are the field names below. Unknown
//! keys are rejected so that typos do not silently fall back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five activities, or five activities plus the `Void` transition class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ClassMode {
    Five,
    Six,
}

impl ClassMode {
    pub fn n_classes(self) -> usize {
        match self {
            ClassMode::Five => 5,
            ClassMode::Six => 6,
        }
    }
}

impl TryFrom<u8> for ClassMode {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            5 => Ok(ClassMode::Five),
            6 => Ok(ClassMode::Six),
            _ => Err(format!("class_mode must be 5 or 6, got {v}")),
        }
    }
}

impl From<ClassMode> for u8 {
    fn from(m: ClassMode) -> u8 {
        m.n_classes() as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Gaze quantization thresholds. `None` estimates them from the training
    /// split (50th / 90th percentile of |coefficient|).
    pub tau_small: Option<f64>,
    pub tau_large: Option<f64>,
    /// Ego-motion quantization thresholds, estimated the same way when absent.
    pub motion_tau_small: Option<f64>,
    pub motion_tau_large: Option<f64>,
    pub wavelet_scale: usize,
    pub window_seconds: f64,
    pub stride_seconds: f64,
    pub k_visual_words: usize,
    pub patch_size: usize,
    pub median_filter_width: usize,
    /// Video frame rate; gaze is resampled onto this clock.
    pub frame_rate: f64,
    /// Run the ego-motion signal through the wavelet before quantizing.
    pub motion_use_wavelet: bool,
    pub n_trees: usize,
    /// Features tried per node; `None` means floor(sqrt(dimension)).
    pub mtry: Option<usize>,
    pub max_corners: usize,
    pub corner_quality: f64,
    pub corner_min_distance: f64,
    pub lk_window: usize,
    pub lk_levels: usize,
    pub fb_threshold: f64,
    pub kmeans_max_iter: usize,
    pub rng_seed: u64,
    pub class_mode: ClassMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau_small: None,
            tau_large: None,
            motion_tau_small: None,
            motion_tau_large: None,
            wavelet_scale: 10,
            window_seconds: 25.0,
            stride_seconds: 1.0,
            k_visual_words: 15,
            patch_size: 200,
            median_filter_width: 5,
            frame_rate: 30.0,
            motion_use_wavelet: true,
            n_trees: 200,
            mtry: None,
            max_corners: 200,
            corner_quality: 0.01,
            corner_min_distance: 8.0,
            lk_window: 15,
            lk_levels: 3,
            fb_threshold: 1.0,
            kmeans_max_iter: 100,
            rng_seed: 0,
            class_mode: ClassMode::Six,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json(j) => Error::format(path, j.to_string()),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_taus("tau", self.tau_small, self.tau_large)?;
        check_taus("motion_tau", self.motion_tau_small, self.motion_tau_large)?;
        if self.wavelet_scale < 2 || self.wavelet_scale % 2 != 0 {
            return Err(Error::param(format!(
                "wavelet_scale must be even and >= 2, got {}",
                self.wavelet_scale
            )));
        }
        if !(self.stride_seconds > 0.0 && self.window_seconds > self.stride_seconds) {
            return Err(Error::param("require window_seconds > stride_seconds > 0"));
        }
        if self.median_filter_width % 2 == 0 {
            return Err(Error::param("median_filter_width must be odd"));
        }
        if self.k_visual_words == 0 || self.n_trees == 0 {
            return Err(Error::param("k_visual_words and n_trees must be positive"));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::param("frame_rate must be positive"));
        }
        if self.lk_levels == 0 || self.lk_window < 3 {
            return Err(Error::param("lk_levels >= 1 and lk_window >= 3 required"));
        }
        Ok(())
    }
}

fn check_taus(name: &str, small: Option<f64>, large: Option<f64>) -> Result<()> {
    match (small, large) {
        (None, None) => Ok(()),
        (Some(s), Some(l)) if 0.0 < s && s < l => Ok(()),
        (Some(s), Some(l)) => Err(Error::param(format!(
            "{name}: require 0 < {name}_small < {name}_large, got {s} and {l}"
        ))),
        _ => Err(Error::param(format!(
            "{name}_small and {name}_large must be given together"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = PipelineConfig::from_json_str(r#"{"window_secs": 20}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg =
            PipelineConfig::from_json_str(r#"{"tau_small": 0.5, "tau_large": 2.0, "class_mode": 5}"#)
                .unwrap();
        assert_eq!(cfg.class_mode, ClassMode::Five);
        assert_eq!(cfg.wavelet_scale, 10);
        assert_eq!(cfg.tau_large, Some(2.0));
    }

    #[test]
    fn invariants_enforced() {
        for bad in [
            r#"{"tau_small": 2.0, "tau_large": 1.0}"#,
            r#"{"tau_small": 1.0}"#,
            r#"{"wavelet_scale": 9}"#,
            r#"{"window_seconds": 1.0, "stride_seconds": 1.0}"#,
            r#"{"median_filter_width": 4}"#,
            r#"{"class_mode": 7}"#,
        ] {
            assert!(PipelineConfig::from_json_str(bad).is_err(), "{bad}");
        }
    }
}
