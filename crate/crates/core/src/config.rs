//! Run configuration: one TOML file governing every pipeline stage, plus a
//! mandatory seed (no wall-clock defaults anywhere).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FrameParams, WindowKind};
use crate::nn::TrainConfig;
use crate::select::SelectConfig;

fn default_sample_rate() -> u32 {
    22050
}
fn default_window_seconds() -> f64 {
    7.0
}
fn default_frame_length() -> usize {
    2048
}
fn default_hop() -> usize {
    512
}
fn default_rolloff() -> f64 {
    0.85
}
fn default_variance_threshold() -> f64 {
    0.02
}
fn default_chi2_top_k() -> usize {
    60
}
fn default_kde_overlap_threshold() -> f64 {
    0.75
}
fn default_spearman_threshold() -> f64 {
    0.08
}
fn default_test_fraction() -> f64 {
    0.15
}
fn default_holdout_fraction() -> f64 {
    0.2
}
fn default_cv_folds() -> usize {
    5
}
fn default_kfold_rounds() -> usize {
    4
}
fn default_nested_rounds() -> usize {
    5
}
fn default_nested_outer() -> usize {
    5
}
fn default_nested_inner() -> usize {
    3
}
fn default_near_miss_k() -> usize {
    3
}
fn default_batch_size() -> usize {
    16
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_stop_epochs() -> Vec<usize> {
    vec![140, 200, 300]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    #[serde(default = "default_frame_length")]
    pub frame_length: usize,
    #[serde(default = "default_hop")]
    pub hop: usize,
    #[serde(default = "default_rolloff")]
    pub rolloff_fraction: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        FrameSection {
            frame_length: default_frame_length(),
            hop: default_hop(),
            rolloff_fraction: default_rolloff(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    #[serde(default = "default_variance_threshold")]
    pub variance_threshold: f64,
    #[serde(default = "default_chi2_top_k")]
    pub chi2_top_k: usize,
    #[serde(default = "default_kde_overlap_threshold")]
    pub kde_overlap_threshold: f64,
    #[serde(default = "default_spearman_threshold")]
    pub spearman_threshold: f64,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            variance_threshold: default_variance_threshold(),
            chi2_top_k: default_chi2_top_k(),
            kde_overlap_threshold: default_kde_overlap_threshold(),
            spearman_threshold: default_spearman_threshold(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TuningSection {
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_kfold_rounds")]
    pub kfold_rounds: usize,
    #[serde(default = "default_nested_rounds")]
    pub nested_rounds: usize,
    #[serde(default = "default_nested_outer")]
    pub nested_outer: usize,
    #[serde(default = "default_nested_inner")]
    pub nested_inner: usize,
}

impl Default for TuningSection {
    fn default() -> Self {
        TuningSection {
            cv_folds: default_cv_folds(),
            kfold_rounds: default_kfold_rounds(),
            nested_rounds: default_nested_rounds(),
            nested_outer: default_nested_outer(),
            nested_inner: default_nested_inner(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NnSection {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_stop_epochs")]
    pub stop_epochs: Vec<usize>,
}

impl Default for NnSection {
    fn default() -> Self {
        NnSection {
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            stop_epochs: default_stop_epochs(),
        }
    }
}

/// The whole run configuration. `seed` has no default on purpose.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub manifest: Option<String>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_window_seconds")]
    pub window_seconds: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_holdout_fraction")]
    pub holdout_fraction: f64,
    #[serde(default = "default_near_miss_k")]
    pub near_miss_k: usize,
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub select: SelectSection,
    #[serde(default)]
    pub tuning: TuningSection,
    #[serde(default)]
    pub nn: NnSection,
}

impl RunConfig {
    /// Defaults with an explicit seed.
    pub fn with_seed(seed: u64) -> RunConfig {
        RunConfig {
            seed,
            manifest: None,
            out_dir: None,
            sample_rate: default_sample_rate(),
            window_seconds: default_window_seconds(),
            test_fraction: default_test_fraction(),
            holdout_fraction: default_holdout_fraction(),
            near_miss_k: default_near_miss_k(),
            frame: FrameSection::default(),
            select: SelectSection::default(),
            tuning: TuningSection::default(),
            nn: NnSection::default(),
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("sample_rate must be positive".to_string()));
        }
        if !(self.window_seconds > 0.0) {
            return Err(Error::config("window_seconds must be positive".to_string()));
        }
        for (name, v) in [
            ("test_fraction", self.test_fraction),
            ("holdout_fraction", self.holdout_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} {v} outside (0,1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.select.kde_overlap_threshold) {
            return Err(Error::config("kde_overlap_threshold outside [0,1]".to_string()));
        }
        if self.select.variance_threshold < 0.0 || self.select.spearman_threshold < 0.0 {
            return Err(Error::config("filter thresholds must be non-negative".to_string()));
        }
        if self.select.chi2_top_k == 0 {
            return Err(Error::config("chi2_top_k must be positive".to_string()));
        }
        if self.tuning.cv_folds < 2 || self.tuning.nested_outer < 2 || self.tuning.nested_inner < 2 {
            return Err(Error::config("cv fold counts must be >= 2".to_string()));
        }
        if self.tuning.kfold_rounds == 0 || self.tuning.nested_rounds == 0 {
            return Err(Error::config("search round counts must be positive".to_string()));
        }
        if self.near_miss_k == 0 {
            return Err(Error::config("near_miss_k must be positive".to_string()));
        }
        self.frame_params().validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    pub fn frame_params(&self) -> FrameParams {
        FrameParams {
            frame_length: self.frame.frame_length,
            hop: self.frame.hop,
            window: WindowKind::Hann,
            rolloff_fraction: self.frame.rolloff_fraction,
        }
    }

    pub fn select_config(&self) -> SelectConfig {
        SelectConfig {
            variance_threshold: self.select.variance_threshold,
            chi2_top_k: self.select.chi2_top_k,
            kde_overlap_threshold: self.select.kde_overlap_threshold,
            spearman_threshold: self.select.spearman_threshold,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.nn.batch_size,
            learning_rate: self.nn.learning_rate,
            stop_epochs: self.nn.stop_epochs.clone(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 42").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.sample_rate, 22050);
        assert_eq!(cfg.window_seconds, 7.0);
        assert_eq!(cfg.test_fraction, 0.15);
        assert_eq!(cfg.select.chi2_top_k, 60);
        assert_eq!(cfg.select.variance_threshold, 0.02);
        assert_eq!(cfg.select.kde_overlap_threshold, 0.75);
        assert_eq!(cfg.select.spearman_threshold, 0.08);
        assert_eq!(cfg.nn.batch_size, 16);
        assert_eq!(cfg.nn.stop_epochs, vec![140, 200, 300]);
        assert_eq!(cfg.tuning.cv_folds, 5);
        assert_eq!(cfg.tuning.kfold_rounds, 4);
        assert_eq!(cfg.tuning.nested_rounds, 5);
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(toml::from_str::<RunConfig>("sample_rate = 22050").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("seed = 1\ntypo_key = 2").is_err());
    }

    #[test]
    fn section_overrides_apply() {
        let text = r#"
            seed = 7
            test_fraction = 0.2

            [select]
            chi2_top_k = 30

            [nn]
            stop_epochs = [10, 20]
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.select.chi2_top_k, 30);
        assert_eq!(cfg.nn.stop_epochs, vec![10, 20]);
        assert_eq!(cfg.test_fraction, 0.2);
        // untouched sections keep defaults
        assert_eq!(cfg.frame.frame_length, 2048);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::with_seed(1);
        cfg.test_fraction = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::with_seed(1);
        cfg.tuning.cv_folds = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::with_seed(1);
        cfg.frame.hop = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::with_seed(1);
        cfg.nn.stop_epochs = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn load_from_file_and_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "seed = 11").unwrap();
        drop(f);
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 11);
        let err = RunConfig::load(&dir.path().join("missing.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
