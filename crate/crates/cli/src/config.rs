//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use telapart_core::detect::DetectionThresholds;
use telapart_core::model::default_min_overlap;
use telapart_core::{EpochParams, FeatureMap, HyperParams, SynthConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub pnm: PathBuf,
    pub tickets: PathBuf,
    /// Written by `synth`; read by `eval` when present.
    pub ground_truth: PathBuf,
    pub missing_truth: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            pnm: "pnm.csv".into(),
            tickets: "tickets.csv".into(),
            ground_truth: "ground_truth.csv".into(),
            missing_truth: "missing_truth.csv".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSteps {
    pub pearson: f64,
    pub missing: f64,
}

impl Default for MeshSteps {
    fn default() -> Self {
        Self {
            pearson: 0.01,
            missing: 0.01,
        }
    }
}

/// Values produced by `calibrate` (preprocessing) and `train` (everything).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibrated {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch: Option<EpochParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing_threshold_hours: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionThresholds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<FeatureMap<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub paths: Paths,
    pub interval_hours: f64,
    pub n_channels: usize,
    pub lookback_days: f64,
    pub c_thr: usize,
    /// Fixed minimum overlap; `null` derives it from the look-back.
    pub min_overlap: Option<usize>,
    pub anomaly_fraction: f64,
    pub mesh_step: MeshSteps,
    /// Training uses data before this epoch second, evaluation data after.
    pub split_ts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    pub calibrated: Calibrated,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            interval_hours: 4.0,
            n_channels: 3,
            lookback_days: 1.0,
            c_thr: 5,
            min_overlap: None,
            anomaly_fraction: telapart_core::detect::DEFAULT_ANOMALY_FRACTION,
            mesh_step: MeshSteps::default(),
            split_ts: None,
            synth: None,
            calibrated: Calibrated::default(),
        }
    }
}

/// A loaded configuration and the directory its relative paths hang off.
pub struct Loaded {
    pub path: PathBuf,
    pub base: PathBuf,
    pub config: Config,
}

impl Loaded {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            path: path.to_path_buf(),
            base,
            config,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> anyhow::Result<PathBuf> {
        let dir = self.resolve(&self.config.paths.output_dir);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    /// Rewrite the configuration file in place.
    pub fn save(&self) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.config)?;
        text.push('\n');
        fs::write(&self.path, text).with_context(|| format!("writing {}", self.path.display()))
    }
}

impl Config {
    /// Hyper-parameters from the fixed settings alone; calibrated values are
    /// library defaults.
    pub fn fixed_hyper(&self) -> HyperParams {
        let mut h = HyperParams::new(self.interval_hours, self.n_channels);
        h.lookback_days = self.lookback_days;
        h.c_thr = self.c_thr;
        h.min_overlap = self
            .min_overlap
            .unwrap_or_else(|| default_min_overlap(self.lookback_days, self.interval_hours, self.n_channels));
        h.detection.anomaly_fraction = self.anomaly_fraction;
        h
    }

    /// Fixed settings overlaid with whatever has been calibrated so far.
    pub fn base_hyper(&self) -> HyperParams {
        let mut h = self.fixed_hyper();
        let c = &self.calibrated;
        if let Some(e) = c.epoch {
            h.epoch = e;
        }
        if let Some(m) = c.missing_threshold_hours {
            h.missing_threshold_hours = m;
        }
        if let Some(d) = c.detection {
            h.detection = d;
        }
        if let Some(s) = c.similarity {
            h.similarity = s;
        }
        h
    }

    /// Fully calibrated hyper-parameters, or the list of what is missing.
    pub fn hyper(&self) -> anyhow::Result<HyperParams> {
        let c = &self.calibrated;
        let missing: Vec<&str> = [
            ("epoch", c.epoch.is_none()),
            ("missing_threshold_hours", c.missing_threshold_hours.is_none()),
            ("detection", c.detection.is_none()),
            ("similarity", c.similarity.is_none()),
        ]
        .into_iter()
        .filter_map(|(name, absent)| absent.then_some(name))
        .collect();
        if !missing.is_empty() {
            return Err(CliError::Uncalibrated(missing.join(", ")).into());
        }
        let h = self.base_hyper();
        h.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(h)
    }
}
