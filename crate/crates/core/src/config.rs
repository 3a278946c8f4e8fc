//! JSON configuration: a compact file schema with defaults applied and
//! unknown keys rejected, mapped onto the pipeline configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estim::EstimatorConfig;
use crate::pipeline::{MergeRule, PipelineConfig, StftParams};
use crate::priors::{WindowingConfig, WindowingMode};
use crate::recluster::ReclusterConfig;
use crate::sim::SAMPLE_RATE;

/// On-disk schema. Window geometry is written in seconds and converted to
/// frames on the STFT hop grid; the remaining fields mirror the pipeline
/// configuration directly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    /// sliding-window length, seconds
    pub window_s: f64,
    /// maximum speakers per window
    pub n_w: usize,
    /// window hop, seconds; defaults to half the window
    pub window_hop_s: Option<f64>,
    pub mode: WindowingMode,
    pub stft_frame_len: usize,
    pub stft_hop: usize,
    pub n_mels: usize,
    pub diarization: EstimatorConfig,
    pub separation: EstimatorConfig,
    pub enhancement: EstimatorConfig,
    pub se_stages: usize,
    pub recluster_rounds: usize,
    pub overlap_merge: MergeRule,
    pub loss_weight: f64,
    pub recluster: ReclusterConfig,
    pub workers: Option<usize>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        ConfigFile {
            window_s: 3.0,
            n_w: 3,
            window_hop_s: None,
            mode: WindowingMode::Decoding,
            stft_frame_len: 1024,
            stft_hop: 256,
            n_mels: 40,
            diarization: EstimatorConfig::OracleBinary,
            separation: EstimatorConfig::OracleMagnitudeRatio,
            enhancement: EstimatorConfig::Identity,
            se_stages: 0,
            recluster_rounds: 1,
            overlap_merge: MergeRule::Average,
            loss_weight: 1.0,
            recluster: ReclusterConfig::default(),
            workers: None,
        }
    }
}

const ALLOWED_KEYS: &[&str] = &[
    "window_s",
    "n_w",
    "window_hop_s",
    "mode",
    "stft_frame_len",
    "stft_hop",
    "n_mels",
    "diarization",
    "separation",
    "enhancement",
    "se_stages",
    "recluster_rounds",
    "overlap_merge",
    "loss_weight",
    "recluster",
    "workers",
];

impl ConfigFile {
    /// Converts to the runtime configuration, validating every field.
    pub fn into_pipeline(self) -> Result<PipelineConfig> {
        let hop_s = self.stft_hop as f64 / SAMPLE_RATE as f64;
        if !self.window_s.is_finite() || self.window_s <= 0.0 {
            return Err(Error::Config("window_s must be positive".into()));
        }
        let window_len = (self.window_s / hop_s).round() as usize;
        if window_len == 0 {
            return Err(Error::Config(format!(
                "window_s={} is shorter than one {}-sample hop",
                self.window_s, self.stft_hop
            )));
        }
        let hop = match self.window_hop_s {
            Some(h) if h > 0.0 => ((h / hop_s).round() as usize).clamp(1, window_len),
            Some(h) => return Err(Error::Config(format!("window_hop_s={h} must be positive"))),
            None => (window_len / 2).max(1),
        };
        let cfg = PipelineConfig {
            windowing: WindowingConfig {
                window_len,
                hop,
                max_speakers: self.n_w,
                mode: self.mode,
            },
            stft: StftParams { frame_len: self.stft_frame_len, hop: self.stft_hop },
            n_mels: self.n_mels,
            diarization: self.diarization,
            separation: self.separation,
            enhancement: self.enhancement,
            se_stages: self.se_stages,
            recluster_rounds: self.recluster_rounds,
            overlap_merge: self.overlap_merge,
            loss_weight: self.loss_weight,
            recluster: self.recluster,
            workers: self.workers,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Inverse of `into_pipeline`, for round-tripping configs to disk.
    pub fn from_pipeline(cfg: &PipelineConfig) -> ConfigFile {
        let hop_s = cfg.stft.hop as f64 / SAMPLE_RATE as f64;
        ConfigFile {
            window_s: cfg.windowing.window_len as f64 * hop_s,
            n_w: cfg.windowing.max_speakers,
            window_hop_s: Some(cfg.windowing.hop as f64 * hop_s),
            mode: cfg.windowing.mode,
            stft_frame_len: cfg.stft.frame_len,
            stft_hop: cfg.stft.hop,
            n_mels: cfg.n_mels,
            diarization: cfg.diarization.clone(),
            separation: cfg.separation.clone(),
            enhancement: cfg.enhancement.clone(),
            se_stages: cfg.se_stages,
            recluster_rounds: cfg.recluster_rounds,
            overlap_merge: cfg.overlap_merge,
            loss_weight: cfg.loss_weight,
            recluster: cfg.recluster.clone(),
            workers: cfg.workers,
        }
    }
}

/// Parses a config document, rejecting unknown keys (all offenders are
/// listed) and applying defaults for the rest.
pub fn config_from_json(text: &str) -> Result<PipelineConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config("config document must be a JSON object".into()))?;
    let unknown: Vec<&str> = obj
        .keys()
        .map(|k| k.as_str())
        .filter(|k| !ALLOWED_KEYS.contains(k))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "unknown config keys: {}; allowed keys: {}",
            unknown.join(", "),
            ALLOWED_KEYS.join(", ")
        )));
    }
    let file: ConfigFile = serde_json::from_value(value)?;
    file.into_pipeline()
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)?;
    config_from_json(&text)
}

pub fn save_config(path: &Path, cfg: &PipelineConfig) -> Result<()> {
    let file = ConfigFile::from_pipeline(cfg);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_window_presets_parse() {
        let cfg = config_from_json(r#"{"window_s": 3, "n_w": 3}"#).unwrap();
        assert_eq!(cfg.windowing.window_len, 188); // 3 s of 16 ms frames, rounded
        assert_eq!(cfg.windowing.max_speakers, 3);

        let cfg = config_from_json(r#"{"window_s": 12.8, "n_w": 4}"#).unwrap();
        assert_eq!(cfg.windowing.window_len, 800);
        assert_eq!(cfg.windowing.max_speakers, 4);
    }

    #[test]
    fn zero_speaker_budget_rejected() {
        let err = config_from_json(r#"{"n_w": 0}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = config_from_json(r#"{"window_s": 3, "bogus": 1, "extra": 2}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("extra"), "{msg}");
    }

    #[test]
    fn defaulting_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"window_s": 12.8, "n_w": 4, "se_stages": 2}"#).unwrap();
        let once = load_config(&path).unwrap();
        let saved = dir.path().join("saved.json");
        save_config(&saved, &once).unwrap();
        let twice = load_config(&saved).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn estimator_kinds_round_trip() {
        let text = r#"{
            "window_s": 3,
            "n_w": 3,
            "diarization": {"kind": "noisy-oracle", "flip_rate": 0.1, "seed": 5},
            "separation": {"kind": "oracle-complex-ratio", "clamp": false},
            "enhancement": {"kind": "identity"}
        }"#;
        let cfg = config_from_json(text).unwrap();
        assert!(matches!(cfg.diarization, EstimatorConfig::NoisyOracle { .. }));
        assert!(matches!(cfg.separation, EstimatorConfig::OracleComplexRatio { clamp: false }));
    }

    #[test]
    fn default_hop_is_half_window() {
        let cfg = config_from_json(r#"{"window_s": 3, "n_w": 3}"#).unwrap();
        assert_eq!(cfg.windowing.hop, 94);
        let cfg = config_from_json(r#"{"window_s": 3, "n_w": 3, "window_hop_s": 3}"#).unwrap();
        assert_eq!(cfg.windowing.hop, cfg.windowing.window_len);
    }
}
