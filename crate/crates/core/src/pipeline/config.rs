use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analytics::GmmParams;
use crate::dsp::SpectrogramConfig;
use crate::embedding::TrainConfig;
use crate::error::{Error, Result};
use crate::segmentation::SegmentParams;

/// Flat JSON configuration shared by every stage.
///
/// Relative paths are resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: String,
    pub audio_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,

    pub resample_hz: Option<f64>,
    pub lowcut_hz: f64,
    pub highcut_hz: Option<f64>,

    pub n_fft: usize,
    pub hop: usize,
    pub floor_db: f64,
    pub denoise: bool,
    pub noise_quantile: f64,
    pub over_db: f64,

    pub threshold_db: f64,
    pub min_dur_s: f64,
    pub min_gap_s: f64,

    pub unit_rows: usize,
    pub unit_cols: usize,
    pub vae_hidden: usize,
    pub vae_latent: usize,
    pub vae_epochs: usize,
    pub vae_batch_size: usize,
    pub vae_lr: f64,
    pub vae_beta: f64,

    pub var_order: usize,
    pub gmm_components: usize,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    pub dtw_band: Option<usize>,
    pub dtw_normalize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let spec = SpectrogramConfig::default();
        Self {
            version: "1".into(),
            audio_dir: "audio".into(),
            output_dir: "out".into(),
            seed: 0,
            resample_hz: None,
            lowcut_hz: 0.0,
            highcut_hz: None,
            n_fft: spec.n_fft,
            hop: spec.hop,
            floor_db: spec.floor_db,
            denoise: true,
            noise_quantile: 0.2,
            over_db: 10.0,
            threshold_db: -30.0,
            min_dur_s: 0.02,
            min_gap_s: 0.01,
            unit_rows: 32,
            unit_cols: 32,
            vae_hidden: 64,
            vae_latent: 16,
            vae_epochs: 200,
            vae_batch_size: 16,
            vae_lr: 1e-3,
            vae_beta: 1.0,
            var_order: 1,
            gmm_components: 2,
            gmm_max_iters: 200,
            gmm_tol: 1e-8,
            dtw_band: None,
            dtw_normalize: false,
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    /// Parses a JSON object, naming the first unknown or ill-typed key on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| config_err("<root>", e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(config_err("<root>", "config must be a JSON object"));
        };
        let defaults = match serde_json::to_value(Self::default())? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        for (key, v) in &map {
            if !defaults.contains_key(key) {
                return Err(config_err(key, "unknown key"));
            }
            let mut probe: Map<String, Value> = Map::new();
            probe.insert(key.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<Self>(Value::Object(probe)) {
                return Err(config_err(key, e.to_string()));
            }
        }
        let cfg: Self = serde_json::from_value(Value::Object(map)).map_err(|e| config_err("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file and resolves its relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.audio_dir = base.join(&cfg.audio_dir);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Err(Error::InvalidArgument(msg)) = self.spectrogram().validate() {
            let key = if msg.starts_with("n_fft") {
                "n_fft"
            } else if msg.starts_with("hop") {
                "hop"
            } else {
                "floor_db"
            };
            return Err(config_err(key, msg));
        }
        let checks: [(&str, bool, &str); 17] = [
            ("version", !self.version.is_empty(), "must be non-empty"),
            ("resample_hz", self.resample_hz.is_none_or(|r| r > 0.0 && r.is_finite()), "must be positive"),
            ("lowcut_hz", self.lowcut_hz >= 0.0 && self.lowcut_hz.is_finite(), "must be non-negative"),
            ("highcut_hz", self.highcut_hz.is_none_or(|h| h > self.lowcut_hz), "must exceed lowcut_hz"),
            ("noise_quantile", self.noise_quantile > 0.0 && self.noise_quantile < 1.0, "must lie in (0, 1)"),
            ("over_db", self.over_db >= 0.0 && self.over_db.is_finite(), "must be non-negative"),
            ("threshold_db", self.threshold_db.is_finite(), "must be finite"),
            ("min_dur_s", self.min_dur_s >= 0.0, "must be non-negative"),
            ("min_gap_s", self.min_gap_s >= 0.0, "must be non-negative"),
            ("unit_rows", self.unit_rows > 0, "must be positive"),
            ("unit_cols", self.unit_cols > 0, "must be positive"),
            ("vae_hidden", self.vae_hidden > 0, "must be positive"),
            ("vae_latent", self.vae_latent > 0, "must be positive"),
            ("vae_batch_size", self.vae_batch_size > 0, "must be positive"),
            ("vae_lr", self.vae_lr >= 0.0 && self.vae_lr.is_finite(), "must be non-negative"),
            ("var_order", self.var_order > 0, "must be at least 1"),
            ("gmm_components", self.gmm_components > 0, "must be at least 1"),
        ];
        for (key, ok, msg) in checks {
            if !ok {
                return Err(config_err(key, msg));
            }
        }
        if !(self.vae_beta >= 0.0 && self.vae_beta.is_finite()) {
            return Err(config_err("vae_beta", "must be non-negative"));
        }
        if !(self.gmm_tol >= 0.0) {
            return Err(config_err("gmm_tol", "must be non-negative"));
        }
        Ok(())
    }

    pub fn spectrogram(&self) -> SpectrogramConfig {
        SpectrogramConfig {
            n_fft: self.n_fft,
            hop: self.hop,
            floor_db: self.floor_db,
        }
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            threshold_db: self.threshold_db,
            min_dur_s: self.min_dur_s,
            min_gap_s: self.min_gap_s,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.vae_epochs,
            batch_size: self.vae_batch_size,
            lr: self.vae_lr,
            beta: self.vae_beta,
            seed: self.seed,
        }
    }

    pub fn gmm_params(&self) -> GmmParams {
        GmmParams {
            components: self.gmm_components,
            seed: self.seed,
            max_iters: self.gmm_max_iters,
            tol: self.gmm_tol,
        }
    }

    pub fn unit_input_dim(&self) -> usize {
        self.unit_rows * self.unit_cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(r: Result<PipelineConfig>) -> String {
        match r {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        assert_eq!(key_of(PipelineConfig::from_json(r#"{"n_ftt": 512}"#)), "n_ftt");
        assert_eq!(key_of(PipelineConfig::from_json(r#"{"hop": "fast"}"#)), "hop");
        assert_eq!(key_of(PipelineConfig::from_json(r#"{"hop": 1024}"#)), "hop");
        assert_eq!(key_of(PipelineConfig::from_json(r#"{"noise_quantile": 1.5}"#)), "noise_quantile");
        assert_eq!(key_of(PipelineConfig::from_json(r#"{"n_fft": 500}"#)), "n_fft");
        assert_eq!(key_of(PipelineConfig::from_json("[1]")), "<root>");
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = PipelineConfig {
            seed: 9,
            dtw_band: Some(3),
            highcut_hz: Some(6000.0),
            ..PipelineConfig::default()
        };
        assert_eq!(PipelineConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }
}
