//! JSON record of what a run used and produced.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tanet_core::config::ModelConfig;
use tanet_core::model::ParamCounts;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub preset: String,
    pub input_size: usize,
    pub rgb_channels: [usize; 4],
    pub rgb_depths: [usize; 4],
    pub rgb_heads: [usize; 4],
    pub rgb_sr_ratios: [usize; 4],
    pub rgb_mlp_ratios: [usize; 4],
    pub depth_base_channels: usize,
    pub depth_adjust_channels: usize,
    pub depth_expansion: usize,
    pub depth_channels: [usize; 4],
    pub depth_strides: [usize; 4],
    pub rfeb_heads: [usize; 4],
    pub rfeb_mlp_ratio: usize,
    pub gate_reduction: usize,
    pub decoder_width: usize,
    pub use_cmffm: bool,
    pub use_eem: bool,
}

impl From<&ModelConfig> for ConfigSnapshot {
    fn from(c: &ModelConfig) -> Self {
        Self {
            preset: c.preset.name().into(),
            input_size: c.input_size,
            rgb_channels: c.rgb.channels,
            rgb_depths: c.rgb.depths,
            rgb_heads: c.rgb.heads,
            rgb_sr_ratios: c.rgb.sr_ratios,
            rgb_mlp_ratios: c.rgb.mlp_ratios,
            depth_base_channels: c.depth.base_channels,
            depth_adjust_channels: c.depth.adjust_channels,
            depth_expansion: c.depth.expansion,
            depth_channels: c.depth.channels,
            depth_strides: c.depth.strides,
            rfeb_heads: c.rfeb_heads,
            rfeb_mlp_ratio: c.rfeb_mlp_ratio,
            gate_reduction: c.gate_reduction,
            decoder_width: c.decoder_width,
            use_cmffm: c.use_cmffm,
            use_eem: c.use_eem,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountSnapshot {
    pub rgb: usize,
    pub depth: usize,
    pub cmffm: usize,
    pub decoder: usize,
    pub eem: usize,
    pub heads: usize,
    pub total: usize,
    pub symmetric_total: usize,
}

impl From<&ParamCounts> for CountSnapshot {
    fn from(c: &ParamCounts) -> Self {
        Self {
            rgb: c.rgb,
            depth: c.depth,
            cmffm: c.cmffm,
            decoder: c.decoder,
            eem: c.eem,
            heads: c.heads,
            total: c.total,
            symmetric_total: c.symmetric_total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTiming {
    pub image: String,
    pub millis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ConfigSnapshot,
    pub seed: u64,
    pub checkpoint: Option<String>,
    pub output_dir: String,
    pub timing: Vec<ImageTiming>,
    pub param_counts: CountSnapshot,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: &str, config: &ModelConfig, counts: &ParamCounts, checkpoint: Option<&Path>, out: &Path) -> Self {
        Self {
            command: command.into(),
            config: config.into(),
            seed: config.seed,
            checkpoint: checkpoint.map(|p| p.display().to_string()),
            output_dir: out.display().to_string(),
            timing: Vec::new(),
            param_counts: counts.into(),
        }
    }

    /// Write `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
