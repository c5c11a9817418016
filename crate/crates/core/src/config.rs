//! Architecture hyperparameters and the two presets.

use alloc::format;

use crate::error::{Error, Result};

/// Stride of each pyramid level relative to the input image.
pub const LEVEL_SCALES: [usize; 4] = [4, 8, 16, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Desk-scale widths (16, 32, 48, 64), one block per stage.
    Tiny,
    /// Reference widths (64, 128, 320, 512), stage depths (3, 4, 6, 3).
    Full,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "full" => Ok(Preset::Full),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RgbEncoderConfig {
    pub channels: [usize; 4],
    pub depths: [usize; 4],
    pub heads: [usize; 4],
    pub sr_ratios: [usize; 4],
    pub mlp_ratios: [usize; 4],
}

/// One stage of the RGB backbone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RgbStageConfig {
    pub depth: usize,
    pub heads: usize,
    pub embed_channels: usize,
    pub sr_ratio: usize,
    pub mlp_ratio: usize,
    pub patch_embed: crate::attention::PatchEmbedParams,
}

impl RgbEncoderConfig {
    pub fn stage(&self, i: usize) -> RgbStageConfig {
        use crate::attention::PatchEmbedParams;
        let patch_embed = if i == 0 {
            PatchEmbedParams::stem(3, self.channels[0])
        } else {
            PatchEmbedParams::downsample(self.channels[i - 1], self.channels[i])
        };
        RgbStageConfig {
            depth: self.depths[i],
            heads: self.heads[i],
            embed_channels: self.channels[i],
            sr_ratio: self.sr_ratios[i],
            mlp_ratio: self.mlp_ratios[i],
            patch_embed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DepthNetConfig {
    /// Width of the shared 1/4-scale base feature.
    pub base_channels: usize,
    /// Width after the 1×1 adjustment that feeds the parallel branches.
    pub adjust_channels: usize,
    /// Bottleneck expansion: inner width = output width / expansion.
    pub expansion: usize,
    pub channels: [usize; 4],
    /// Branch strides relative to the base feature.
    pub strides: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub preset: Preset,
    pub input_size: usize,
    pub rgb: RgbEncoderConfig,
    pub depth: DepthNetConfig,
    pub rfeb_heads: [usize; 4],
    pub rfeb_mlp_ratio: usize,
    /// Squeeze ratio of the channel gate's first fully connected layer.
    pub gate_reduction: usize,
    pub decoder_width: usize,
    pub use_cmffm: bool,
    pub use_eem: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn tiny() -> Self {
        Self {
            preset: Preset::Tiny,
            input_size: 320,
            rgb: RgbEncoderConfig {
                channels: [16, 32, 48, 64],
                depths: [1, 1, 1, 1],
                heads: [1, 1, 1, 1],
                sr_ratios: [8, 4, 2, 1],
                mlp_ratios: [4, 4, 4, 4],
            },
            depth: DepthNetConfig {
                base_channels: 16,
                adjust_channels: 16,
                expansion: 4,
                channels: [16, 32, 48, 64],
                strides: [1, 2, 4, 8],
            },
            rfeb_heads: [1, 1, 1, 1],
            rfeb_mlp_ratio: 4,
            gate_reduction: 4,
            decoder_width: 16,
            use_cmffm: true,
            use_eem: true,
            seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            preset: Preset::Full,
            input_size: 320,
            rgb: RgbEncoderConfig {
                channels: [64, 128, 320, 512],
                depths: [3, 4, 6, 3],
                heads: [1, 2, 5, 8],
                sr_ratios: [8, 4, 2, 1],
                mlp_ratios: [8, 8, 4, 4],
            },
            depth: DepthNetConfig {
                base_channels: 64,
                adjust_channels: 64,
                expansion: 4,
                channels: [64, 128, 320, 512],
                strides: [1, 2, 4, 8],
            },
            rfeb_heads: [1, 2, 4, 8],
            rfeb_mlp_ratio: 4,
            gate_reduction: 4,
            decoder_width: 64,
            use_cmffm: true,
            use_eem: true,
            seed: 0,
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Tiny => Self::tiny(),
            Preset::Full => Self::full(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: alloc::string::String| Err(Error::Config(m));
        if self.input_size == 0 || !self.input_size.is_multiple_of(32) {
            return fail(format!("input_size {} must be a positive multiple of 32", self.input_size));
        }
        if self.rgb.channels != self.depth.channels {
            return fail(format!(
                "depth channels {:?} must equal rgb channels {:?}",
                self.depth.channels, self.rgb.channels
            ));
        }
        for i in 0..4 {
            let c = self.rgb.channels[i];
            if c == 0 {
                return fail(format!("rgb channel width at level {} is zero", i + 1));
            }
            if self.rgb.heads[i] == 0 || !c.is_multiple_of(self.rgb.heads[i]) {
                return fail(format!("rgb heads {} do not divide width {c}", self.rgb.heads[i]));
            }
            if self.rfeb_heads[i] == 0 || !c.is_multiple_of(self.rfeb_heads[i]) {
                return fail(format!("rfeb heads {} do not divide width {c}", self.rfeb_heads[i]));
            }
            if self.rgb.sr_ratios[i] == 0 || self.rgb.mlp_ratios[i] == 0 {
                return fail(format!("sr/mlp ratios at level {} must be positive", i + 1));
            }
            let s = self.depth.strides[i];
            if !s.is_power_of_two() || s != LEVEL_SCALES[i] / LEVEL_SCALES[0] {
                return fail(format!("depth branch stride {s} does not reach 1/{}", LEVEL_SCALES[i]));
            }
        }
        if self.depth.base_channels == 0 || self.depth.adjust_channels == 0 || self.depth.expansion == 0 {
            return fail("depth widths and expansion must be positive".into());
        }
        if self.decoder_width == 0 || self.rfeb_mlp_ratio == 0 || self.gate_reduction == 0 {
            return fail("decoder width, rfeb mlp ratio and gate reduction must be positive".into());
        }
        Ok(())
    }

    /// Spatial extent of pyramid level `i` (0-based) for this input size.
    pub fn level_extent(&self, i: usize) -> usize {
        self.input_size / LEVEL_SCALES[i]
    }
}
