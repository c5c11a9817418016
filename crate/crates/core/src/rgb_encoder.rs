//! Hierarchical transformer backbone for the RGB stream.

use alloc::format;
use alloc::vec::Vec;

use crate::attention::{ConvFfn, Grid, MultiHeadAttention, OverlapPatchEmbed};
use crate::config::{RgbEncoderConfig, RgbStageConfig, LEVEL_SCALES};
use crate::error::{ensure_dim, Error, Result};
use crate::graph::{evaluate, Graph, Mode, Var};
use crate::nn::LayerNorm;
use crate::params::{ParamSpecs, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Four feature maps at strides 4, 8, 16 and 32, finest first.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid<T: Real> {
    pub levels: [Tensor<T>; 4],
}

impl<T: Real> FeaturePyramid<T> {
    pub const SCALES: [usize; 4] = LEVEL_SCALES;

    /// (channels, height, width) per level.
    pub fn extents(&self) -> [(usize, usize, usize); 4] {
        core::array::from_fn(|i| {
            let s = self.levels[i].shape();
            (s.c(), s.h(), s.w())
        })
    }
}

/// Pre-norm transformer block: `x + attn(norm(x))`, then `x + ffn(norm(x))`.
#[derive(Clone, Debug)]
pub struct PvtBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: ConvFfn,
}

impl PvtBlock {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, dim: usize, heads: usize, sr_ratio: usize, mlp_ratio: usize) -> Self {
        Self {
            norm1: LayerNorm::new(specs, &format!("{prefix}.norm1"), dim),
            attn: MultiHeadAttention::new(specs, &format!("{prefix}.attn"), dim, heads, sr_ratio),
            norm2: LayerNorm::new(specs, &format!("{prefix}.norm2"), dim),
            ffn: ConvFfn::new(specs, &format!("{prefix}.ffn"), dim, dim * mlp_ratio),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, grid: Grid) -> Result<Var> {
        let n = self.norm1.forward(g, x)?;
        let a = self.attn.forward(g, n, n, grid)?;
        let x = g.add(x, a)?;
        let n = self.norm2.forward(g, x)?;
        let f = self.ffn.forward(g, n, grid)?;
        g.add(x, f)
    }
}

/// Patch embedding, transformer blocks and a closing layer norm.
#[derive(Clone, Debug)]
pub struct RgbStage {
    pub config: RgbStageConfig,
    pub embed: OverlapPatchEmbed,
    pub blocks: Vec<PvtBlock>,
    pub norm: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct RgbEncoder {
    pub stages: [RgbStage; 4],
}

impl RgbEncoder {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, cfg: &RgbEncoderConfig) -> Self {
        let stages = core::array::from_fn(|i| {
            let sc = cfg.stage(i);
            let p = format!("{prefix}.stage{}", i + 1);
            RgbStage {
                config: sc,
                embed: OverlapPatchEmbed::new(specs, &format!("{p}.embed"), sc.patch_embed),
                blocks: (0..sc.depth)
                    .map(|b| {
                        PvtBlock::new(
                            specs,
                            &format!("{p}.block{b}"),
                            sc.embed_channels,
                            sc.heads,
                            sc.sr_ratio,
                            sc.mlp_ratio,
                        )
                    })
                    .collect(),
                norm: LayerNorm::new(specs, &format!("{p}.norm"), sc.embed_channels),
            }
        });
        Self { stages }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, image: Var) -> Result<[Var; 4]> {
        check_image("rgb_encode", g.value(image))?;
        let mut x = image;
        let mut out = [image; 4];
        for (i, stage) in self.stages.iter().enumerate() {
            let (mut t, grid) = stage.embed.forward(g, x)?;
            for block in &stage.blocks {
                t = block.forward(g, t, grid)?;
            }
            let t = stage.norm.forward(g, t)?;
            x = g.to_map(t, grid.0, grid.1)?;
            out[i] = x;
        }
        Ok(out)
    }
}

/// Three channels, spatial extents divisible by 32.
pub(crate) fn check_image<T: Real>(op: &'static str, x: &Tensor<T>) -> Result<()> {
    let s = x.shape();
    ensure_dim(op, "channel", 3, s.c())?;
    if s.h() == 0 || s.w() == 0 || !s.h().is_multiple_of(32) || !s.w().is_multiple_of(32) {
        return Err(Error::invalid(
            op,
            format!("input {}x{} is not divisible by 32", s.h(), s.w()),
        ));
    }
    Ok(())
}

pub fn pvt_block<T: Real>(
    tokens: &Tensor<T>,
    grid: Grid,
    block: &PvtBlock,
    params: &ParamStore<T>,
) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let t = g.input(tokens.clone());
        block.forward(g, t, grid)
    })
}

pub fn rgb_encode<T: Real>(
    image: &Tensor<T>,
    encoder: &RgbEncoder,
    params: &ParamStore<T>,
) -> Result<FeaturePyramid<T>> {
    let mut g = Graph::new(params, Mode::Infer);
    let x = g.input(image.clone());
    let levels = encoder.forward(&mut g, x)?;
    Ok(FeaturePyramid {
        levels: levels.map(|v| g.value(v).clone()),
    })
}
