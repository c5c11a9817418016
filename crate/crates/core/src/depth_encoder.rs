//! Lightweight CNN depth backbone: a stride-4 stem, three bottlenecks building the
//! shared base feature, then four *parallel* branches that each downsample the same
//! base with strided convolutions (no pooling) to one pyramid level.

use alloc::format;
use alloc::vec::Vec;

use crate::attention::{OverlapPatchEmbed, PatchEmbedParams};
use crate::config::DepthNetConfig;
use crate::error::{Error, Result};
use crate::graph::{evaluate, Graph, Mode, Var};
use crate::kernels::ConvGeometry;
use crate::nn::{Conv2d, ConvBn};
use crate::params::{ParamSpecs, ParamStore};
use crate::real::Real;
use crate::rgb_encoder::{check_image, FeaturePyramid};
use crate::tensor::Tensor;

/// 1×1 reduce → 3×3 → 1×1 expand with a residual connection.
#[derive(Clone, Debug)]
pub struct Bottleneck {
    pub reduce: ConvBn,
    pub conv: ConvBn,
    pub expand: ConvBn,
    /// Projection used when the stride or width changes.
    pub shortcut: Option<ConvBn>,
}

impl Bottleneck {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, cin: usize, cout: usize, stride: usize, expansion: usize) -> Self {
        let mid = (cout / expansion).max(1);
        Self {
            reduce: ConvBn::new(specs, &format!("{prefix}.reduce"), (cin, mid, 1, ConvGeometry::default()), true),
            conv: ConvBn::new(specs, &format!("{prefix}.conv"), (mid, mid, 3, ConvGeometry::new(stride, 1)), true),
            expand: ConvBn::new(specs, &format!("{prefix}.expand"), (mid, cout, 1, ConvGeometry::default()), false),
            shortcut: (stride != 1 || cin != cout).then(|| {
                ConvBn::new(
                    specs,
                    &format!("{prefix}.shortcut"),
                    (cin, cout, 1, ConvGeometry::new(stride, 0)),
                    false,
                )
            }),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let y = self.reduce.forward(g, x)?;
        let y = self.conv.forward(g, y)?;
        let y = self.expand.forward(g, y)?;
        let s = match &self.shortcut {
            Some(p) => p.forward(g, x)?,
            None => x,
        };
        g.add(y, s)
    }
}

/// One parallel branch: strided 3×3 convs down to the branch scale, a bottleneck,
/// then a 1×1 projection to the level's width.
#[derive(Clone, Debug)]
pub struct FeatExtractModule {
    pub stride: usize,
    pub down: Vec<ConvBn>,
    pub refine: Bottleneck,
    pub project: Conv2d,
}

impl FeatExtractModule {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, cin: usize, cout: usize, stride: usize, expansion: usize) -> Self {
        assert!(stride.is_power_of_two());
        let steps = stride.trailing_zeros() as usize;
        let down = if steps == 0 {
            alloc::vec![ConvBn::block3(specs, &format!("{prefix}.down0"), cin, cin)]
        } else {
            (0..steps)
                .map(|i| ConvBn::new(specs, &format!("{prefix}.down{i}"), (cin, cin, 3, ConvGeometry::new(2, 1)), true))
                .collect()
        };
        Self {
            stride,
            down,
            refine: Bottleneck::new(specs, &format!("{prefix}.refine"), cin, cin, 1, expansion),
            project: Conv2d::new(specs, &format!("{prefix}.project"), cin, cout, 1, ConvGeometry::default(), true),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, base: Var) -> Result<Var> {
        let s = g.value(base).shape();
        if !s.h().is_multiple_of(self.stride) || !s.w().is_multiple_of(self.stride) || s.h() < self.stride || s.w() < self.stride {
            return Err(Error::invalid(
                "feat_extract_module",
                format!("stride {} does not fit a {}x{} base", self.stride, s.h(), s.w()),
            ));
        }
        let mut x = base;
        for d in &self.down {
            x = d.forward(g, x)?;
        }
        let x = self.refine.forward(g, x)?;
        self.project.forward(g, x)
    }
}

#[derive(Clone, Debug)]
pub struct DepthEncoder {
    pub embed: OverlapPatchEmbed,
    pub base: [Bottleneck; 3],
    pub adjust: Conv2d,
    pub branches: [FeatExtractModule; 4],
}

impl DepthEncoder {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, cfg: &DepthNetConfig) -> Self {
        let b = cfg.base_channels;
        Self {
            embed: OverlapPatchEmbed::new(specs, &format!("{prefix}.embed"), PatchEmbedParams::stem(3, b)),
            base: core::array::from_fn(|i| Bottleneck::new(specs, &format!("{prefix}.base{i}"), b, b, 1, cfg.expansion)),
            adjust: Conv2d::new(specs, &format!("{prefix}.adjust"), b, cfg.adjust_channels, 1, ConvGeometry::default(), true),
            branches: core::array::from_fn(|i| {
                FeatExtractModule::new(
                    specs,
                    &format!("{prefix}.branch{}", i + 1),
                    cfg.adjust_channels,
                    cfg.channels[i],
                    cfg.strides[i],
                    cfg.expansion,
                )
            }),
        }
    }

    /// The base feature shared by all branches (after the 1×1 adjustment).
    pub fn base_forward<T: Real>(&self, g: &mut Graph<'_, T>, depth3: Var) -> Result<Var> {
        check_image("depth_encode", g.value(depth3))?;
        let (t, grid) = self.embed.forward(g, depth3)?;
        let mut x = g.to_map(t, grid.0, grid.1)?;
        for b in &self.base {
            x = b.forward(g, x)?;
        }
        self.adjust.forward(g, x)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, depth3: Var) -> Result<[Var; 4]> {
        let base = self.base_forward(g, depth3)?;
        let mut out = [base; 4];
        for (o, branch) in out.iter_mut().zip(&self.branches) {
            *o = branch.forward(g, base)?;
        }
        Ok(out)
    }
}

pub fn bottleneck_block<T: Real>(x: &Tensor<T>, block: &Bottleneck, params: &ParamStore<T>) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let xv = g.input(x.clone());
        block.forward(g, xv)
    })
}

pub fn feat_extract_module<T: Real>(
    base: &Tensor<T>,
    branch: &FeatExtractModule,
    params: &ParamStore<T>,
) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let b = g.input(base.clone());
        branch.forward(g, b)
    })
}

pub fn depth_encode<T: Real>(
    depth3: &Tensor<T>,
    encoder: &DepthEncoder,
    params: &ParamStore<T>,
) -> Result<FeaturePyramid<T>> {
    let mut g = Graph::new(params, Mode::Infer);
    let x = g.input(depth3.clone());
    let levels = encoder.forward(&mut g, x)?;
    Ok(FeaturePyramid {
        levels: levels.map(|v| g.value(v).clone()),
    })
}
