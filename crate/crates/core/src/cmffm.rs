//! Cross-modal feature fusion: depth enhancement gated by RGB statistics, RGB
//! enhancement by cross-attention onto depth, then a 3×3 fusion block.

use alloc::format;
use alloc::vec::Vec;

use crate::attention::{ConvFfn, MultiHeadAttention};
use crate::error::{Error, Result};
use crate::graph::{evaluate, Graph, Var};
use crate::kernels::{ConvGeometry, PoolAxes, PoolMode};
use crate::nn::{Conv2d, ConvBn, Linear};
use crate::params::{ParamSpecs, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Channel gate from the RGB feature, applied to the depth feature.
#[derive(Clone, Debug)]
pub struct SaBranch {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SaBranch {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, channels: usize, reduction: usize) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        Self {
            fc1: Linear::new(specs, &format!("{prefix}.fc1"), channels, hidden),
            fc2: Linear::new(specs, &format!("{prefix}.fc2"), hidden, channels),
        }
    }

    /// The (B, C, 1, 1) sigmoid gate.
    pub fn gate<T: Real>(&self, g: &mut Graph<'_, T>, f_r: Var) -> Result<Var> {
        let avg = g.pool(f_r, PoolMode::Avg, PoolAxes::SpatialGlobal)?;
        let max = g.pool(f_r, PoolMode::Max, PoolAxes::SpatialGlobal)?;
        let s = g.add(avg, max)?;
        let t = g.to_tokens(s);
        let h = self.fc1.forward(g, t)?;
        let h = self.fc2.forward(g, h)?;
        let h = g.to_map(h, 1, 1)?;
        Ok(g.sigmoid(h))
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, f_r: Var, f_d: Var) -> Result<Var> {
        let gate = self.gate(g, f_r)?;
        g.mul_broadcast(f_d, gate)
    }
}

/// Spatial gate from the RGB feature, applied to the depth feature.
#[derive(Clone, Debug)]
pub struct CaBranch {
    pub conv: Conv2d,
}

impl CaBranch {
    pub fn new(specs: &mut ParamSpecs, prefix: &str) -> Self {
        Self {
            conv: Conv2d::new(specs, &format!("{prefix}.conv"), 1, 1, 7, ConvGeometry::new(1, 3), true),
        }
    }

    /// The (B, 1, H, W) sigmoid gate.
    pub fn gate<T: Real>(&self, g: &mut Graph<'_, T>, f_r: Var) -> Result<Var> {
        let avg = g.pool(f_r, PoolMode::Avg, PoolAxes::Channel)?;
        let max = g.pool(f_r, PoolMode::Max, PoolAxes::Channel)?;
        let s = g.add(avg, max)?;
        let h = self.conv.forward(g, s)?;
        Ok(g.sigmoid(h))
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, f_r: Var, f_d: Var) -> Result<Var> {
        let gate = self.gate(g, f_r)?;
        g.mul_broadcast(f_d, gate)
    }
}

/// Depth enhancement: `f_d + (sa(f_r, f_d) + ca(f_r, f_d))`.
///
/// The gated terms are summed first so that two half gates reproduce `f_d`
/// exactly and the output is then exactly `2 f_d`.
#[derive(Clone, Debug)]
pub struct Dfeb {
    pub sa: SaBranch,
    pub ca: CaBranch,
}

impl Dfeb {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, channels: usize, reduction: usize) -> Self {
        Self {
            sa: SaBranch::new(specs, &format!("{prefix}.sa"), channels, reduction),
            ca: CaBranch::new(specs, &format!("{prefix}.ca")),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, f_r: Var, f_d: Var) -> Result<Var> {
        let sa = self.sa.forward(g, f_r, f_d)?;
        let ca = self.ca.forward(g, f_r, f_d)?;
        let gated = g.add(sa, ca)?;
        g.add(f_d, gated)
    }
}

/// RGB enhancement: queries from RGB, keys and values from (reduced) depth,
/// followed by a convolutional feed-forward and a residual onto `f_r`.
#[derive(Clone, Debug)]
pub struct Rfeb {
    pub attn: MultiHeadAttention,
    pub ffn: ConvFfn,
}

impl Rfeb {
    pub fn new(
        specs: &mut ParamSpecs,
        prefix: &str,
        channels: usize,
        heads: usize,
        sr_ratio: usize,
        mlp_ratio: usize,
    ) -> Self {
        Self {
            attn: MultiHeadAttention::new(specs, &format!("{prefix}.attn"), channels, heads, sr_ratio),
            ffn: ConvFfn::new(specs, &format!("{prefix}.ffn"), channels, channels * mlp_ratio),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, f_r: Var, f_d: Var) -> Result<Var> {
        let sr = g.value(f_r).shape();
        let sd = g.value(f_d).shape();
        if sr != sd {
            return Err(Error::ShapeMismatch {
                op: "rfeb",
                dim: "feature",
                expected: sr.numel(),
                found: sd.numel(),
            });
        }
        let grid = (sr.h(), sr.w());
        let q = g.to_tokens(f_r);
        let kv = g.to_tokens(f_d);
        let a = self.attn.forward(g, q, kv, grid)?;
        let f = self.ffn.forward(g, a, grid)?;
        let m = g.to_map(f, grid.0, grid.1)?;
        g.add(f_r, m)
    }
}

/// One level of the fusion module.
#[derive(Clone, Debug)]
pub struct Cmffm {
    pub dfeb: Dfeb,
    pub rfeb: Rfeb,
    pub fuse: ConvBn,
}

#[derive(Clone, Copy, Debug)]
pub struct CmffmLevelParams {
    pub channels: usize,
    pub heads: usize,
    pub sr_ratio: usize,
    pub mlp_ratio: usize,
    pub gate_reduction: usize,
}

impl Cmffm {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, p: CmffmLevelParams) -> Self {
        Self {
            dfeb: Dfeb::new(specs, &format!("{prefix}.dfeb"), p.channels, p.gate_reduction),
            rfeb: Rfeb::new(specs, &format!("{prefix}.rfeb"), p.channels, p.heads, p.sr_ratio, p.mlp_ratio),
            fuse: ConvBn::block3(specs, &format!("{prefix}.fuse"), p.channels, p.channels),
        }
    }

    /// Returns (enhanced rgb, enhanced depth, fused).
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, f_r: Var, f_d: Var) -> Result<(Var, Var, Var)> {
        let d = self.dfeb.forward(g, f_r, f_d)?;
        let r = self.rfeb.forward(g, f_r, f_d)?;
        let s = g.add(r, d)?;
        let fused = self.fuse.forward(g, s)?;
        Ok((r, d, fused))
    }
}

/// With the module disabled the fused feature is the plain sum.
pub fn fuse_level<T: Real>(
    g: &mut Graph<'_, T>,
    level: Option<&Cmffm>,
    f_r: Var,
    f_d: Var,
) -> Result<(Var, Var, Var)> {
    match level {
        Some(m) => m.forward(g, f_r, f_d),
        None => Ok((f_r, f_d, g.add(f_r, f_d)?)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnhancedFeatures<T: Real> {
    pub rgb: Tensor<T>,
    pub depth: Tensor<T>,
    pub fused: Tensor<T>,
}

pub fn sa_branch<T: Real>(f_r: &Tensor<T>, f_d: &Tensor<T>, b: &SaBranch, params: &ParamStore<T>) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let (r, d) = (g.input(f_r.clone()), g.input(f_d.clone()));
        b.forward(g, r, d)
    })
}

pub fn ca_branch<T: Real>(f_r: &Tensor<T>, f_d: &Tensor<T>, b: &CaBranch, params: &ParamStore<T>) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let (r, d) = (g.input(f_r.clone()), g.input(f_d.clone()));
        b.forward(g, r, d)
    })
}

pub fn dfeb<T: Real>(f_r: &Tensor<T>, f_d: &Tensor<T>, b: &Dfeb, params: &ParamStore<T>) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let (r, d) = (g.input(f_r.clone()), g.input(f_d.clone()));
        b.forward(g, r, d)
    })
}

pub fn rfeb<T: Real>(f_r: &Tensor<T>, f_d: &Tensor<T>, b: &Rfeb, params: &ParamStore<T>) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let (r, d) = (g.input(f_r.clone()), g.input(f_d.clone()));
        b.forward(g, r, d)
    })
}

/// Fuse each pyramid level; `levels` is `None` when the module is disabled.
pub fn cmffm_forward<T: Real>(
    rgb: &[Tensor<T>],
    depth: &[Tensor<T>],
    levels: Option<&[Cmffm]>,
    params: &ParamStore<T>,
) -> Result<Vec<EnhancedFeatures<T>>> {
    if rgb.len() != depth.len() || levels.is_some_and(|l| l.len() != rgb.len()) {
        return Err(Error::invalid("cmffm_forward", "level counts differ"));
    }
    let mut g = Graph::new(params, crate::graph::Mode::Infer);
    let mut out = Vec::with_capacity(rgb.len());
    for i in 0..rgb.len() {
        let r = g.input(rgb[i].clone());
        let d = g.input(depth[i].clone());
        let (er, ed, f) = fuse_level(&mut g, levels.map(|l| &l[i]), r, d)?;
        out.push(EnhancedFeatures {
            rgb: g.value(er).clone(),
            depth: g.value(ed).clone(),
            fused: g.value(f).clone(),
        });
    }
    Ok(out)
}
