//! Transformer primitives shared by the RGB backbone and the RGB enhancement
//! block: overlapping patch embedding, average-pool spatial reduction,
//! multi-head attention whose keys/values may come from a second source, and
//! the convolutional feed-forward network.
//!
//! Transformer layers work on token tensors `(B, 1, H·W, C)` and carry the grid
//! extents alongside. No positional encodings are used; the depthwise
//! convolution inside [`ConvFfn`] is the only source of positional signal.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{ensure_dim, Error, Result};
use crate::graph::{self, evaluate, Graph, Var};
use crate::kernels::{self, ConvGeometry};
use crate::nn::{Conv2d, LayerNorm, Linear};
use crate::params::{ParamSpecs, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Height and width of a token grid.
pub type Grid = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchEmbedParams {
    pub patch: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub layer_norm: bool,
}

impl PatchEmbedParams {
    /// 7×7 kernel, stride 4: the stem that maps an image to 1/4 scale.
    pub fn stem(in_channels: usize, out_channels: usize) -> Self {
        Self {
            patch: 7,
            stride: 4,
            pad: 3,
            in_channels,
            out_channels,
            layer_norm: true,
        }
    }

    /// 3×3 kernel, stride 2: halves the grid between stages.
    pub fn downsample(in_channels: usize, out_channels: usize) -> Self {
        Self {
            patch: 3,
            stride: 2,
            pad: 1,
            in_channels,
            out_channels,
            layer_norm: true,
        }
    }

    pub fn output_extent(&self, n: usize) -> Result<usize> {
        if n + 2 * self.pad < self.patch {
            return Err(Error::invalid(
                "overlap_patch_embed",
                format!("input extent {n} is smaller than the {}-pixel patch", self.patch),
            ));
        }
        Ok((n + 2 * self.pad - self.patch) / self.stride + 1)
    }
}

#[derive(Clone, Debug)]
pub struct OverlapPatchEmbed {
    pub params: PatchEmbedParams,
    pub conv: Conv2d,
    pub norm: Option<LayerNorm>,
}

impl OverlapPatchEmbed {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, params: PatchEmbedParams) -> Self {
        assert!(params.stride <= params.patch, "patch embedding must overlap");
        let conv = Conv2d::new(
            specs,
            &format!("{prefix}.proj"),
            params.in_channels,
            params.out_channels,
            params.patch,
            ConvGeometry::new(params.stride, params.pad),
            true,
        );
        let norm = params
            .layer_norm
            .then(|| LayerNorm::new(specs, &format!("{prefix}.norm"), params.out_channels));
        Self { params, conv, norm }
    }

    /// Feature map in, normalised tokens and their grid out.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<(Var, Grid)> {
        let s = g.value(x).shape();
        let grid = (self.params.output_extent(s.h())?, self.params.output_extent(s.w())?);
        let y = self.conv.forward(g, x)?;
        let t = g.to_tokens(y);
        let t = match &self.norm {
            Some(n) => n.forward(g, t)?,
            None => t,
        };
        Ok((t, grid))
    }
}

/// Average-pool the key/value grid by `ratio` per side (remainders handled by ceil).
pub fn spatial_reduce<T: Real>(x: &Tensor<T>, ratio: usize) -> Result<Tensor<T>> {
    kernels::avg_pool_ratio(x, ratio)
}

/// Query and key/value sources for [`multi_head_attention`], both feature maps.
#[derive(Clone, Debug)]
pub struct AttentionInputs<T: Real> {
    pub query_source: Tensor<T>,
    pub kv_source: Tensor<T>,
    pub heads: usize,
    pub head_dim: usize,
}

impl<T: Real> AttentionInputs<T> {
    pub fn validate(&self) -> Result<()> {
        let width = self.query_source.shape().c();
        ensure_dim("multi_head_attention", "channel", width, self.heads * self.head_dim)?;
        ensure_dim("multi_head_attention", "channel", width, self.kv_source.shape().c())?;
        ensure_dim(
            "multi_head_attention",
            "batch",
            self.query_source.shape().n(),
            self.kv_source.shape().n(),
        )
    }
}

/// Q/K/V/output projections with linear spatial reduction of the key/value grid.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub proj: Linear,
    pub heads: usize,
    pub sr_ratio: usize,
}

impl MultiHeadAttention {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, dim: usize, heads: usize, sr_ratio: usize) -> Self {
        assert!(heads > 0 && dim.is_multiple_of(heads), "{prefix}: {heads} heads do not divide width {dim}");
        Self {
            q: Linear::new(specs, &format!("{prefix}.q"), dim, dim),
            k: Linear::new(specs, &format!("{prefix}.k"), dim, dim),
            v: Linear::new(specs, &format!("{prefix}.v"), dim, dim),
            proj: Linear::new(specs, &format!("{prefix}.proj"), dim, dim),
            heads,
            sr_ratio,
        }
    }

    /// `query` tokens attend to the (reduced) `kv` tokens laid out on `kv_grid`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, query: Var, kv: Var, kv_grid: Grid) -> Result<Var> {
        let q = self.q.forward(g, query)?;
        let kv = if self.sr_ratio > 1 {
            let m = g.to_map(kv, kv_grid.0, kv_grid.1)?;
            let m = g.avg_pool_ratio(m, self.sr_ratio)?;
            g.to_tokens(m)
        } else {
            kv
        };
        let k = self.k.forward(g, kv)?;
        let v = self.v.forward(g, kv)?;
        let o = g.attention(q, k, v, self.heads)?;
        self.proj.forward(g, o)
    }
}

/// Runs `layer` on the given inputs; returns the output feature map.
pub fn multi_head_attention<T: Real>(
    inputs: &AttentionInputs<T>,
    layer: &MultiHeadAttention,
    params: &ParamStore<T>,
) -> Result<Tensor<T>> {
    inputs.validate()?;
    if inputs.heads != layer.heads {
        return Err(Error::invalid("multi_head_attention", "head count differs from the layer"));
    }
    let s = inputs.query_source.shape();
    let kvs = inputs.kv_source.shape();
    evaluate(params, |g| {
        let q = g.input(kernels::to_tokens(&inputs.query_source));
        let kv = g.input(kernels::to_tokens(&inputs.kv_source));
        let o = layer.forward(g, q, kv, (kvs.h(), kvs.w()))?;
        g.to_map(o, s.h(), s.w())
    })
}

/// Raw softmax(QKᵀ/√d)·V on token tensors, plus the attention weights
/// laid out as (batch, head, query, key).
pub fn scaled_dot_product<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
) -> Result<(Tensor<T>, Vec<T>)> {
    graph::attention_forward(q, k, v, heads)
}

/// Expand → depthwise 3×3 conv on the grid → GELU → contract.
#[derive(Clone, Debug)]
pub struct ConvFfn {
    pub fc1: Linear,
    pub dwconv: Conv2d,
    pub fc2: Linear,
}

impl ConvFfn {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, dim: usize, hidden: usize) -> Self {
        Self {
            fc1: Linear::new(specs, &format!("{prefix}.fc1"), dim, hidden),
            dwconv: Conv2d::new(
                specs,
                &format!("{prefix}.dwconv"),
                hidden,
                hidden,
                3,
                ConvGeometry::same(3).with_groups(hidden),
                true,
            ),
            fc2: Linear::new(specs, &format!("{prefix}.fc2"), hidden, dim),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, tokens: Var, grid: Grid) -> Result<Var> {
        let h = self.fc1.forward(g, tokens)?;
        let m = g.to_map(h, grid.0, grid.1)?;
        let m = self.dwconv.forward(g, m)?;
        let t = g.to_tokens(m);
        let t = g.gelu(t);
        self.fc2.forward(g, t)
    }
}

/// Applies `layer` to token tensor `x` (B,1,N,C) laid out on `grid`.
pub fn conv_ffn<T: Real>(x: &Tensor<T>, grid: Grid, layer: &ConvFfn, params: &ParamStore<T>) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let t = g.input(x.clone());
        layer.forward(g, t, grid)
    })
}

/// Applies the patch embedding to a feature map; returns the embedded map.
pub fn overlap_patch_embed<T: Real>(
    x: &Tensor<T>,
    layer: &OverlapPatchEmbed,
    params: &ParamStore<T>,
) -> Result<Tensor<T>> {
    evaluate(params, |g| {
        let xv = g.input(x.clone());
        let (t, (h, w)) = layer.forward(g, xv)?;
        g.to_map(t, h, w)
    })
}
