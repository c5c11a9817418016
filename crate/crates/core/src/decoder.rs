//! Top-down decoder over the fused pyramid, the edge enhancement module and the
//! single-channel prediction heads. Level index 0 is the finest (1/4 scale).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, Var};
use crate::kernels::{self, ConvGeometry};
use crate::nn::{Conv2d, ConvBn};
use crate::params::{ParamSpecs, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

pub const DECODED_LEVELS: usize = 3;

/// Probabilities are kept this far from 0 and 1 so they stay strictly inside
/// the open interval even when the sigmoid saturates in single precision.
pub const PROB_EPS: f64 = 1e-7;

/// Sigmoid clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn probability<T: Real>(logit: T) -> T {
    let lo = T::from_f64(PROB_EPS);
    kernels::sigmoid(logit).max(lo).min(T::ONE - lo)
}

/// FPN-style pathway: 1×1 projection of level 4, then for levels 3, 2, 1 an
/// upsample, a 1×1 lateral and a residual 3×3 refine.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub top: Conv2d,
    /// Laterals for pyramid levels 1..=3 (finest first).
    pub laterals: [Conv2d; DECODED_LEVELS],
    pub refines: [ConvBn; DECODED_LEVELS],
}

impl Decoder {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, channels: [usize; 4], width: usize) -> Self {
        let one = ConvGeometry::default();
        Self {
            top: Conv2d::new(specs, &format!("{prefix}.top"), channels[3], width, 1, one, true),
            laterals: core::array::from_fn(|i| {
                Conv2d::new(specs, &format!("{prefix}.lateral{i}"), channels[i], width, 1, one, true)
            }),
            refines: core::array::from_fn(|i| ConvBn::block3(specs, &format!("{prefix}.refine{i}"), width, width)),
        }
    }

    /// Decoded features, finest first.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, fused: &[Var; 4]) -> Result<[Var; DECODED_LEVELS]> {
        for i in 0..3 {
            let (a, b) = (g.value(fused[i]).shape(), g.value(fused[i + 1]).shape());
            if a.n() != b.n() || a.h() != 2 * b.h() || a.w() != 2 * b.w() {
                return Err(Error::invalid(
                    "decode_pyramid",
                    format!("level {} ({}x{}) and level {} ({}x{}) are not a 2x pyramid", i + 1, a.h(), a.w(), i + 2, b.h(), b.w()),
                ));
            }
        }
        let mut x = self.top.forward(g, fused[3])?;
        let mut out = [x; DECODED_LEVELS];
        for i in (0..DECODED_LEVELS).rev() {
            let s = g.value(fused[i]).shape();
            let up = g.resize(x, s.h(), s.w())?;
            let lat = self.laterals[i].forward(g, fused[i])?;
            let m = g.add(up, lat)?;
            let r = self.refines[i].forward(g, m)?;
            x = g.add(m, r)?;
            out[i] = x;
        }
        Ok(out)
    }
}

/// Three 3×3 conv, BN, GELU blocks.
#[derive(Clone, Debug)]
pub struct ConvStack {
    pub blocks: [ConvBn; 3],
}

impl ConvStack {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, width: usize) -> Self {
        Self {
            blocks: core::array::from_fn(|i| ConvBn::block3(specs, &format!("{prefix}.{i}"), width, width)),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let mut x = x;
        for b in &self.blocks {
            x = b.forward(g, x)?;
        }
        Ok(x)
    }
}

/// Edge enhancement for one level with independent edge and saliency paths.
#[derive(Clone, Debug)]
pub struct Eem {
    pub edge_in: Conv2d,
    pub edge_convs: ConvStack,
    pub sal_in: Conv2d,
    pub sal_convs: ConvStack,
}

impl Eem {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, width: usize) -> Self {
        let one = ConvGeometry::default();
        Self {
            edge_in: Conv2d::new(specs, &format!("{prefix}.edge_in"), width, width, 1, one, true),
            edge_convs: ConvStack::new(specs, &format!("{prefix}.edge_convs"), width),
            sal_in: Conv2d::new(specs, &format!("{prefix}.sal_in"), width, width, 1, one, true),
            sal_convs: ConvStack::new(specs, &format!("{prefix}.sal_convs"), width),
        }
    }

    /// `edge = f + convs(c1(f))`, `sal = f + convs'(c1'(f) + edge)`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, f: Var) -> Result<(Var, Var)> {
        let e = self.edge_in.forward(g, f)?;
        let e = self.edge_convs.forward(g, e)?;
        let edge = g.add(f, e)?;
        let s = self.sal_in.forward(g, f)?;
        let s = g.add(s, edge)?;
        let s = self.sal_convs.forward(g, s)?;
        let sal = g.add(f, s)?;
        Ok((edge, sal))
    }
}

/// 1×1 single-channel heads. `forward` returns logits.
#[derive(Clone, Debug)]
pub struct PredictionHeads {
    pub edge: Conv2d,
    pub sal: Conv2d,
}

impl PredictionHeads {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, width: usize) -> Self {
        let one = ConvGeometry::default();
        Self {
            edge: Conv2d::new(specs, &format!("{prefix}.edge"), width, 1, 1, one, true),
            sal: Conv2d::new(specs, &format!("{prefix}.sal"), width, 1, 1, one, true),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, edge: Var, sal: Var) -> Result<(Var, Var)> {
        Ok((self.edge.forward(g, edge)?, self.sal.forward(g, sal)?))
    }
}

/// Enhancement for one level, or the identity when the module is disabled.
pub fn enhance_level<T: Real>(g: &mut Graph<'_, T>, eem: Option<&Eem>, f: Var) -> Result<(Var, Var)> {
    match eem {
        Some(m) => m.forward(g, f),
        None => Ok((f, f)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedFeatures<T: Real> {
    pub levels: [Tensor<T>; DECODED_LEVELS],
    pub edge_features: [Tensor<T>; DECODED_LEVELS],
    pub sal_features: [Tensor<T>; DECODED_LEVELS],
}

/// Per-level probability maps plus the finest maps at input resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet<T: Real> {
    pub edge_maps: [Tensor<T>; DECODED_LEVELS],
    pub saliency_maps: [Tensor<T>; DECODED_LEVELS],
    pub edge_full: Tensor<T>,
    pub saliency_full: Tensor<T>,
}

impl<T: Real> PredictionSet<T> {
    /// Apply the sigmoid to per-level logits and upsample the finest level.
    pub fn from_logits(
        edge_logits: [Tensor<T>; DECODED_LEVELS],
        sal_logits: [Tensor<T>; DECODED_LEVELS],
        out_h: usize,
        out_w: usize,
    ) -> Result<Self> {
        let sig = |t: Tensor<T>| t.map(probability);
        let edge_maps = edge_logits.map(sig);
        let saliency_maps = sal_logits.map(sig);
        Ok(Self {
            edge_full: kernels::bilinear_resize(&edge_maps[0], out_h, out_w)?,
            saliency_full: kernels::bilinear_resize(&saliency_maps[0], out_h, out_w)?,
            edge_maps,
            saliency_maps,
        })
    }
}

pub fn decode_pyramid<T: Real>(
    fused: &[Tensor<T>; 4],
    decoder: &Decoder,
    params: &ParamStore<T>,
) -> Result<[Tensor<T>; DECODED_LEVELS]> {
    let mut g = Graph::new(params, Mode::Infer);
    let vars = fused.clone().map(|t| g.input(t));
    let out = decoder.forward(&mut g, &vars)?;
    Ok(out.map(|v| g.value(v).clone()))
}

pub fn eem_features<T: Real>(f: &Tensor<T>, eem: Option<&Eem>, params: &ParamStore<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut g = Graph::new(params, Mode::Infer);
    let x = g.input(f.clone());
    let (e, s) = enhance_level(&mut g, eem, x)?;
    Ok((g.value(e).clone(), g.value(s).clone()))
}

/// Probability maps (E, S) for one level.
pub fn predict_maps<T: Real>(
    edge: &Tensor<T>,
    sal: &Tensor<T>,
    heads: &PredictionHeads,
    params: &ParamStore<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut g = Graph::new(params, Mode::Infer);
    let (e, s) = (g.input(edge.clone()), g.input(sal.clone()));
    let (e, s) = heads.forward(&mut g, e, s)?;
    Ok((g.value(e).map(probability), g.value(s).map(probability)))
}

/// Decoder plus enhancement for all three levels.
pub fn decode_features<T: Real>(
    fused: &[Tensor<T>; 4],
    decoder: &Decoder,
    eem: Option<&[Eem]>,
    params: &ParamStore<T>,
) -> Result<DecodedFeatures<T>> {
    let levels = decode_pyramid(fused, decoder, params)?;
    let mut edge = Vec::with_capacity(DECODED_LEVELS);
    let mut sal = Vec::with_capacity(DECODED_LEVELS);
    for (i, f) in levels.iter().enumerate() {
        let (e, s) = eem_features(f, eem.map(|m| &m[i]), params)?;
        edge.push(e);
        sal.push(s);
    }
    let arr = |v: Vec<Tensor<T>>| -> [Tensor<T>; DECODED_LEVELS] { v.try_into().expect("three levels") };
    Ok(DecodedFeatures {
        levels,
        edge_features: arr(edge),
        sal_features: arr(sal),
    })
}
