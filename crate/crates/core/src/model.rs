//! Full network: both encoders, per-level fusion, decoder, edge enhancement and heads.

use alloc::format;
use alloc::vec::Vec;

use crate::cmffm::{fuse_level, Cmffm, CmffmLevelParams};
use crate::config::ModelConfig;
use crate::decoder::{enhance_level, Decoder, Eem, PredictionHeads, PredictionSet, DECODED_LEVELS};
use crate::depth_encoder::DepthEncoder;
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, Var};
use crate::params::{ParamSpecs, ParamStore};
use crate::real::Real;
use crate::rgb_encoder::RgbEncoder;
use crate::tensor::Tensor;

pub const RGB_PREFIX: &str = "rgb.";
pub const DEPTH_PREFIX: &str = "depth.";
pub const CMFFM_PREFIX: &str = "cmffm.";
pub const DECODER_PREFIX: &str = "decoder.";
pub const EEM_PREFIX: &str = "eem.";
pub const HEAD_PREFIX: &str = "head.";

#[derive(Clone, Debug)]
pub struct TaNet {
    pub config: ModelConfig,
    pub specs: ParamSpecs,
    pub rgb: RgbEncoder,
    pub depth: DepthEncoder,
    pub cmffm: Option<[Cmffm; 4]>,
    pub decoder: Decoder,
    pub eem: Option<[Eem; DECODED_LEVELS]>,
    pub heads: [PredictionHeads; DECODED_LEVELS],
}

/// Logit outputs, finest level first.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub edge_logits: [Var; DECODED_LEVELS],
    pub sal_logits: [Var; DECODED_LEVELS],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParamCounts {
    pub rgb: usize,
    pub depth: usize,
    pub cmffm: usize,
    pub decoder: usize,
    pub eem: usize,
    pub heads: usize,
    pub total: usize,
    /// Total if the depth branch were a second copy of the RGB encoder.
    pub symmetric_total: usize,
}

impl ParamCounts {
    /// Fraction of the symmetric total saved by the lightweight depth branch.
    pub fn reduction(&self) -> f64 {
        (self.symmetric_total - self.total) as f64 / self.symmetric_total as f64
    }
}

impl TaNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut specs = ParamSpecs::new();
        let rgb = RgbEncoder::new(&mut specs, "rgb", &config.rgb);
        let depth = DepthEncoder::new(&mut specs, "depth", &config.depth);
        let cmffm = config.use_cmffm.then(|| {
            core::array::from_fn(|i| {
                Cmffm::new(
                    &mut specs,
                    &format!("cmffm.level{}", i + 1),
                    CmffmLevelParams {
                        channels: config.rgb.channels[i],
                        heads: config.rfeb_heads[i],
                        sr_ratio: config.rgb.sr_ratios[i],
                        mlp_ratio: config.rfeb_mlp_ratio,
                        gate_reduction: config.gate_reduction,
                    },
                )
            })
        });
        let decoder = Decoder::new(&mut specs, "decoder", config.rgb.channels, config.decoder_width);
        let eem = config
            .use_eem
            .then(|| core::array::from_fn(|i| Eem::new(&mut specs, &format!("eem.level{i}"), config.decoder_width)));
        let heads = core::array::from_fn(|i| PredictionHeads::new(&mut specs, &format!("head.level{i}"), config.decoder_width));
        Ok(Self {
            config,
            specs,
            rgb,
            depth,
            cmffm,
            decoder,
            eem,
            heads,
        })
    }

    /// Seeded initial weights.
    pub fn init_params<T: Real>(&self, seed: u64) -> ParamStore<T> {
        ParamStore::init(&self.specs, seed)
    }

    /// Fails with the first tensor name whose presence or shape disagrees.
    pub fn check_params<T: Real>(&self, params: &ParamStore<T>) -> Result<()> {
        match params.first_mismatch(&self.specs) {
            Some(name) => Err(Error::ParamMismatch(name)),
            None => Ok(()),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, rgb: Var, depth: Var) -> Result<ForwardVars> {
        let (rs, ds) = (g.value(rgb).shape(), g.value(depth).shape());
        if rs != ds {
            return Err(Error::invalid("forward", format!("rgb {rs:?} and depth {ds:?} differ")));
        }
        let r = self.rgb.forward(g, rgb)?;
        let d = self.depth.forward(g, depth)?;
        let mut fused = r;
        for i in 0..4 {
            let level = self.cmffm.as_ref().map(|m| &m[i]);
            fused[i] = fuse_level(g, level, r[i], d[i])?.2;
        }
        let decoded = self.decoder.forward(g, &fused)?;
        let mut edge_logits = decoded;
        let mut sal_logits = decoded;
        for i in 0..DECODED_LEVELS {
            let (e, s) = enhance_level(g, self.eem.as_ref().map(|m| &m[i]), decoded[i])?;
            let (e, s) = self.heads[i].forward(g, e, s)?;
            edge_logits[i] = e;
            sal_logits[i] = s;
        }
        Ok(ForwardVars { edge_logits, sal_logits })
    }

    /// Inference-mode predictions with the finest maps at input resolution.
    pub fn predict<T: Real>(&self, params: &ParamStore<T>, rgb: &Tensor<T>, depth: &Tensor<T>) -> Result<PredictionSet<T>> {
        let mut g = Graph::new(params, Mode::Infer);
        let (r, d) = (g.input(rgb.clone()), g.input(depth.clone()));
        let out = self.forward(&mut g, r, d)?;
        let s = rgb.shape();
        PredictionSet::from_logits(
            out.edge_logits.map(|v| g.value(v).clone()),
            out.sal_logits.map(|v| g.value(v).clone()),
            s.h(),
            s.w(),
        )
    }

    pub fn count_params(&self) -> ParamCounts {
        let c = |p: &str| self.specs.count_learnable(p);
        let rgb = c(RGB_PREFIX);
        let depth = c(DEPTH_PREFIX);
        let total = c("");
        ParamCounts {
            rgb,
            depth,
            cmffm: c(CMFFM_PREFIX),
            decoder: c(DECODER_PREFIX),
            eem: c(EEM_PREFIX),
            heads: c(HEAD_PREFIX),
            total,
            symmetric_total: total - depth + rgb,
        }
    }

    /// Names of all learnable tensors, in registration order.
    pub fn learnable_names(&self) -> Vec<&str> {
        self.specs
            .iter()
            .filter(|s| s.kind == crate::params::ParamKind::Learnable)
            .map(|s| s.name.as_str())
            .collect()
    }
}
