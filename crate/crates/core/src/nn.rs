//! Parameterised layers. Each layer owns the *names* of its parameters; values
//! live in a [`ParamStore`](crate::params::ParamStore) and are looked up on the graph.

use alloc::format;
use alloc::string::String;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::kernels::ConvGeometry;
use crate::params::{Init, ParamSpecs};
use crate::real::Real;

pub const BN_EPS: f64 = 1e-5;
pub const LN_EPS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: String,
    pub bias: Option<String>,
    pub geometry: ConvGeometry,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(
        specs: &mut ParamSpecs,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        geometry: ConvGeometry,
        bias: bool,
    ) -> Self {
        let groups = geometry.groups;
        let fan_out = kernel * kernel * out_channels / groups;
        let weight = specs.learnable(
            format!("{prefix}.weight"),
            &[out_channels, in_channels / groups, kernel, kernel],
            Init::KaimingFanOut(fan_out),
        );
        let bias = bias.then(|| specs.learnable(format!("{prefix}.bias"), &[out_channels], Init::Zeros));
        Self {
            weight,
            bias,
            geometry,
            in_channels,
            out_channels,
            kernel,
        }
    }

    /// Stride-1 convolution with "same" padding.
    pub fn same(specs: &mut ParamSpecs, prefix: &str, cin: usize, cout: usize, kernel: usize) -> Self {
        Self::new(specs, prefix, cin, cout, kernel, ConvGeometry::same(kernel), true)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight)?;
        let b = self.bias.as_deref().map(|b| g.param(b)).transpose()?;
        g.conv2d(x, w, b, self.geometry)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub prefix: String,
}

impl BatchNorm2d {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, channels: usize) -> Self {
        specs.learnable(format!("{prefix}.weight"), &[channels], Init::Ones);
        specs.learnable(format!("{prefix}.bias"), &[channels], Init::Zeros);
        specs.buffer(format!("{prefix}.running_mean"), &[channels], Init::Zeros);
        specs.buffer(format!("{prefix}.running_var"), &[channels], Init::Ones);
        Self { prefix: prefix.into() }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        g.batch_norm(x, &self.prefix, T::from_f64(BN_EPS))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub weight: String,
    pub bias: String,
}

impl LayerNorm {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, width: usize) -> Self {
        Self {
            weight: specs.learnable(format!("{prefix}.weight"), &[width], Init::Ones),
            bias: specs.learnable(format!("{prefix}.bias"), &[width], Init::Zeros),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let gamma = g.param(&self.weight)?;
        let beta = g.param(&self.bias)?;
        g.layer_norm(x, gamma, beta, T::from_f64(LN_EPS))
    }
}

/// Fully connected layer over the innermost (feature) axis of a token tensor.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: String,
    pub bias: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, in_features: usize, out_features: usize) -> Self {
        Self {
            weight: specs.learnable(
                format!("{prefix}.weight"),
                &[out_features, in_features],
                Init::TruncNormal(0.02),
            ),
            bias: specs.learnable(format!("{prefix}.bias"), &[out_features], Init::Zeros),
            in_features,
            out_features,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight)?;
        let b = g.param(&self.bias)?;
        g.linear(x, w, Some(b))
    }
}

/// Convolution → batch norm → optional GELU.
#[derive(Clone, Debug)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub gelu: bool,
}

impl ConvBn {
    pub fn new(specs: &mut ParamSpecs, prefix: &str, conv_geometry: (usize, usize, usize, ConvGeometry), gelu: bool) -> Self {
        let (cin, cout, k, geom) = conv_geometry;
        Self {
            conv: Conv2d::new(specs, &format!("{prefix}.conv"), cin, cout, k, geom, true),
            bn: BatchNorm2d::new(specs, &format!("{prefix}.bn"), cout),
            gelu,
        }
    }

    /// 3×3 same-padded conv + BN + GELU, the block used throughout the decoder.
    pub fn block3(specs: &mut ParamSpecs, prefix: &str, cin: usize, cout: usize) -> Self {
        Self::new(specs, prefix, (cin, cout, 3, ConvGeometry::same(3)), true)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(g, x)?;
        let y = self.bn.forward(g, y)?;
        Ok(if self.gelu { g.gelu(y) } else { y })
    }
}
