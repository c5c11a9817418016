//! Sample preprocessing, edge ground truth and the synthetic toy set.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::kernels;
use crate::losses::GtPyramid;
use crate::real::Real;
use crate::tensor::Tensor;

pub const NORM_MEAN: f64 = 0.5;
pub const NORM_STD: f64 = 0.5;

/// One RGB-D sample. Images are (1, 3, H, W) in [0, 1] before normalization;
/// masks are (1, 1, H, W) with values in {0, 1}.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbdSample<T: Real = f32> {
    pub name: String,
    pub rgb: Tensor<T>,
    pub depth: Tensor<T>,
    pub sal_gt: Tensor<T>,
    pub edge_gt: Tensor<T>,
}

impl<T: Real> RgbdSample<T> {
    /// Assemble a sample from a colour image, a single-channel depth map and
    /// a saliency mask; the mask is binarized and the edge mask derived from it.
    pub fn assemble(name: impl Into<String>, rgb: Tensor<T>, depth1: &Tensor<T>, mask: &Tensor<T>) -> Result<Self> {
        let depth = replicate_depth(depth1)?;
        if rgb.shape() != depth.shape() || rgb.shape().c() != 3 {
            return Err(Error::invalid("assemble", format!("rgb {:?} vs depth {:?}", rgb.shape(), depth.shape())));
        }
        let sal_gt = binarize(mask);
        if sal_gt.shape().c() != 1 || sal_gt.shape().h() != rgb.shape().h() || sal_gt.shape().w() != rgb.shape().w() {
            return Err(Error::invalid("assemble", format!("mask {:?} does not match image", sal_gt.shape())));
        }
        let edge_gt = derive_edge_gt(&sal_gt)?;
        Ok(Self {
            name: name.into(),
            rgb,
            depth,
            sal_gt,
            edge_gt,
        })
    }

    /// Bilinear resize for the images, nearest for the masks.
    pub fn resize(&self, h: usize, w: usize) -> Result<Self> {
        Ok(Self {
            name: self.name.clone(),
            rgb: kernels::bilinear_resize(&self.rgb, h, w)?,
            depth: kernels::bilinear_resize(&self.depth, h, w)?,
            sal_gt: kernels::nearest_resize(&self.sal_gt, h, w)?,
            edge_gt: kernels::nearest_resize(&self.edge_gt, h, w)?,
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        Self {
            name: self.name.clone(),
            rgb: self.rgb.flip_horizontal(),
            depth: self.depth.flip_horizontal(),
            sal_gt: self.sal_gt.flip_horizontal(),
            edge_gt: self.edge_gt.flip_horizontal(),
        }
    }
}

/// Replicate a (N, 1, H, W) map to three identical channels.
pub fn replicate_depth<T: Real>(d: &Tensor<T>) -> Result<Tensor<T>> {
    let s = d.shape();
    match s.c() {
        3 => Ok(d.clone()),
        1 => Ok(Tensor::from_fn([s.n(), 3, s.h(), s.w()], |[n, _, y, x]| d.at(n, 0, y, x))),
        c => Err(Error::invalid("replicate_depth", format!("expected 1 channel, got {c}"))),
    }
}

pub fn binarize<T: Real>(m: &Tensor<T>) -> Tensor<T> {
    let half = T::from_f64(0.5);
    m.map(|v| if v >= half { T::ONE } else { T::ZERO })
}

pub fn normalize<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (m, s) = (T::from_f64(NORM_MEAN), T::from_f64(NORM_STD));
    x.map(|v| (v - m) / s)
}

pub fn denormalize<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (m, s) = (T::from_f64(NORM_MEAN), T::from_f64(NORM_STD));
    x.map(|v| v * s + m)
}

/// The seed-determined flip decision used by [`preprocess`].
pub fn flip_decision(seed: u64) -> bool {
    Xoshiro256PlusPlus::seed_from_u64(seed).next_u64() & 1 == 1
}

/// Normalize both images and, when augmenting, flip every component together.
pub fn preprocess<T: Real>(s: &RgbdSample<T>, augment: bool, seed: u64) -> RgbdSample<T> {
    let s = if augment && flip_decision(seed) { s.flip_horizontal() } else { s.clone() };
    RgbdSample {
        rgb: normalize(&s.rgb),
        depth: normalize(&s.depth),
        ..s
    }
}

/// 3×3 dilation minus erosion of a binary mask, thresholded at 0.5.
pub fn derive_edge_gt<T: Real>(mask: &Tensor<T>) -> Result<Tensor<T>> {
    if let Some(v) = mask.data().iter().find(|&&v| v != T::ZERO && v != T::ONE) {
        return Err(Error::invalid("derive_edge_gt", format!("mask value {} is not binary", v.to_f64())));
    }
    Ok(binarize(&kernels::morphological_gradient(mask)))
}

/// Stack samples into batched (rgb, depth, full-resolution saliency, edge).
pub fn batch<T: Real>(samples: &[&RgbdSample<T>]) -> Result<[Tensor<T>; 4]> {
    let col = |f: fn(&RgbdSample<T>) -> &Tensor<T>| -> Result<Tensor<T>> {
        let v: Vec<Tensor<T>> = samples.iter().map(|s| f(s).clone()).collect();
        Tensor::stack(&v)
    };
    Ok([col(|s| &s.rgb)?, col(|s| &s.depth)?, col(|s| &s.sal_gt)?, col(|s| &s.edge_gt)?])
}

/// Ground truth pyramid matched to the prediction extents of an input size.
pub fn gt_pyramid<T: Real>(sal: &Tensor<T>, edge: &Tensor<T>, input: usize) -> Result<GtPyramid<T>> {
    let ext = core::array::from_fn(|i| {
        let e = input / crate::config::LEVEL_SCALES[i];
        (e, e)
    });
    GtPyramid::from_full(edge, sal, ext)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Disc,
    Square,
    Triangle,
    Ring,
}

/// Geometric shapes on a textured background. The object is nearer (brighter
/// depth) than a sloped background plane, and its colour differs from the
/// background, so both modalities carry the mask.
pub fn synthetic_dataset<T: Real>(count: usize, size: usize, seed: u64) -> Vec<RgbdSample<T>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let kinds = [ShapeKind::Disc, ShapeKind::Square, ShapeKind::Triangle, ShapeKind::Ring];
    let sz = size as f64;
    (0..count)
        .map(|i| {
            let kind = kinds[i % kinds.len()];
            let cx = sz * (0.35 + 0.3 * unit());
            let cy = sz * (0.35 + 0.3 * unit());
            let r = sz * (0.15 + 0.1 * unit());
            let fg_col = [0.6 + 0.4 * unit(), 0.2 * unit(), 0.5 * unit()];
            let bg_col = [0.2 * unit(), 0.3 + 0.4 * unit(), 0.6 + 0.3 * unit()];
            let noise_seed = rng_u64(&mut unit);
            let inside = |y: usize, x: usize| -> bool {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                match kind {
                    ShapeKind::Disc => dx * dx + dy * dy <= r * r,
                    ShapeKind::Square => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,
                    ShapeKind::Triangle => dy <= r * 0.8 && dy >= -r && dx.abs() <= (dy + r) * 0.6,
                    ShapeKind::Ring => {
                        let d2 = dx * dx + dy * dy;
                        d2 <= r * r && d2 >= (0.5 * r) * (0.5 * r)
                    }
                }
            };
            let mask = Tensor::<T>::from_fn([1, 1, size, size], |[_, _, y, x]| if inside(y, x) { T::ONE } else { T::ZERO });
            let mut nrng = Xoshiro256PlusPlus::seed_from_u64(noise_seed);
            let noise: Vec<f64> = (0..3 * size * size)
                .map(|_| ((nrng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.1)
                .collect();
            let rgb = Tensor::<T>::from_fn([1, 3, size, size], |[_, c, y, x]| {
                let base = if inside(y, x) { fg_col[c] } else { bg_col[c] };
                T::from_f64((base + noise[(c * size + y) * size + x]).clamp(0.0, 1.0))
            });
            // The background plane recedes towards the top of the image.
            let depth = Tensor::<T>::from_fn([1, 1, size, size], |[_, _, y, x]| {
                if inside(y, x) {
                    T::from_f64(0.85)
                } else {
                    T::from_f64(0.2 + 0.2 * y as f64 / sz)
                }
            });
            RgbdSample::assemble(format!("synthetic_{i:02}"), rgb, &depth, &mask).expect("consistent synthetic sample")
        })
        .collect()
}

fn rng_u64(unit: &mut impl FnMut() -> f64) -> u64 {
    (unit() * (u64::MAX as f64)) as u64
}
