//! Evaluation measures: precision/recall sweep, maximum F-measure, MAE and the
//! structure measure. All arithmetic is in `f64`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const THRESHOLDS: usize = 256;
pub const BETA2: f64 = 0.3;
/// Guard on empty prediction or ground-truth sets in the PR sweep.
pub const PR_EPS: f64 = 1e-8;
/// Weight of the object term in the structure measure.
pub const S_ALPHA: f64 = 0.5;

// The structure measure conventionally uses machine epsilon as its guard.
const S_EPS: f64 = f64::EPSILON;

/// A single-channel prediction in [0, 1] and a binary mask of equal extent.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMapPair {
    pub height: usize,
    pub width: usize,
    pub pred: Vec<f64>,
    pub gt: Vec<bool>,
}

impl SaliencyMapPair {
    pub fn new(height: usize, width: usize, pred: Vec<f64>, gt: Vec<bool>) -> Result<Self> {
        let n = height * width;
        if n == 0 {
            return Err(Error::EmptyExtent { op: "saliency_pair", dim: "map" });
        }
        if pred.len() != n || gt.len() != n {
            return Err(Error::ShapeMismatch {
                op: "saliency_pair",
                dim: "pixels",
                expected: n,
                found: if pred.len() != n { pred.len() } else { gt.len() },
            });
        }
        if let Some(v) = pred.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: format!("prediction value {v}") });
        }
        let pred = pred.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { height, width, pred, gt })
    }

    /// Ground truth is binarized at 0.5.
    pub fn from_tensors<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<Self> {
        let (ps, gs) = (pred.shape(), gt.shape());
        for s in [ps, gs] {
            if s.n() != 1 || s.c() != 1 {
                return Err(Error::invalid("saliency_pair", format!("expected a single map, got {s:?}")));
            }
        }
        if ps != gs {
            return Err(Error::ShapeMismatch {
                op: "saliency_pair",
                dim: "extent",
                expected: ps.numel(),
                found: gs.numel(),
            });
        }
        let pv = pred.data().iter().map(|v| v.to_f64()).collect();
        let gv = gt.data().iter().map(|v| v.to_f64() >= 0.5).collect();
        Self::new(ps.h(), ps.w(), pv, gv)
    }

    /// 8-bit maps; the mask is foreground where the byte is at least 128.
    pub fn from_u8(height: usize, width: usize, pred: &[u8], gt: &[u8]) -> Result<Self> {
        Self::new(
            height,
            width,
            pred.iter().map(|&v| v as f64 / 255.0).collect(),
            gt.iter().map(|&v| v >= 128).collect(),
        )
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            let r = y * self.width..(y + 1) * self.width;
            out.pred[r.clone()].reverse();
            out.gt[r].reverse();
        }
        out
    }

    fn len(&self) -> usize {
        self.pred.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

/// Quantize a prediction to 0..=255.
pub fn quantize(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// One point per threshold `t` in 0..=255 with `M = q > t`.
pub fn pr_curve(pair: &SaliencyMapPair) -> Vec<PrPoint> {
    // Histograms of quantized values over foreground and over all pixels.
    let mut fg = [0u64; THRESHOLDS];
    let mut all = [0u64; THRESHOLDS];
    for (v, &g) in pair.pred.iter().zip(&pair.gt) {
        let q = quantize(*v) as usize;
        all[q] += 1;
        if g {
            fg[q] += 1;
        }
    }
    let gt_count = pair.gt.iter().filter(|&&g| g).count() as f64;
    let mut tp = 0u64;
    let mut pos = 0u64;
    let mut out = alloc::vec![PrPoint::default(); THRESHOLDS];
    // Sweep from the highest threshold down; at t the set is {q > t}.
    for t in (0..THRESHOLDS).rev() {
        if t + 1 < THRESHOLDS {
            tp += fg[t + 1];
            pos += all[t + 1];
        }
        out[t] = PrPoint {
            precision: tp as f64 / (pos as f64 + PR_EPS),
            recall: tp as f64 / (gt_count + PR_EPS),
        };
    }
    out
}

pub fn f_beta(p: PrPoint) -> f64 {
    let den = BETA2 * p.precision + p.recall;
    if den <= 0.0 {
        0.0
    } else {
        (1.0 + BETA2) * p.precision * p.recall / den
    }
}

pub fn f_measure_max(curve: &[PrPoint]) -> f64 {
    curve.iter().map(|&p| f_beta(p)).fold(0.0, f64::max)
}

pub fn mae(pair: &SaliencyMapPair) -> f64 {
    let sum: f64 = pair
        .pred
        .iter()
        .zip(&pair.gt)
        .map(|(&s, &g)| (s - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    sum / pair.len() as f64
}

fn object_score(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let std = if n > 1 {
        libm::sqrt(values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std + S_EPS)
}

/// Object term: foreground and background similarity weighted by foreground area.
pub fn s_object(pair: &SaliencyMapPair) -> f64 {
    let fg = pair.pred.iter().zip(&pair.gt).filter(|(_, &g)| g).map(|(&s, _)| s);
    let bg = pair.pred.iter().zip(&pair.gt).filter(|(_, &g)| !g).map(|(&s, _)| 1.0 - s);
    let u = pair.gt.iter().filter(|&&g| g).count() as f64 / pair.len() as f64;
    u * object_score(fg) + (1.0 - u) * object_score(bg)
}

/// Split point (columns, rows) in 1-based convention: the first `x` columns
/// and `y` rows form the top-left block.
///
/// This split is not mirror-symmetric: flipping a map moves it by one column,
/// so the structure measure is only approximately flip-invariant.
pub fn centroid_split(pair: &SaliencyMapPair) -> (usize, usize) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for y in 0..pair.height {
        for x in 0..pair.width {
            if pair.gt[y * pair.width + x] {
                sx += x as f64;
                sy += y as f64;
                n += 1.0;
            }
        }
    }
    if n == 0.0 {
        return (
            libm::round(pair.width as f64 / 2.0) as usize,
            libm::round(pair.height as f64 / 2.0) as usize,
        );
    }
    (libm::round(sx / n) as usize + 1, libm::round(sy / n) as usize + 1)
}

fn block_ssim(pair: &SaliencyMapPair, rows: core::ops::Range<usize>, cols: core::ops::Range<usize>) -> f64 {
    let n = rows.len() * cols.len();
    if n == 0 {
        return 0.0;
    }
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for y in rows {
        for x in cols.clone() {
            let i = y * pair.width + x;
            xs.push(pair.pred[i]);
            ys.push(if pair.gt[i] { 1.0 } else { 0.0 });
        }
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
        cxy += (xs[i] - mx) * (ys[i] - my);
    }
    let d = nf - 1.0 + S_EPS;
    let (vx, vy, cxy) = (vx / d, vy / d, cxy / d);
    let alpha = 4.0 * mx * my * cxy;
    let beta = (mx * mx + my * my) * (vx + vy);
    if alpha != 0.0 {
        alpha / (beta + S_EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Region term for the quadrants split after `x` columns and `y` rows.
pub fn s_region_at(pair: &SaliencyMapPair, x: usize, y: usize) -> f64 {
    let (h, w) = (pair.height, pair.width);
    let area = (h * w) as f64;
    let blocks = [
        (0..y, 0..x),
        (0..y, x..w),
        (y..h, 0..x),
        (y..h, x..w),
    ];
    blocks
        .into_iter()
        .map(|(r, c)| (r.len() * c.len()) as f64 / area * block_ssim(pair, r, c))
        .sum()
}

/// Structure measure with the canonical object/region decomposition.
pub fn s_measure(pair: &SaliencyMapPair) -> f64 {
    let fg = pair.gt.iter().filter(|&&g| g).count();
    let mean = pair.pred.iter().sum::<f64>() / pair.len() as f64;
    if fg == 0 {
        1.0 - mean
    } else if fg == pair.len() {
        mean
    } else {
        let (x, y) = centroid_split(pair);
        (S_ALPHA * s_object(pair) + (1.0 - S_ALPHA) * s_region_at(pair, x, y)).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub pr: Vec<PrPoint>,
    pub f_beta_max: f64,
    pub mae: f64,
    pub s_measure: f64,
    pub images: usize,
}

pub fn evaluate_pair(pair: &SaliencyMapPair) -> MetricReport {
    let pr = pr_curve(pair);
    MetricReport {
        f_beta_max: f_measure_max(&pr),
        mae: mae(pair),
        s_measure: s_measure(pair),
        pr,
        images: 1,
    }
}

/// Dataset aggregate: every field is the mean of the per-image values, and the
/// curve is the pointwise mean curve.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::invalid("aggregate", "no images"));
    }
    let n = reports.len() as f64;
    let mut pr = alloc::vec![PrPoint::default(); THRESHOLDS];
    for r in reports {
        for (acc, p) in pr.iter_mut().zip(&r.pr) {
            acc.precision += p.precision / n;
            acc.recall += p.recall / n;
        }
    }
    Ok(MetricReport {
        pr,
        f_beta_max: reports.iter().map(|r| r.f_beta_max).sum::<f64>() / n,
        mae: reports.iter().map(|r| r.mae).sum::<f64>() / n,
        s_measure: reports.iter().map(|r| r.s_measure).sum::<f64>() / n,
        images: reports.len(),
    })
}
