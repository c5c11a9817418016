use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolAxes {
    /// Reduce height and width: (B,C,H,W) → (B,C,1,1).
    SpatialGlobal,
    /// Reduce channels: (B,C,H,W) → (B,1,H,W).
    Channel,
}

pub fn pool<T: Real>(x: &Tensor<T>, mode: PoolMode, axes: PoolAxes) -> Result<Tensor<T>> {
    Ok(pool_full(x, mode, axes)?.0)
}

/// Pooled tensor plus, for max pooling, the flat source index of each output.
pub(crate) fn pool_full<T: Real>(
    x: &Tensor<T>,
    mode: PoolMode,
    axes: PoolAxes,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, c, h, w] = x.shape().0;
    let plane = h * w;
    match axes {
        PoolAxes::SpatialGlobal => {
            if plane == 0 {
                return Err(Error::EmptyExtent { op: "pool", dim: "spatial" });
            }
            let mut out = Tensor::zeros([n, c, 1, 1]);
            let mut arg = Vec::new();
            for (i, chunk) in x.data().chunks(plane).enumerate() {
                out.data_mut()[i] = match mode {
                    PoolMode::Avg => chunk.iter().fold(T::ZERO, |a, &v| a + v) / T::from_usize(plane),
                    PoolMode::Max => {
                        let (j, v) = argmax(chunk.iter().copied());
                        arg.push(i * plane + j);
                        v
                    }
                };
            }
            Ok((out, arg))
        }
        PoolAxes::Channel => {
            if c == 0 {
                return Err(Error::EmptyExtent { op: "pool", dim: "channel" });
            }
            let mut out = Tensor::zeros([n, 1, h, w]);
            let mut arg = Vec::new();
            let xd = x.data();
            for b in 0..n {
                for p in 0..plane {
                    let base = b * c * plane + p;
                    let it = (0..c).map(|ch| xd[base + ch * plane]);
                    out.data_mut()[b * plane + p] = match mode {
                        PoolMode::Avg => it.fold(T::ZERO, |a, v| a + v) / T::from_usize(c),
                        PoolMode::Max => {
                            let (j, v) = argmax(it);
                            arg.push(base + j * plane);
                            v
                        }
                    };
                }
            }
            Ok((out, arg))
        }
    }
}

/// First index of the maximum.
fn argmax<T: Real>(it: impl Iterator<Item = T>) -> (usize, T) {
    let mut best = (0, T::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 || i == 0 {
            best = (i, v);
        }
    }
    best
}

/// Gradient of a global/channel pool scattered back to the input shape.
pub(crate) fn pool_backward<T: Real>(
    input: &Tensor<T>,
    mode: PoolMode,
    axes: PoolAxes,
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = input.shape().0;
    let plane = h * w;
    let mut dx = Tensor::zeros(input.shape());
    let g = grad_out.data();
    match mode {
        PoolMode::Max => {
            for (&src, &gv) in argmax.iter().zip(g) {
                dx.data_mut()[src] += gv;
            }
        }
        PoolMode::Avg => match axes {
            PoolAxes::SpatialGlobal => {
                let inv = T::ONE / T::from_usize(plane);
                for (i, chunk) in dx.data_mut().chunks_mut(plane).enumerate() {
                    chunk.fill(g[i] * inv);
                }
            }
            PoolAxes::Channel => {
                let inv = T::ONE / T::from_usize(c);
                let d = dx.data_mut();
                for b in 0..n {
                    for ch in 0..c {
                        for p in 0..plane {
                            d[(b * c + ch) * plane + p] = g[b * plane + p] * inv;
                        }
                    }
                }
            }
        },
    }
    dx
}

/// Non-overlapping average pooling with a `ratio × ratio` window; partial windows at the
/// bottom/right edge average over the pixels they cover (output extent = ceil(n / ratio)).
pub fn avg_pool_ratio<T: Real>(x: &Tensor<T>, ratio: usize) -> Result<Tensor<T>> {
    if ratio == 0 {
        return Err(Error::invalid("spatial_reduce", "ratio must be at least 1"));
    }
    if ratio == 1 {
        return Ok(x.clone());
    }
    let [n, c, h, w] = x.shape().0;
    let (oh, ow) = (h.div_ceil(ratio), w.div_ceil(ratio));
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let xd = x.data();
    let od = out.data_mut();
    for nc in 0..n * c {
        let src = &xd[nc * h * w..(nc + 1) * h * w];
        for oy in 0..oh {
            let (y0, y1) = (oy * ratio, ((oy + 1) * ratio).min(h));
            for ox in 0..ow {
                let (x0, x1) = (ox * ratio, ((ox + 1) * ratio).min(w));
                let mut acc = T::ZERO;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += src[y * w + x];
                    }
                }
                od[(nc * oh + oy) * ow + ox] = acc / T::from_usize((y1 - y0) * (x1 - x0));
            }
        }
    }
    Ok(out)
}

pub(crate) fn avg_pool_ratio_backward<T: Real>(
    input: &Tensor<T>,
    ratio: usize,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    if ratio == 1 {
        return grad_out.clone();
    }
    let [n, c, h, w] = input.shape().0;
    let (oh, ow) = (h.div_ceil(ratio), w.div_ceil(ratio));
    let mut dx = Tensor::zeros(input.shape());
    let g = grad_out.data();
    let d = dx.data_mut();
    for nc in 0..n * c {
        for oy in 0..oh {
            let (y0, y1) = (oy * ratio, ((oy + 1) * ratio).min(h));
            for ox in 0..ow {
                let (x0, x1) = (ox * ratio, ((ox + 1) * ratio).min(w));
                let share = g[(nc * oh + oy) * ow + ox] / T::from_usize((y1 - y0) * (x1 - x0));
                for y in y0..y1 {
                    for x in x0..x1 {
                        d[nc * h * w + y * w + x] += share;
                    }
                }
            }
        }
    }
    dx
}

/// 3×3 stride-1 max or min filter per plane; the window is clipped at the border.
/// Returns the filtered plane and the flat index each output was taken from.
pub fn window3<T: Real>(x: &Tensor<T>, take_max: bool) -> (Tensor<T>, Vec<usize>) {
    let [_, _, h, w] = x.shape().0;
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    let mut arg = vec![0usize; x.numel()];
    let xd = x.data();
    for p0 in (0..x.numel()).step_by(plane.max(1)) {
        for y in 0..h {
            for xx in 0..w {
                let mut best_i = p0 + y * w + xx;
                let mut best = xd[best_i];
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xs in xx.saturating_sub(1)..(xx + 2).min(w) {
                        let i = p0 + yy * w + xs;
                        let v = xd[i];
                        if (take_max && v > best) || (!take_max && v < best) {
                            best = v;
                            best_i = i;
                        }
                    }
                }
                out.data_mut()[p0 + y * w + xx] = best;
                arg[p0 + y * w + xx] = best_i;
            }
        }
    }
    (out, arg)
}

/// Dilation minus erosion with 3×3 clipped windows.
pub fn morphological_gradient<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (dil, _) = window3(x, true);
    let (ero, _) = window3(x, false);
    dil.zip_map(&ero, |a, b| a - b).expect("same shape")
}
