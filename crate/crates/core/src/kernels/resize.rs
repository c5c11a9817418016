//! Align-corners bilinear resize and nearest-neighbour resize.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Source taps for one output coordinate: (low index, high index, weight of high).
fn taps<T: Real>(out: usize, inp: usize) -> Vec<(usize, usize, T)> {
    (0..out)
        .map(|i| {
            if out == 1 || inp == 1 {
                return (0, 0, T::ZERO);
            }
            // src = i·(in−1)/(out−1), evaluated in f64 so both precisions share taps.
            let src = i as f64 * (inp - 1) as f64 / (out - 1) as f64;
            let lo = (libm::floor(src) as usize).min(inp - 1);
            let hi = (lo + 1).min(inp - 1);
            (lo, hi, T::from_f64(src - lo as f64))
        })
        .collect()
}

pub fn bilinear_resize<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::EmptyExtent {
            op: "bilinear_resize",
            dim: if out_h == 0 { "height" } else { "width" },
        });
    }
    let [n, c, h, w] = x.shape().0;
    if h == 0 || w == 0 {
        return Err(Error::EmptyExtent { op: "bilinear_resize", dim: "input" });
    }
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let ty = taps::<T>(out_h, h);
    let tx = taps::<T>(out_w, w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    let xd = x.data();
    let od = out.data_mut();
    for nc in 0..n * c {
        let src = &xd[nc * h * w..(nc + 1) * h * w];
        let dst = &mut od[nc * out_h * out_w..(nc + 1) * out_h * out_w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] + (src[y0 * w + x1] - src[y0 * w + x0]) * fx;
                let bot = src[y1 * w + x0] + (src[y1 * w + x1] - src[y1 * w + x0]) * fx;
                dst[oy * out_w + ox] = top + (bot - top) * fy;
            }
        }
    }
    Ok(out)
}

pub(crate) fn bilinear_resize_backward<T: Real>(
    input_shape: crate::tensor::Shape,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = input_shape.0;
    let [_, _, out_h, out_w] = grad_out.shape().0;
    if (h, w) == (out_h, out_w) {
        return grad_out.clone();
    }
    let ty = taps::<T>(out_h, h);
    let tx = taps::<T>(out_w, w);
    let mut dx = Tensor::zeros(input_shape);
    let g = grad_out.data();
    let d = dx.data_mut();
    for nc in 0..n * c {
        let src = &g[nc * out_h * out_w..(nc + 1) * out_h * out_w];
        let dst = &mut d[nc * h * w..(nc + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let gv = src[oy * out_w + ox];
                let top = gv * (T::ONE - fy);
                let bot = gv * fy;
                dst[y0 * w + x0] += top * (T::ONE - fx);
                dst[y0 * w + x1] += top * fx;
                dst[y1 * w + x0] += bot * (T::ONE - fx);
                dst[y1 * w + x1] += bot * fx;
            }
        }
    }
    dx
}

/// Nearest-neighbour resize with source index `floor(i·in/out)`; preserves binary values.
pub fn nearest_resize<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::EmptyExtent { op: "nearest_resize", dim: "output" });
    }
    let [n, c, h, w] = x.shape().0;
    if h == 0 || w == 0 {
        return Err(Error::EmptyExtent { op: "nearest_resize", dim: "input" });
    }
    Ok(Tensor::from_fn([n, c, out_h, out_w], |[b, ch, y, xx]| {
        x.at(b, ch, y * h / out_h, xx * w / out_w)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_bitwise_identity() {
        let x = Tensor::<f32>::from_fn([1, 2, 3, 4], |[_, c, y, x]| (c + y * x) as f32 * 0.1);
        assert_eq!(bilinear_resize(&x, 3, 4).unwrap(), x);
    }

    #[test]
    fn row_interpolation() {
        let x = Tensor::<f64>::from_f64([1, 1, 1, 2], &[0.0, 1.0]).unwrap();
        assert_eq!(bilinear_resize(&x, 1, 3).unwrap().data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_map_stays_constant() {
        let x = Tensor::<f64>::full([1, 1, 5, 3], 0.3);
        let up = bilinear_resize(&x, 10, 6).unwrap();
        assert!(up.data().iter().all(|&v| v == 0.3));
        let down = bilinear_resize(&up, 5, 3).unwrap();
        assert_eq!(down, x);
    }

    #[test]
    fn zero_extent_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 2, 2]);
        assert!(bilinear_resize(&x, 0, 2).is_err());
        assert!(nearest_resize(&x, 2, 0).is_err());
    }

    #[test]
    fn nearest_same_size_identity() {
        let x = Tensor::<f32>::from_fn([1, 1, 4, 4], |[_, _, y, x]| ((y + x) % 2) as f32);
        assert_eq!(nearest_resize(&x, 4, 4).unwrap(), x);
    }
}
