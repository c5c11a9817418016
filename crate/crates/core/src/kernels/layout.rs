//! Conversions between feature maps (B,C,H,W) and token matrices (B,1,H·W,C).

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub fn to_tokens<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape().0;
    let plane = h * w;
    let mut out = Tensor::zeros([n, 1, plane, c]);
    let xd = x.data();
    let od = out.data_mut();
    for b in 0..n {
        for ch in 0..c {
            for p in 0..plane {
                od[(b * plane + p) * c + ch] = xd[(b * c + ch) * plane + p];
            }
        }
    }
    out
}

pub fn to_map<T: Real>(tokens: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let [n, one, count, c] = tokens.shape().0;
    if one != 1 || count != h * w {
        return Err(Error::invalid(
            "to_map",
            alloc::format!("{count} tokens cannot form a {h}x{w} grid"),
        ));
    }
    let plane = h * w;
    let mut out = Tensor::zeros([n, c, h, w]);
    let td = tokens.data();
    let od = out.data_mut();
    for b in 0..n {
        for p in 0..plane {
            for ch in 0..c {
                od[(b * c + ch) * plane + p] = td[(b * plane + p) * c + ch];
            }
        }
    }
    Ok(out)
}
