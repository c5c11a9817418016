//! Deterministic numeric primitives. Forward kernels are public; the matching
//! backward kernels are used by the autograd tape.

mod activation;
mod conv;
pub(crate) mod gemm;
mod layout;
mod linear;
mod norm;
mod pool;
mod resize;
mod softmax;

pub use activation::{activation, gelu, gelu_derivative, sigmoid, Activation};
pub use conv::{conv2d, ConvGeometry, ConvParams};
pub use layout::{to_map, to_tokens};
pub use linear::linear;
pub use norm::{batch_norm_infer, batch_norm_unchecked, layer_norm};
pub use pool::{avg_pool_ratio, morphological_gradient, pool, window3, PoolAxes, PoolMode};
pub use resize::{bilinear_resize, nearest_resize};
pub use softmax::softmax_lastdim;

pub(crate) use conv::{conv2d_backward, conv2d_raw};
pub(crate) use linear::linear_backward;
pub(crate) use norm::{
    batch_norm_train, batch_norm_train_backward, layer_norm_backward, layer_norm_full,
};
pub(crate) use pool::{avg_pool_ratio_backward, pool_backward, pool_full};
pub(crate) use resize::bilinear_resize_backward;
pub(crate) use softmax::{softmax_row, softmax_row_backward};

use crate::error::Result;
use crate::real::Real;
use crate::tensor::{ensure_same_shape, Shape, Tensor};

/// `a ⊙ b` where every extent of `b` equals the matching extent of `a` or is 1.
pub fn mul_broadcast<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let bs = broadcast_check(a.shape(), b.shape())?;
    let mut out = a.clone();
    let [n, c, h, w] = a.shape().0;
    let od = out.data_mut();
    let bd = b.data();
    let mut i = 0;
    for bn in 0..n {
        for bc in 0..c {
            for y in 0..h {
                for x in 0..w {
                    od[i] *= bd[bs.flat(bn, bc, y, x)];
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy)]
pub(crate) struct Broadcast {
    shape: Shape,
}

impl Broadcast {
    #[inline]
    pub(crate) fn flat(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        let [n, cc, h, w] = self.shape.0;
        let b = if n == 1 { 0 } else { b };
        let c = if cc == 1 { 0 } else { c };
        let y = if h == 1 { 0 } else { y };
        let x = if w == 1 { 0 } else { x };
        ((b * cc + c) * h + y) * w + x
    }
}

pub(crate) fn broadcast_check(a: Shape, b: Shape) -> Result<Broadcast> {
    let mut expanded = a;
    for i in 0..4 {
        if b.0[i] == 1 {
            expanded.0[i] = 1;
        }
    }
    ensure_same_shape("broadcast", expanded, b)?;
    Ok(Broadcast { shape: b })
}
