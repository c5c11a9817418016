use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Softmax over the innermost axis with max subtraction.
pub fn softmax_lastdim<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let w = x.shape().w();
    if w == 0 {
        return Err(Error::EmptyExtent { op: "softmax", dim: "width" });
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(w) {
        softmax_row(row);
    }
    Ok(out)
}

pub(crate) fn softmax_row<T: Real>(row: &mut [T]) {
    let m = row.iter().fold(T::NEG_INFINITY, |a, &v| a.max(v));
    let mut sum = T::ZERO;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `dx = y ⊙ (dy − Σ dy·y)` per row.
pub(crate) fn softmax_row_backward<T: Real>(y: &[T], dy: &[T], dx: &mut [T]) {
    let dot = y.iter().zip(dy).fold(T::ZERO, |a, (&p, &g)| a + p * g);
    for ((d, &p), &g) in dx.iter_mut().zip(y).zip(dy) {
        *d = p * (g - dot);
    }
}
