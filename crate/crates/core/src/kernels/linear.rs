use alloc::vec;
use alloc::vec::Vec;

use super::gemm::{gemm_acc, gemm_acc_at, transpose};
use crate::error::{ensure_dim, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Affine map over the innermost axis: every row of `x` (length F) becomes `W·row + b`.
/// `weight` has shape (…, O, F) with the leading extents equal to 1.
pub fn linear<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&[T]>) -> Result<Tensor<T>> {
    let [n, c, rows_per, f] = x.shape().0;
    let [.., out_f, in_f] = weight.shape().0;
    ensure_dim("linear", "features", in_f, f)?;
    if let Some(b) = bias {
        ensure_dim("linear", "bias", out_f, b.len())?;
    }
    let rows = n * c * rows_per;
    let mut out = vec![T::ZERO; rows * out_f];
    if let Some(b) = bias {
        for row in out.chunks_mut(out_f.max(1)) {
            row.copy_from_slice(b);
        }
    }
    let wt = transpose(out_f, in_f, weight.data());
    gemm_acc(rows, in_f, out_f, x.data(), &wt, &mut out);
    Tensor::from_vec([n, c, rows_per, out_f], out)
}

pub(crate) fn linear_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Vec<T>) {
    let [n, c, rows_per, f] = x.shape().0;
    let [.., out_f, _] = weight.shape().0;
    let rows = n * c * rows_per;
    let g = grad_out.data();
    let dx = need_input.then(|| {
        let mut d = vec![T::ZERO; rows * f];
        gemm_acc(rows, out_f, f, g, weight.data(), &mut d);
        Tensor::from_vec(Shape::new(n, c, rows_per, f), d).expect("shape")
    });
    let mut dw = Tensor::zeros(weight.shape());
    gemm_acc_at(out_f, rows, f, g, x.data(), dw.data_mut());
    let mut db = vec![T::ZERO; out_f];
    for row in g.chunks(out_f.max(1)) {
        for (d, &v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_bias_only() {
        let x = Tensor::<f64>::from_f64([1, 1, 2, 2], &[1.0, 2.0, -3.0, 4.0]).unwrap();
        let eye = Tensor::<f64>::from_f64([1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(linear(&x, &eye, Some(&[0.0, 0.0])).unwrap(), x);
        let zero = Tensor::<f64>::zeros([1, 1, 2, 2]);
        let y = linear(&x, &zero, Some(&[0.5, 0.5])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn matrix_example() {
        let x = Tensor::<f64>::from_f64([1, 1, 1, 2], &[1.0, 2.0]).unwrap();
        let w = Tensor::<f64>::from_f64([1, 1, 2, 2], &[1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(linear(&x, &w, Some(&[0.0, 0.0])).unwrap().data(), &[1.0, 3.0]);
    }

    #[test]
    fn feature_mismatch() {
        let x = Tensor::<f32>::zeros([1, 1, 3, 4]);
        let w = Tensor::<f32>::zeros([1, 1, 2, 5]);
        assert!(linear(&x, &w, None).is_err());
    }
}
