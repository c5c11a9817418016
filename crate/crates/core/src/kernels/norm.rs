use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_dim, Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

fn check_eps<T: Real>(op: &'static str, eps: T) -> Result<()> {
    if eps > T::ZERO {
        Ok(())
    } else {
        Err(Error::invalid(op, "eps must be positive"))
    }
}

/// Per-channel affine normalisation with stored statistics:
/// `y = gamma·(x − mean)/sqrt(var + eps) + beta`.
pub fn batch_norm_infer<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    check_eps("batch_norm", eps)?;
    batch_norm_unchecked(x, gamma, beta, mean, var, eps)
}

/// As [`batch_norm_infer`] but accepts `eps = 0` (only used by hand-evaluated checks).
pub fn batch_norm_unchecked<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    let c = x.shape().c();
    for len in [gamma.len(), beta.len(), mean.len(), var.len()] {
        ensure_dim("batch_norm", "channel", c, len)?;
    }
    let plane = x.shape().plane();
    let mut out = x.clone();
    for (i, chunk) in out.data_mut().chunks_mut(plane.max(1)).enumerate() {
        let ch = i % c;
        let scale = gamma[ch] / (var[ch] + eps).sqrt();
        let shift = beta[ch] - mean[ch] * scale;
        for v in chunk {
            *v = *v * scale + shift;
        }
    }
    Ok(out)
}

/// Saved state of a training-mode batch norm.
pub(crate) struct BatchNormTrain<T> {
    pub output: Tensor<T>,
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Biased batch variance.
    pub batch_var: Vec<T>,
}

pub(crate) fn batch_norm_train<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<BatchNormTrain<T>> {
    check_eps("batch_norm", eps)?;
    let [n, c, _, _] = x.shape().0;
    ensure_dim("batch_norm", "channel", c, gamma.len())?;
    ensure_dim("batch_norm", "channel", c, beta.len())?;
    let plane = x.shape().plane();
    let count = T::from_usize(n * plane);
    let mut mean = vec![T::ZERO; c];
    let mut var = vec![T::ZERO; c];
    for (i, chunk) in x.data().chunks(plane).enumerate() {
        mean[i % c] += chunk.iter().fold(T::ZERO, |a, &v| a + v);
    }
    for m in &mut mean {
        *m /= count;
    }
    for (i, chunk) in x.data().chunks(plane).enumerate() {
        let m = mean[i % c];
        var[i % c] += chunk.iter().fold(T::ZERO, |a, &v| a + (v - m) * (v - m));
    }
    for v in &mut var {
        *v /= count;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
    let mut normalized = x.clone();
    let mut output = x.clone();
    for (i, (nchunk, ochunk)) in normalized
        .data_mut()
        .chunks_mut(plane)
        .zip(output.data_mut().chunks_mut(plane))
        .enumerate()
    {
        let ch = i % c;
        for (nv, ov) in nchunk.iter_mut().zip(ochunk.iter_mut()) {
            *nv = (*nv - mean[ch]) * inv_std[ch];
            *ov = gamma[ch] * *nv + beta[ch];
        }
    }
    Ok(BatchNormTrain {
        output,
        normalized,
        inv_std,
        batch_mean: mean,
        batch_var: var,
    })
}

/// Gradients of a training-mode batch norm w.r.t. input, gamma and beta.
pub(crate) fn batch_norm_train_backward<T: Real>(
    normalized: &Tensor<T>,
    inv_std: &[T],
    gamma: &[T],
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let [n, c, _, _] = normalized.shape().0;
    let plane = normalized.shape().plane();
    let count = T::from_usize(n * plane);
    let mut dgamma = vec![T::ZERO; c];
    let mut dbeta = vec![T::ZERO; c];
    for (i, (xh, g)) in normalized
        .data()
        .chunks(plane)
        .zip(grad_out.data().chunks(plane))
        .enumerate()
    {
        for (&xv, &gv) in xh.iter().zip(g) {
            dgamma[i % c] += gv * xv;
            dbeta[i % c] += gv;
        }
    }
    let mut dx = grad_out.clone();
    for (i, (d, xh)) in dx
        .data_mut()
        .chunks_mut(plane)
        .zip(normalized.data().chunks(plane))
        .enumerate()
    {
        let ch = i % c;
        let k = gamma[ch] * inv_std[ch] / count;
        for (dv, &xv) in d.iter_mut().zip(xh) {
            *dv = k * (count * *dv - dbeta[ch] - xv * dgamma[ch]);
        }
    }
    (dx, dgamma, dbeta)
}

/// Saved state of a layer norm over the innermost axis.
pub(crate) struct LayerNormOut<T> {
    pub output: Tensor<T>,
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// Normalises every contiguous row of length `width` (the feature axis of a token tensor).
pub fn layer_norm<T: Real>(x: &Tensor<T>, gamma: &[T], beta: &[T], eps: T) -> Result<Tensor<T>> {
    Ok(layer_norm_full(x, gamma, beta, eps)?.output)
}

pub(crate) fn layer_norm_full<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<LayerNormOut<T>> {
    check_eps("layer_norm", eps)?;
    let f = x.shape().w();
    ensure_dim("layer_norm", "width", f, gamma.len())?;
    ensure_dim("layer_norm", "width", f, beta.len())?;
    let mut normalized = x.clone();
    let mut output = x.clone();
    let mut inv_std = Vec::with_capacity(x.numel() / f.max(1));
    let ff = T::from_usize(f);
    for (row, orow) in normalized.data_mut().chunks_mut(f).zip(output.data_mut().chunks_mut(f)) {
        let mean = row.iter().fold(T::ZERO, |a, &v| a + v) / ff;
        let var = row.iter().fold(T::ZERO, |a, &v| a + (v - mean) * (v - mean)) / ff;
        let is = T::ONE / (var + eps).sqrt();
        inv_std.push(is);
        for (j, (v, o)) in row.iter_mut().zip(orow.iter_mut()).enumerate() {
            *v = (*v - mean) * is;
            *o = gamma[j] * *v + beta[j];
        }
    }
    Ok(LayerNormOut {
        output,
        normalized,
        inv_std,
    })
}

pub(crate) fn layer_norm_backward<T: Real>(
    normalized: &Tensor<T>,
    inv_std: &[T],
    gamma: &[T],
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let f = normalized.shape().w();
    let ff = T::from_usize(f);
    let mut dgamma = vec![T::ZERO; f];
    let mut dbeta = vec![T::ZERO; f];
    let mut dx = grad_out.clone();
    for ((d, xh), &is) in dx
        .data_mut()
        .chunks_mut(f)
        .zip(normalized.data().chunks(f))
        .zip(inv_std)
    {
        let mut sum_g = T::ZERO;
        let mut sum_gx = T::ZERO;
        for j in 0..f {
            dgamma[j] += d[j] * xh[j];
            dbeta[j] += d[j];
            let g = d[j] * gamma[j];
            sum_g += g;
            sum_gx += g * xh[j];
        }
        for j in 0..f {
            let g = d[j] * gamma[j];
            d[j] = is * (g - sum_g / ff - xh[j] * sum_gx / ff);
        }
    }
    (dx, dgamma, dbeta)
}
