//! Reverse-mode tape over the kernels.
//!
//! A [`Graph`] borrows a [`ParamStore`], records every operation applied to
//! its [`Var`]s and can replay them backwards from seed gradients. The same
//! forward code serves inference ([`Mode::Infer`], stored batch-norm
//! statistics) and training ([`Mode::Train`], batch statistics).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, gemm, ConvGeometry, PoolAxes, PoolMode};
use crate::params::{ParamKind, ParamStore};
use crate::real::Real;
use crate::tensor::{ensure_same_shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Infer,
    Train,
}

/// Batch statistics observed by a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BatchStat<T> {
    pub prefix: String,
    pub mean: Vec<T>,
    /// Unbiased variance, as used for running-statistics updates.
    pub var: Vec<T>,
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Scale(Var, T),
    MulBroadcast(Var, Var),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    BatchNormInfer {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor<T>,
        inv_std: Vec<T>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor<T>,
        inv_std: Vec<T>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Gelu(Var),
    Sigmoid(Var),
    Pool {
        x: Var,
        mode: PoolMode,
        axes: PoolAxes,
        argmax: Vec<usize>,
    },
    AvgPoolRatio(Var, usize),
    Resize(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<T>,
    },
    ToTokens(Var),
    ToMap(Var),
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    mode: Mode,
    nodes: Vec<Node<T>>,
    param_vars: BTreeMap<String, Var>,
    bn_stats: Vec<BatchStat<T>>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T: Real> {
    per_var: Vec<Option<Tensor<T>>>,
    params: BTreeMap<String, Var>,
}

impl<T: Real> Gradients<T> {
    pub fn of(&self, v: Var) -> Option<&Tensor<T>> {
        self.per_var.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).and_then(|&v| self.of(v))
    }

    /// (name, gradient) for every parameter that received one.
    pub fn params(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.params
            .iter()
            .filter_map(|(n, &v)| self.of(v).map(|g| (n, g)))
    }
}

fn head_slice<T: Real>(data: &[T], rows: usize, width: usize, off: usize, d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * d);
    for r in 0..rows {
        out.extend_from_slice(&data[r * width + off..r * width + off + d]);
    }
    out
}

/// Multi-head scaled dot-product attention on token tensors (B,1,N,C).
/// Returns the concatenated head outputs and the attention weights (B·heads·Nq·Nk).
pub(crate) fn attention_forward<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
) -> Result<(Tensor<T>, Vec<T>)> {
    let [bq, one_q, nq, c] = q.shape().0;
    let [bk, one_k, nk, ck] = k.shape().0;
    ensure_same_shape("attention", k.shape(), v.shape())?;
    crate::error::ensure_dim("attention", "batch", bq, bk)?;
    crate::error::ensure_dim("attention", "channel", c, ck)?;
    if one_q != 1 || one_k != 1 {
        return Err(Error::invalid("attention", "expected token tensors (B,1,N,C)"));
    }
    if heads == 0 || c % heads != 0 {
        return Err(Error::invalid("attention", "heads must divide the embedding width"));
    }
    if nk == 0 {
        return Err(Error::EmptyExtent { op: "attention", dim: "keys" });
    }
    let d = c / heads;
    let scale = T::ONE / T::from_usize(d).sqrt();
    let mut out = Tensor::zeros(q.shape());
    let mut probs = vec![T::ZERO; bq * heads * nq * nk];
    for b in 0..bq {
        let qb = &q.data()[b * nq * c..(b + 1) * nq * c];
        let kb = &k.data()[b * nk * c..(b + 1) * nk * c];
        let vb = &v.data()[b * nk * c..(b + 1) * nk * c];
        for h in 0..heads {
            let qh = head_slice(qb, nq, c, h * d, d);
            let kh = head_slice(kb, nk, c, h * d, d);
            let vh = head_slice(vb, nk, c, h * d, d);
            let p = &mut probs[(b * heads + h) * nq * nk..(b * heads + h + 1) * nq * nk];
            gemm::gemm_acc_bt(nq, d, nk, &qh, &kh, p);
            for row in p.chunks_mut(nk) {
                for s in row.iter_mut() {
                    *s *= scale;
                }
                kernels::softmax_row(row);
            }
            let mut o = vec![T::ZERO; nq * d];
            gemm::gemm_acc(nq, nk, d, p, &vh, &mut o);
            let od = out.data_mut();
            for i in 0..nq {
                od[(b * nq + i) * c + h * d..(b * nq + i) * c + (h + 1) * d]
                    .copy_from_slice(&o[i * d..(i + 1) * d]);
            }
        }
    }
    Ok((out, probs))
}

fn attention_backward<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
    probs: &[T],
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [b_n, _, nq, c] = q.shape().0;
    let nk = k.shape().h();
    let d = c / heads;
    let scale = T::ONE / T::from_usize(d).sqrt();
    let mut dq = Tensor::zeros(q.shape());
    let mut dk = Tensor::zeros(k.shape());
    let mut dv = Tensor::zeros(v.shape());
    for b in 0..b_n {
        let qb = &q.data()[b * nq * c..(b + 1) * nq * c];
        let kb = &k.data()[b * nk * c..(b + 1) * nk * c];
        let vb = &v.data()[b * nk * c..(b + 1) * nk * c];
        let gb = &grad_out.data()[b * nq * c..(b + 1) * nq * c];
        for h in 0..heads {
            let qh = head_slice(qb, nq, c, h * d, d);
            let kh = head_slice(kb, nk, c, h * d, d);
            let vh = head_slice(vb, nk, c, h * d, d);
            let go = head_slice(gb, nq, c, h * d, d);
            let p = &probs[(b * heads + h) * nq * nk..(b * heads + h + 1) * nq * nk];
            // dV = Pᵀ·dO
            let mut dvh = vec![T::ZERO; nk * d];
            gemm::gemm_acc_at(nk, nq, d, p, &go, &mut dvh);
            // dP = dO·Vᵀ, then through the softmax and the scale
            let mut dp = vec![T::ZERO; nq * nk];
            gemm::gemm_acc_bt(nq, d, nk, &go, &vh, &mut dp);
            let mut ds = vec![T::ZERO; nq * nk];
            for ((prow, dprow), dsrow) in p.chunks(nk).zip(dp.chunks(nk)).zip(ds.chunks_mut(nk)) {
                kernels::softmax_row_backward(prow, dprow, dsrow);
                for s in dsrow.iter_mut() {
                    *s *= scale;
                }
            }
            let mut dqh = vec![T::ZERO; nq * d];
            gemm::gemm_acc(nq, nk, d, &ds, &kh, &mut dqh);
            let mut dkh = vec![T::ZERO; nk * d];
            gemm::gemm_acc_at(nk, nq, d, &ds, &qh, &mut dkh);
            for i in 0..nq {
                dq.data_mut()[(b * nq + i) * c + h * d..][..d].copy_from_slice(&dqh[i * d..(i + 1) * d]);
            }
            for j in 0..nk {
                dk.data_mut()[(b * nk + j) * c + h * d..][..d].copy_from_slice(&dkh[j * d..(j + 1) * d]);
                dv.data_mut()[(b * nk + j) * c + h * d..][..d].copy_from_slice(&dvh[j * d..(j + 1) * d]);
            }
        }
    }
    (dq, dk, dv)
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

fn vec_tensor<T: Real>(like: &Tensor<T>, v: Vec<T>) -> Tensor<T> {
    Tensor::from_vec(like.shape(), v).expect("parameter-shaped gradient")
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>, mode: Mode) -> Self {
        Self {
            params,
            mode,
            nodes: Vec::new(),
            param_vars: BTreeMap::new(),
            bn_stats: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn into_value(mut self, v: Var) -> Tensor<T> {
        core::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros([0, 0, 0, 0]))
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf whose gradient is tracked (used for input-gradient checks).
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf for a named parameter; repeated lookups return the same variable.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.param_vars.get(name) {
            return Ok(v);
        }
        let p = self.params.get(name)?;
        let grad = self.mode == Mode::Train && p.kind == ParamKind::Learnable;
        let v = self.push(p.value.clone(), Op::Leaf, grad);
        self.param_vars.insert(name.into(), v);
        Ok(v)
    }

    pub fn take_batch_stats(&mut self) -> Vec<BatchStat<T>> {
        core::mem::take(&mut self.bn_stats)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).scale(s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    /// `a ⊙ b` with `b` broadcast over its unit extents.
    pub fn mul_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::mul_broadcast(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MulBroadcast(a, b), ng))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let bias = b.map(|b| self.value(b).data());
        let out = kernels::conv2d_raw(self.value(x), self.value(w), bias, geom)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(out, Op::Conv { x, w, b, geom }, ng))
    }

    /// Batch norm using `{prefix}.weight/.bias/.running_mean/.running_var`.
    pub fn batch_norm(&mut self, x: Var, prefix: &str, eps: T) -> Result<Var> {
        let gamma = self.param(&alloc::format!("{prefix}.weight"))?;
        let beta = self.param(&alloc::format!("{prefix}.bias"))?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        match self.mode {
            Mode::Infer => {
                let mean = self.params.tensor(&alloc::format!("{prefix}.running_mean"))?;
                let var = self.params.tensor(&alloc::format!("{prefix}.running_var"))?;
                let out = kernels::batch_norm_infer(
                    self.value(x),
                    self.value(gamma).data(),
                    self.value(beta).data(),
                    mean.data(),
                    var.data(),
                    eps,
                )?;
                let inv_std = var.data().iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
                let mean = mean.data().to_vec();
                Ok(self.push(
                    out,
                    Op::BatchNormInfer {
                        x,
                        gamma,
                        beta,
                        mean,
                        inv_std,
                    },
                    ng,
                ))
            }
            Mode::Train => {
                let r = kernels::batch_norm_train(
                    self.value(x),
                    self.value(gamma).data(),
                    self.value(beta).data(),
                    eps,
                )?;
                let s = self.value(x).shape();
                let count = s.n() * s.plane();
                let correction = if count > 1 {
                    T::from_usize(count) / T::from_usize(count - 1)
                } else {
                    T::ONE
                };
                self.bn_stats.push(BatchStat {
                    prefix: prefix.into(),
                    mean: r.batch_mean,
                    var: r.batch_var.iter().map(|&v| v * correction).collect(),
                });
                Ok(self.push(
                    r.output,
                    Op::BatchNormTrain {
                        x,
                        gamma,
                        beta,
                        normalized: r.normalized,
                        inv_std: r.inv_std,
                    },
                    ng,
                ))
            }
        }
    }

    /// Layer norm over the innermost axis of a token tensor.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let r = kernels::layer_norm_full(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        )?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            r.output,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized: r.normalized,
                inv_std: r.inv_std,
            },
            ng,
        ))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let bias = b.map(|b| self.value(b).data());
        let out = kernels::linear(self.value(x), self.value(w), bias)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(out, Op::Linear { x, w, b }, ng))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(kernels::gelu);
        let ng = self.ng(x);
        self.push(out, Op::Gelu(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(kernels::sigmoid);
        let ng = self.ng(x);
        self.push(out, Op::Sigmoid(x), ng)
    }

    pub fn pool(&mut self, x: Var, mode: PoolMode, axes: PoolAxes) -> Result<Var> {
        let (out, argmax) = kernels::pool_full(self.value(x), mode, axes)?;
        let ng = self.ng(x);
        Ok(self.push(
            out,
            Op::Pool {
                x,
                mode,
                axes,
                argmax,
            },
            ng,
        ))
    }

    pub fn avg_pool_ratio(&mut self, x: Var, ratio: usize) -> Result<Var> {
        let out = kernels::avg_pool_ratio(self.value(x), ratio)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::AvgPoolRatio(x, ratio), ng))
    }

    pub fn resize(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let out = kernels::bilinear_resize(self.value(x), h, w)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Resize(x), ng))
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (out, probs) = attention_forward(self.value(q), self.value(k), self.value(v), heads)?;
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        let probs = if ng { probs } else { Vec::new() };
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            ng,
        ))
    }

    pub fn to_tokens(&mut self, x: Var) -> Var {
        let out = kernels::to_tokens(self.value(x));
        let ng = self.ng(x);
        self.push(out, Op::ToTokens(x), ng)
    }

    pub fn to_map(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let out = kernels::to_map(self.value(x), h, w)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::ToMap(x), ng))
    }

    /// Propagate `seeds` (output variable, dLoss/dOutput) back through the tape.
    pub fn backward(&self, seeds: &[(Var, Tensor<T>)]) -> Result<Gradients<T>> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            ensure_same_shape("backward", self.value(*v).shape(), g.shape())?;
            accumulate(&mut grads[v.0], g.clone());
        }
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let send = |grads: &mut Vec<Option<Tensor<T>>>, v: Var, t: Tensor<T>| {
                if self.nodes[v.0].needs_grad {
                    accumulate(&mut grads[v.0], t);
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    send(&mut grads, *b, g.clone());
                    send(&mut grads, *a, g);
                }
                Op::Scale(a, s) => send(&mut grads, *a, g.scale(*s)),
                Op::MulBroadcast(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.ng(*a) {
                        send(&mut grads, *a, kernels::mul_broadcast(&g, bv)?);
                    }
                    if self.ng(*b) {
                        let bc = kernels::broadcast_check(av.shape(), bv.shape())?;
                        let mut db = Tensor::zeros(bv.shape());
                        let [n, c, h, w] = av.shape().0;
                        let mut i = 0;
                        for bn in 0..n {
                            for ch in 0..c {
                                for y in 0..h {
                                    for x in 0..w {
                                        db.data_mut()[bc.flat(bn, ch, y, x)] += g.data()[i] * av.data()[i];
                                        i += 1;
                                    }
                                }
                            }
                        }
                        send(&mut grads, *b, db);
                    }
                }
                Op::Conv { x, w, b, geom } => {
                    let r = kernels::conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        *geom,
                        &g,
                        (self.ng(*x), self.ng(*w), b.is_some_and(|b| self.ng(b))),
                    )?;
                    if let Some(dx) = r.input {
                        send(&mut grads, *x, dx);
                    }
                    if let Some(dw) = r.weight {
                        send(&mut grads, *w, dw);
                    }
                    if let (Some(b), Some(db)) = (b, r.bias) {
                        send(&mut grads, *b, vec_tensor(self.value(*b), db));
                    }
                }
                Op::BatchNormInfer {
                    x,
                    gamma,
                    beta,
                    mean,
                    inv_std,
                } => {
                    let xv = self.value(*x);
                    let gm = self.value(*gamma).data();
                    let c = xv.shape().c();
                    let plane = xv.shape().plane();
                    let mut dx = g.clone();
                    let mut dgamma = vec![T::ZERO; c];
                    let mut dbeta = vec![T::ZERO; c];
                    for (i, (d, xs)) in dx.data_mut().chunks_mut(plane).zip(xv.data().chunks(plane)).enumerate() {
                        let ch = i % c;
                        for (dv, &xx) in d.iter_mut().zip(xs) {
                            dgamma[ch] += *dv * (xx - mean[ch]) * inv_std[ch];
                            dbeta[ch] += *dv;
                            *dv *= gm[ch] * inv_std[ch];
                        }
                    }
                    send(&mut grads, *x, dx);
                    send(&mut grads, *gamma, vec_tensor(self.value(*gamma), dgamma));
                    send(&mut grads, *beta, vec_tensor(self.value(*beta), dbeta));
                }
                Op::BatchNormTrain {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let (dx, dgamma, dbeta) = kernels::batch_norm_train_backward(
                        normalized,
                        inv_std,
                        self.value(*gamma).data(),
                        &g,
                    );
                    send(&mut grads, *x, dx);
                    send(&mut grads, *gamma, vec_tensor(self.value(*gamma), dgamma));
                    send(&mut grads, *beta, vec_tensor(self.value(*beta), dbeta));
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let (dx, dgamma, dbeta) =
                        kernels::layer_norm_backward(normalized, inv_std, self.value(*gamma).data(), &g);
                    send(&mut grads, *x, dx);
                    send(&mut grads, *gamma, vec_tensor(self.value(*gamma), dgamma));
                    send(&mut grads, *beta, vec_tensor(self.value(*beta), dbeta));
                }
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) =
                        kernels::linear_backward(self.value(*x), self.value(*w), &g, self.ng(*x));
                    if let Some(dx) = dx {
                        send(&mut grads, *x, dx);
                    }
                    send(&mut grads, *w, dw);
                    if let Some(b) = b {
                        send(&mut grads, *b, vec_tensor(self.value(*b), db));
                    }
                }
                Op::Gelu(x) => {
                    let dx = g.zip_map(self.value(*x), |gv, xv| gv * kernels::gelu_derivative(xv))?;
                    send(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let dx = g.zip_map(&node.value, |gv, s| gv * s * (T::ONE - s))?;
                    send(&mut grads, *x, dx);
                }
                Op::Pool {
                    x,
                    mode,
                    axes,
                    argmax,
                } => {
                    let dx = kernels::pool_backward(self.value(*x), *mode, *axes, argmax, &g);
                    send(&mut grads, *x, dx);
                }
                Op::AvgPoolRatio(x, r) => {
                    let dx = kernels::avg_pool_ratio_backward(self.value(*x), *r, &g);
                    send(&mut grads, *x, dx);
                }
                Op::Resize(x) => {
                    let dx = kernels::bilinear_resize_backward(self.value(*x).shape(), &g);
                    send(&mut grads, *x, dx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    probs,
                } => {
                    let (dq, dk, dv) = attention_backward(
                        self.value(*q),
                        self.value(*k),
                        self.value(*v),
                        *heads,
                        probs,
                        &g,
                    );
                    send(&mut grads, *q, dq);
                    send(&mut grads, *k, dk);
                    send(&mut grads, *v, dv);
                }
                Op::ToTokens(x) => {
                    let s = self.value(*x).shape();
                    send(&mut grads, *x, kernels::to_map(&g, s.h(), s.w())?);
                }
                Op::ToMap(x) => send(&mut grads, *x, kernels::to_tokens(&g)),
            }
        }
        Ok(Gradients {
            per_var: grads,
            params: self.param_vars.clone(),
        })
    }
}

/// Run `f` on a fresh inference graph and return the value of its output.
pub fn evaluate<T: Real>(
    params: &ParamStore<T>,
    f: impl FnOnce(&mut Graph<'_, T>) -> Result<Var>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new(params, Mode::Infer);
    let out = f(&mut g)?;
    Ok(g.into_value(out))
}
