//! Training objective on probability maps, with analytic gradients.
//!
//! Every term is computed in double precision regardless of `T`. The `*_grad`
//! variants return dL/dp; [`loss_grad`] chains through the sigmoid to logits.

use alloc::format;
use alloc::vec::Vec;

use crate::decoder::DECODED_LEVELS;
use crate::error::{Error, Result};
use crate::kernels::{self, window3};
use crate::real::Real;
use crate::tensor::{ensure_same_shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Finest level first.
    pub edge_level_weights: [f64; DECODED_LEVELS],
    pub sal_level_weights: [f64; DECODED_LEVELS],
    /// Weight of the boundary term inside the composite saliency loss.
    pub alpha: f64,
    /// Weight of the IoU term inside the composite saliency loss.
    pub beta: f64,
    pub clamp_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            edge_level_weights: [0.5, 0.25, 0.25],
            sal_level_weights: [1.0, 0.5, 0.5],
            alpha: 1.0,
            beta: 0.7,
            clamp_eps: 1e-7,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = self.edge_level_weights.iter().chain(&self.sal_level_weights).chain([&self.alpha, &self.beta]);
        for &w in all {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("loss weight {w} must be positive")));
            }
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps <= 1e-3) {
            return Err(Error::Config(format!("clamp_eps {} outside (0, 1e-3]", self.clamp_eps)));
        }
        Ok(())
    }
}

/// Composite saliency components for one level.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IglParts {
    pub bce: f64,
    pub boundary: f64,
    pub iou: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LevelLoss {
    pub edge_bce: f64,
    pub saliency: IglParts,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub edge: f64,
    pub saliency: f64,
    pub levels: [LevelLoss; DECODED_LEVELS],
}

/// Ground-truth edge and saliency maps matched to each prediction level.
#[derive(Clone, Debug, PartialEq)]
pub struct GtPyramid<T: Real> {
    pub edge: [Tensor<T>; DECODED_LEVELS],
    pub saliency: [Tensor<T>; DECODED_LEVELS],
}

impl<T: Real> GtPyramid<T> {
    /// Nearest-neighbour downsampling of full-resolution maps to the given extents.
    pub fn from_full(edge: &Tensor<T>, saliency: &Tensor<T>, extents: [(usize, usize); DECODED_LEVELS]) -> Result<Self> {
        let down = |t: &Tensor<T>| -> Result<[Tensor<T>; DECODED_LEVELS]> {
            let v = extents
                .iter()
                .map(|&(h, w)| kernels::nearest_resize(t, h, w))
                .collect::<Result<Vec<_>>>()?;
            Ok(v.try_into().expect("three levels"))
        };
        Ok(Self {
            edge: down(edge)?,
            saliency: down(saliency)?,
        })
    }
}

struct Term {
    value: f64,
    grad: Option<Vec<f64>>,
}

fn check<T: Real>(op: &'static str, p: &Tensor<T>, g: &Tensor<T>) -> Result<()> {
    ensure_same_shape(op, p.shape(), g.shape())?;
    if p.numel() == 0 {
        return Err(Error::EmptyExtent { op, dim: "map" });
    }
    Ok(())
}

fn bce_term(p: &[f64], g: &[f64], eps: f64, want_grad: bool) -> Term {
    let n = p.len() as f64;
    let mut sum = 0.0;
    let mut grad = want_grad.then(|| alloc::vec![0.0; p.len()]);
    for i in 0..p.len() {
        let pc = p[i].clamp(eps, 1.0 - eps);
        sum += g[i] * libm::log(pc) + (1.0 - g[i]) * libm::log(1.0 - pc);
        if let Some(gr) = grad.as_mut() {
            if p[i] > eps && p[i] < 1.0 - eps {
                gr[i] = -(g[i] / pc - (1.0 - g[i]) / (1.0 - pc)) / n;
            }
        }
    }
    Term { value: -sum / n, grad }
}

fn iou_term(p: &[f64], g: &[f64], batch: usize, want_grad: bool) -> Term {
    let per = p.len() / batch;
    let mut value = 0.0;
    let mut grad = want_grad.then(|| alloc::vec![0.0; p.len()]);
    for b in 0..batch {
        let r = b * per..(b + 1) * per;
        let (ps, gs) = (&p[r.clone()], &g[r.clone()]);
        let inter: f64 = ps.iter().zip(gs).map(|(a, b)| a * b).sum();
        let union: f64 = ps.iter().zip(gs).map(|(a, b)| a + b - a * b).sum();
        if union <= 0.0 {
            continue;
        }
        value += (1.0 - inter / union).max(0.0);
        if let Some(gr) = grad.as_mut() {
            let u2 = union * union;
            for i in 0..per {
                gr[r.start + i] = -(gs[i] * union - inter * (1.0 - gs[i])) / u2 / batch as f64;
            }
        }
    }
    Term {
        value: value / batch as f64,
        grad,
    }
}

fn boundary_term<T: Real>(p: &Tensor<T>, g: &Tensor<T>, eps: f64, want_grad: bool) -> Term {
    let pf = p.cast::<f64>();
    let (dil, dil_arg) = window3(&pf, true);
    let (ero, ero_arg) = window3(&pf, false);
    let mp: Vec<f64> = dil.data().iter().zip(ero.data()).map(|(a, b)| a - b).collect();
    let mg: Vec<f64> = kernels::morphological_gradient(&g.cast::<f64>()).into_data();
    let inner = bce_term(&mp, &mg, eps, want_grad);
    let grad = inner.grad.map(|gm| {
        let mut gp = alloc::vec![0.0; mp.len()];
        for i in 0..mp.len() {
            gp[dil_arg[i]] += gm[i];
            gp[ero_arg[i]] -= gm[i];
        }
        gp
    });
    Term { value: inner.value, grad }
}

fn f64s<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64()).collect()
}

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 - eps]`.
pub fn bce<T: Real>(p: &Tensor<T>, g: &Tensor<T>, eps: f64) -> Result<f64> {
    check("bce", p, g)?;
    Ok(bce_term(&f64s(p), &f64s(g), eps, false).value)
}

/// Soft IoU loss per sample, averaged over the batch. Two empty maps score 0.
pub fn iou_loss<T: Real>(p: &Tensor<T>, g: &Tensor<T>) -> Result<f64> {
    check("iou_loss", p, g)?;
    Ok(iou_term(&f64s(p), &f64s(g), p.shape().n(), false).value)
}

/// Cross-entropy between the 3×3 morphological gradients of `p` and `g`.
pub fn boundary_loss<T: Real>(p: &Tensor<T>, g: &Tensor<T>, eps: f64) -> Result<f64> {
    check("boundary_loss", p, g)?;
    Ok(boundary_term(p, g, eps, false).value)
}

pub fn igl<T: Real>(p: &Tensor<T>, g: &Tensor<T>, w: &LossWeights) -> Result<IglParts> {
    Ok(igl_grad(p, g, w, false)?.0)
}

fn igl_grad<T: Real>(p: &Tensor<T>, g: &Tensor<T>, w: &LossWeights, want_grad: bool) -> Result<(IglParts, Option<Vec<f64>>)> {
    check("igl", p, g)?;
    let (pv, gv) = (f64s(p), f64s(g));
    let b = bce_term(&pv, &gv, w.clamp_eps, want_grad);
    let bd = boundary_term(p, g, w.clamp_eps, want_grad);
    let io = iou_term(&pv, &gv, p.shape().n(), want_grad);
    let parts = IglParts {
        bce: b.value,
        boundary: bd.value,
        iou: io.value,
        total: b.value + w.alpha * bd.value + w.beta * io.value,
    };
    let grad = match (b.grad, bd.grad, io.grad) {
        (Some(a), Some(c), Some(d)) => Some((0..a.len()).map(|i| a[i] + w.alpha * c[i] + w.beta * d[i]).collect()),
        _ => None,
    };
    Ok((parts, grad))
}

fn check_levels(op: &'static str, n: usize, m: usize) -> Result<()> {
    if n != DECODED_LEVELS || m != DECODED_LEVELS {
        return Err(Error::invalid(op, format!("expected {DECODED_LEVELS} levels, got {n} and {m}")));
    }
    Ok(())
}

/// Weighted per-level cross-entropy on edge maps, finest first.
pub fn edge_loss<T: Real>(e: &[Tensor<T>], gt: &[Tensor<T>], w: &LossWeights) -> Result<f64> {
    check_levels("edge_loss", e.len(), gt.len())?;
    let mut total = 0.0;
    for i in 0..DECODED_LEVELS {
        total += w.edge_level_weights[i] * bce(&e[i], &gt[i], w.clamp_eps)?;
    }
    Ok(total)
}

/// Weighted per-level composite loss on saliency maps, finest first.
pub fn saliency_loss<T: Real>(s: &[Tensor<T>], gt: &[Tensor<T>], w: &LossWeights) -> Result<f64> {
    check_levels("saliency_loss", s.len(), gt.len())?;
    let mut total = 0.0;
    for i in 0..DECODED_LEVELS {
        total += w.sal_level_weights[i] * igl(&s[i], &gt[i], w)?.total;
    }
    Ok(total)
}

/// Edge plus saliency loss on probability maps.
pub fn total_loss<T: Real>(
    edge: &[Tensor<T>],
    saliency: &[Tensor<T>],
    gt: &GtPyramid<T>,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    Ok(total_with_grads(edge, saliency, gt, w, false)?.0)
}

type ProbGrads = Option<([Vec<f64>; DECODED_LEVELS], [Vec<f64>; DECODED_LEVELS])>;

fn total_with_grads<T: Real>(
    edge: &[Tensor<T>],
    saliency: &[Tensor<T>],
    gt: &GtPyramid<T>,
    w: &LossWeights,
    want_grad: bool,
) -> Result<(LossBreakdown, ProbGrads)> {
    check_levels("total_loss", edge.len(), saliency.len())?;
    let mut out = LossBreakdown::default();
    let mut eg: [Vec<f64>; DECODED_LEVELS] = Default::default();
    let mut sg: [Vec<f64>; DECODED_LEVELS] = Default::default();
    for i in 0..DECODED_LEVELS {
        check("edge_loss", &edge[i], &gt.edge[i])?;
        let t = bce_term(&f64s(&edge[i]), &f64s(&gt.edge[i]), w.clamp_eps, want_grad);
        let (parts, grad) = igl_grad(&saliency[i], &gt.saliency[i], w, want_grad)?;
        out.levels[i] = LevelLoss {
            edge_bce: t.value,
            saliency: parts,
        };
        out.edge += w.edge_level_weights[i] * t.value;
        out.saliency += w.sal_level_weights[i] * parts.total;
        if want_grad {
            eg[i] = t.grad.unwrap_or_default().iter().map(|v| v * w.edge_level_weights[i]).collect();
            sg[i] = grad.unwrap_or_default().iter().map(|v| v * w.sal_level_weights[i]).collect();
        }
    }
    out.total = out.edge + out.saliency;
    Ok((out, want_grad.then_some((eg, sg))))
}

/// Loss gradients with respect to the pre-sigmoid logits of each level.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitGrads<T: Real> {
    pub edge: [Tensor<T>; DECODED_LEVELS],
    pub saliency: [Tensor<T>; DECODED_LEVELS],
}

/// Loss and its gradient with respect to logits; probabilities are the plain
/// sigmoid of the logits.
pub fn loss_grad<T: Real>(
    edge_logits: &[Tensor<T>],
    sal_logits: &[Tensor<T>],
    gt: &GtPyramid<T>,
    w: &LossWeights,
) -> Result<(LossBreakdown, LogitGrads<T>)> {
    check_levels("loss_grad", edge_logits.len(), sal_logits.len())?;
    let sig = |z: &Tensor<T>| z.map(kernels::sigmoid);
    let ep: Vec<Tensor<T>> = edge_logits.iter().map(sig).collect();
    let sp: Vec<Tensor<T>> = sal_logits.iter().map(sig).collect();
    let (breakdown, grads) = total_with_grads(&ep, &sp, gt, w, true)?;
    let (eg, sg) = grads.expect("gradients were requested");
    let chain = |p: &Tensor<T>, dp: &[f64]| -> Result<Tensor<T>> {
        let v: Vec<T> = p
            .data()
            .iter()
            .zip(dp)
            .map(|(pi, d)| {
                let pf = pi.to_f64();
                T::from_f64(d * pf * (1.0 - pf))
            })
            .collect();
        let t = Tensor::from_vec(p.shape(), v)?;
        if !t.all_finite() {
            return Err(Error::NonFinite { what: "loss gradient".into() });
        }
        Ok(t)
    };
    let mut e = Vec::with_capacity(DECODED_LEVELS);
    let mut s = Vec::with_capacity(DECODED_LEVELS);
    for i in 0..DECODED_LEVELS {
        e.push(chain(&ep[i], &eg[i])?);
        s.push(chain(&sp[i], &sg[i])?);
    }
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite { what: "loss".into() });
    }
    Ok((
        breakdown,
        LogitGrads {
            edge: e.try_into().expect("three levels"),
            saliency: s.try_into().expect("three levels"),
        },
    ))
}
