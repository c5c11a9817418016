//! Full-batch gradient descent on a fixed sample set.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{batch, gt_pyramid, preprocess, RgbdSample};
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode};
use crate::losses::{loss_grad, LossBreakdown, LossWeights};
use crate::model::TaNet;
use crate::params::{ParamKind, ParamStore};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Running-statistics momentum for batch norm.
    pub bn_momentum: f64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 1e-3,
            bn_momentum: 0.1,
            weights: LossWeights::default(),
        }
    }
}

/// Run `cfg.steps` updates over the whole of `samples` as one batch and return
/// the loss observed at each step (before that step's update).
pub fn train_toy<T: Real>(
    model: &TaNet,
    params: &mut ParamStore<T>,
    samples: &[RgbdSample<T>],
    cfg: &TrainConfig,
) -> Result<Vec<LossBreakdown>> {
    if samples.is_empty() {
        return Err(Error::invalid("train_toy", "no samples"));
    }
    cfg.weights.validate()?;
    model.check_params(params)?;
    let prepared: Vec<RgbdSample<T>> = samples.iter().map(|s| preprocess(s, false, 0)).collect();
    let refs: Vec<&RgbdSample<T>> = prepared.iter().collect();
    let [rgb, depth, sal, edge] = batch(&refs)?;
    let size = rgb.shape().h();
    if rgb.shape().w() != size {
        return Err(Error::invalid("train_toy", "samples must be square"));
    }
    let gt = gt_pyramid(&sal, &edge, size)?;
    let lr = T::from_f64(cfg.lr);
    let m = T::from_f64(cfg.bn_momentum);

    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (loss, updates, stats) = {
            let mut g = Graph::new(params, Mode::Train);
            let (r, d) = (g.input(rgb.clone()), g.input(depth.clone()));
            let out = model.forward(&mut g, r, d)?;
            let el: Vec<_> = out.edge_logits.iter().map(|&v| g.value(v).clone()).collect();
            let sl: Vec<_> = out.sal_logits.iter().map(|&v| g.value(v).clone()).collect();
            let (loss, lg) = loss_grad(&el, &sl, &gt, &cfg.weights).map_err(|e| at_step(step, e))?;
            if !loss.total.is_finite() {
                return Err(at_step(step, Error::NonFinite { what: "loss".into() }));
            }
            let mut seeds = Vec::with_capacity(6);
            for i in 0..out.edge_logits.len() {
                seeds.push((out.edge_logits[i], lg.edge[i].clone()));
                seeds.push((out.sal_logits[i], lg.saliency[i].clone()));
            }
            let grads = g.backward(&seeds)?;
            let updates: Vec<_> = grads.params().map(|(n, t)| (n.clone(), t.clone())).collect();
            (loss, updates, g.take_batch_stats())
        };
        for (name, grad) in updates {
            let p = params.get_mut(&name).expect("gradient for a known parameter");
            if p.kind != ParamKind::Learnable {
                continue;
            }
            if !grad.all_finite() {
                return Err(at_step(step, Error::NonFinite { what: format!("gradient of {name}") }));
            }
            for (w, gr) in p.value.data_mut().iter_mut().zip(grad.data()) {
                *w -= lr * *gr;
            }
        }
        for s in stats {
            for (key, batch_vals) in [("running_mean", &s.mean), ("running_var", &s.var)] {
                let p = params
                    .get_mut(&format!("{}.{key}", s.prefix))
                    .ok_or_else(|| Error::MissingParam(format!("{}.{key}", s.prefix)))?;
                for (r, &b) in p.value.data_mut().iter_mut().zip(batch_vals.iter()) {
                    *r = (T::ONE - m) * *r + m * b;
                }
            }
        }
        trace.push(loss);
    }
    Ok(trace)
}

fn at_step(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { what } => Error::NonFinite {
            what: format!("{what} at step {}", step + 1),
        },
        other => other,
    }
}
