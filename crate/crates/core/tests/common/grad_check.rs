//! Central finite differences against the analytic logit gradients.

use tanet_core::kernels::sigmoid;
use tanet_core::losses::{loss_grad, total_loss, GtPyramid, LossWeights};
use tanet_core::Tensor;

use super::Rng;

pub const STEP: f64 = 1e-5;

/// Random binary edge and saliency masks, `n`×`n` at all three levels.
pub fn gt_pair(rng: &mut Rng, n: usize) -> GtPyramid<f64> {
    let mut m = || Tensor::from_fn([1, 1, n, n], |_| (rng.unit() < 0.5) as u8 as f64);
    GtPyramid {
        edge: [m(), m(), m()],
        saliency: [m(), m(), m()],
    }
}

/// Worst relative error over every logit of one random 4×4 case.
pub fn fd_check(seed: u64) -> f64 {
    let w = LossWeights::default();
    let mut rng = Rng(seed);
    let gt = gt_pair(&mut rng, 4);
    let e: Vec<Tensor<f64>> = (0..3).map(|_| rng.tensor([1, 1, 4, 4], -3.0, 3.0)).collect();
    let s: Vec<Tensor<f64>> = (0..3).map(|_| rng.tensor([1, 1, 4, 4], -3.0, 3.0)).collect();
    let (_, grads) = loss_grad(&e, &s, &gt, &w).unwrap();
    let loss = |e: &[Tensor<f64>], s: &[Tensor<f64>]| {
        let pe: Vec<_> = e.iter().map(|t| t.map(sigmoid)).collect();
        let ps: Vec<_> = s.iter().map(|t| t.map(sigmoid)).collect();
        total_loss(&pe, &ps, &gt, &w).unwrap().total
    };
    let h = STEP;
    let mut worst = 0.0f64;
    for which in 0..2 {
        for lvl in 0..3 {
            for i in 0..16 {
                let (mut ep, mut sp) = (e.clone(), s.clone());
                let (mut em, mut sm) = (e.clone(), s.clone());
                let target = if which == 0 { (&mut ep, &mut em) } else { (&mut sp, &mut sm) };
                target.0[lvl].data_mut()[i] += h;
                target.1[lvl].data_mut()[i] -= h;
                let fd = (loss(&ep, &sp) - loss(&em, &sm)) / (2.0 * h);
                let an = if which == 0 { grads.edge[lvl].data()[i] } else { grads.saliency[lvl].data()[i] };
                if an.abs() > 1e-8 {
                    worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()));
                }
            }
        }
    }
    worst
}
