mod common;

use common::grad_check::{fd_check, gt_pair};
use common::Rng;
use proptest::prelude::*;
use tanet_core::kernels::sigmoid;
use tanet_core::losses::{
    bce, boundary_loss, edge_loss, igl, iou_loss, loss_grad, saliency_loss, total_loss, GtPyramid, LossWeights,
};
use tanet_core::Tensor;

const EPS: f64 = 1e-7;
const LN2: f64 = std::f64::consts::LN_2;

fn map(h: usize, w: usize, v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64([1, 1, h, w], v).unwrap()
}

fn binary(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| (rng.unit() < 0.5) as u8 as f64).collect()
}

/// Straight-line oracles, written independently of the library.
mod oracle {
    pub fn bce(p: &[f64], g: &[f64], eps: f64) -> f64 {
        let mut s = 0.0;
        for (pi, gi) in p.iter().zip(g) {
            let q = pi.max(eps).min(1.0 - eps);
            s -= gi * q.ln() + (1.0 - gi) * (1.0 - q).ln();
        }
        s / p.len() as f64
    }

    pub fn morph(x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h as i64 {
            for xx in 0..w as i64 {
                let (mut hi, mut lo) = (f64::MIN, f64::MAX);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (sy, sx) = (y + dy, xx + dx);
                        if sy >= 0 && sx >= 0 && sy < h as i64 && sx < w as i64 {
                            let v = x[(sy * w as i64 + sx) as usize];
                            hi = hi.max(v);
                            lo = lo.min(v);
                        }
                    }
                }
                out[(y * w as i64 + xx) as usize] = hi - lo;
            }
        }
        out
    }

    pub fn iou(p: &[f64], g: &[f64]) -> f64 {
        let i: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        let u: f64 = p.iter().zip(g).map(|(a, b)| a + b - a * b).sum();
        if u == 0.0 {
            0.0
        } else {
            1.0 - i / u
        }
    }
}

#[test]
fn bce_examples() {
    let g = [0.0, 1.0, 1.0, 0.0];
    let t = map(2, 2, &g);
    assert!(bce(&t, &t, EPS).unwrap() <= -(1.0 - EPS).ln() + 1e-15);
    let half = Tensor::full(t.shape(), 0.5);
    assert!((bce(&half, &t, EPS).unwrap() - LN2).abs() < 1e-9);
    let inv = t.map(|v| 1.0 - v);
    assert!((bce(&inv, &t, EPS).unwrap() + EPS.ln()).abs() < 1e-9);
    assert!(bce(&t, &Tensor::zeros([1, 1, 1, 4]), EPS).is_err());
}

#[test]
fn iou_examples() {
    let g = map(2, 2, &[1.0, 0.0, 1.0, 1.0]);
    assert_eq!(iou_loss(&g, &g).unwrap(), 0.0);
    let ones = Tensor::full(g.shape(), 1.0);
    assert_eq!(iou_loss(&Tensor::zeros(g.shape()), &ones).unwrap(), 1.0);
    assert!((iou_loss(&Tensor::full(g.shape(), 0.5), &ones).unwrap() - 0.5).abs() < 1e-9);
    let z = Tensor::<f64>::zeros(g.shape());
    assert_eq!(iou_loss(&z, &z).unwrap(), 0.0);
}

#[test]
fn iou_is_per_sample() {
    let a = map(1, 2, &[0.5, 0.5]);
    let ga = map(1, 2, &[1.0, 1.0]);
    let b = map(1, 2, &[1.0, 0.0]);
    let gb = map(1, 2, &[1.0, 0.0]);
    let p = Tensor::stack(&[a, b]).unwrap();
    let g = Tensor::stack(&[ga, gb]).unwrap();
    assert!((iou_loss(&p, &g).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn boundary_examples() {
    let mut rng = Rng(1);
    let g = map(4, 4, &binary(&mut rng, 16));
    assert!(boundary_loss(&g, &g, EPS).unwrap() < 1e-6);
    let c = Tensor::full(g.shape(), 0.3);
    let one = Tensor::full(g.shape(), 1.0);
    assert!(boundary_loss(&c, &one, EPS).unwrap() < 1e-6);

    // Single foreground pixel in a 5×5 mask against a soft prediction of it.
    let mut gv = vec![0.0; 25];
    gv[12] = 1.0;
    let mut pv = vec![0.1; 25];
    pv[12] = 0.8;
    pv[0] = 0.2;
    let expected = oracle::bce(&oracle::morph(&pv, 5, 5), &oracle::morph(&gv, 5, 5), EPS);
    let got = boundary_loss(&map(5, 5, &pv), &map(5, 5, &gv), EPS).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn igl_composes_its_parts() {
    let w = LossWeights::default();
    let mut rng = Rng(2);
    let p = map(4, 4, &(0..16).map(|_| rng.unit()).collect::<Vec<_>>());
    let g = map(4, 4, &binary(&mut rng, 16));
    let parts = igl(&p, &g, &w).unwrap();
    assert_eq!(parts.total, parts.bce + parts.boundary + 0.7 * parts.iou);
    assert_eq!(parts.bce, bce(&p, &g, EPS).unwrap());
    assert_eq!(parts.boundary, boundary_loss(&p, &g, EPS).unwrap());
    assert_eq!(parts.iou, iou_loss(&p, &g).unwrap());

    let half = Tensor::full([1, 1, 4, 4], 0.5);
    let ones = Tensor::full([1, 1, 4, 4], 1.0);
    let u = igl(&half, &ones, &w).unwrap();
    let boundary = oracle::bce(&[0.0; 16], &[0.0; 16], EPS);
    assert!((u.total - (LN2 + boundary + 0.7 * 0.5)).abs() < 1e-9);
    assert!(igl(&g, &g, &w).unwrap().total < 1e-5);
}

#[test]
fn level_weights() {
    let w = LossWeights::default();
    let mut rng = Rng(3);
    let g: Vec<Tensor<f64>> = (0..3).map(|i| map(8 >> i, 8 >> i, &binary(&mut rng, 64 >> (2 * i)))).collect();
    let p: Vec<Tensor<f64>> = (0..3).map(|i| map(8 >> i, 8 >> i, &(0..64 >> (2 * i)).map(|_| rng.unit()).collect::<Vec<_>>())).collect();
    let b: Vec<f64> = (0..3).map(|i| bce(&p[i], &g[i], EPS).unwrap()).collect();
    let e = edge_loss(&p, &g, &w).unwrap();
    assert!((e - (0.5 * b[0] + 0.25 * b[1] + 0.25 * b[2])).abs() < 1e-15);
    let s: Vec<f64> = (0..3).map(|i| igl(&p[i], &g[i], &w).unwrap().total).collect();
    let sl = saliency_loss(&p, &g, &w).unwrap();
    assert!((sl - (s[0] + 0.5 * s[1] + 0.5 * s[2])).abs() < 1e-15);

    let halves: Vec<Tensor<f64>> = g.iter().map(|t| Tensor::full(t.shape(), 0.5)).collect();
    assert!((edge_loss(&halves, &g, &w).unwrap() - LN2).abs() < 1e-9);
    let ones: Vec<Tensor<f64>> = g.iter().map(|t| Tensor::full(t.shape(), 1.0)).collect();
    let unit = igl(&halves[0], &ones[0], &w).unwrap().total;
    assert!((saliency_loss(&halves, &ones, &w).unwrap() - 2.0 * unit).abs() < 1e-9);
    assert!(edge_loss(&p[..2], &g[..2], &w).is_err());
}

#[test]
fn total_breakdown() {
    let w = LossWeights::default();
    let mut rng = Rng(4);
    let gt = gt_pair(&mut rng, 4);
    let perfect = total_loss(&gt.edge, &gt.saliency, &gt, &w).unwrap();
    assert!(perfect.total < 1e-5);
    let pe: Vec<Tensor<f64>> = (0..3).map(|_| rng.tensor([1, 1, 4, 4], 0.0, 1.0)).collect();
    let ps: Vec<Tensor<f64>> = (0..3).map(|_| rng.tensor([1, 1, 4, 4], 0.0, 1.0)).collect();
    let b = total_loss(&pe, &ps, &gt, &w).unwrap();
    assert_eq!(b.total, b.edge + b.saliency);
    assert_eq!(b.edge, edge_loss(&pe, &gt.edge, &w).unwrap());
    assert_eq!(b.saliency, saliency_loss(&ps, &gt.saliency, &w).unwrap());
    for (i, l) in b.levels.iter().enumerate() {
        assert!((l.edge_bce - oracle::bce(pe[i].data(), gt.edge[i].data(), EPS)).abs() < 1e-14);
        assert!((l.saliency.iou - oracle::iou(ps[i].data(), gt.saliency[i].data())).abs() < 1e-15);
        assert!(l.edge_bce >= 0.0 && l.saliency.bce >= 0.0 && l.saliency.boundary >= 0.0 && l.saliency.iou >= 0.0);
    }
}

#[test]
fn single_pixel_bce_gradient_is_p_minus_g() {
    let mut w = LossWeights::default();
    w.edge_level_weights = [1.0, 1e-300, 1e-300];
    let z = 0.8;
    let g = 1.0;
    let logits = [map(1, 1, &[z]), map(1, 1, &[0.0]), map(1, 1, &[0.0])];
    let gt = GtPyramid {
        edge: [map(1, 1, &[g]), map(1, 1, &[0.0]), map(1, 1, &[0.0])],
        saliency: [map(1, 1, &[0.0]), map(1, 1, &[0.0]), map(1, 1, &[0.0])],
    };
    let (_, grads) = loss_grad(&logits, &logits, &gt, &w).unwrap();
    assert!((grads.edge[0].data()[0] - (sigmoid(z) - g)).abs() < 1e-12);
}

#[test]
fn grad_at_perfect_prediction_is_small() {
    let w = LossWeights::default();
    let mut rng = Rng(5);
    let gt = gt_pair(&mut rng, 4);
    let logits: Vec<Tensor<f64>> = gt.edge.iter().map(|t| t.map(|g| if g > 0.5 { 30.0 } else { -30.0 })).collect();
    let (_, grads) = loss_grad(&logits, &logits, &gt, &w).unwrap();
    for t in &grads.edge {
        assert!(t.data().iter().all(|v| v.abs() < 1e-10));
    }
}

/// Relative error of the analytic logit gradient against central differences.
#[test]
fn gradients_match_finite_differences() {
    for seed in 0..20 {
        let r = fd_check(1000 + seed);
        assert!(r <= 1e-3, "seed {seed}: relative error {r}");
    }
}

#[test]
fn weights_validate() {
    assert!(LossWeights::default().validate().is_ok());
    let mut w = LossWeights::default();
    w.clamp_eps = 0.1;
    assert!(w.validate().is_err());
    let mut w = LossWeights::default();
    w.beta = 0.0;
    assert!(w.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pixel_permutation_invariance(seed in any::<u64>()) {
        let mut rng = Rng(seed);
        let p: Vec<f64> = (0..16).map(|_| rng.unit()).collect();
        let g = binary(&mut rng, 16);
        let mut idx: Vec<usize> = (0..16).collect();
        for i in (1..16).rev() {
            idx.swap(i, rng.below(i + 1));
        }
        let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let gp: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
        let (a, b) = (map(4, 4, &p), map(4, 4, &g));
        let (ap, bp) = (map(4, 4, &pp), map(4, 4, &gp));
        prop_assert!((bce(&a, &b, EPS).unwrap() - bce(&ap, &bp, EPS).unwrap()).abs() < 1e-12);
        prop_assert!((iou_loss(&a, &b).unwrap() - iou_loss(&ap, &bp).unwrap()).abs() < 1e-12);
        prop_assert!((iou_loss(&a, &b).unwrap() - iou_loss(&b, &a).unwrap()).abs() < 1e-15);
        let i = iou_loss(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&i));
        prop_assert!(bce(&a, &b, EPS).unwrap() >= 0.0);
        prop_assert!(boundary_loss(&a, &b, EPS).unwrap() >= 0.0);
    }

    #[test]
    fn matches_oracles(seed in any::<u64>()) {
        let mut rng = Rng(seed);
        let p: Vec<f64> = (0..36).map(|_| rng.unit()).collect();
        let g = binary(&mut rng, 36);
        let (a, b) = (map(6, 6, &p), map(6, 6, &g));
        prop_assert!((bce(&a, &b, EPS).unwrap() - oracle::bce(&p, &g, EPS)).abs() < 1e-12);
        prop_assert!((iou_loss(&a, &b).unwrap() - oracle::iou(&p, &g)).abs() < 1e-12);
        let bd = oracle::bce(&oracle::morph(&p, 6, 6), &oracle::morph(&g, 6, 6), EPS);
        prop_assert!((boundary_loss(&a, &b, EPS).unwrap() - bd).abs() < 1e-12);
    }
}
