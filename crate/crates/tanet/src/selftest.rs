//! Built-in verification run by `tanet selftest`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use tanet_core::config::{ModelConfig, Preset};
use tanet_core::kernels::{conv2d, sigmoid, softmax_lastdim, ConvGeometry, ConvParams};
use tanet_core::losses::{bce, iou_loss, loss_grad, total_loss, GtPyramid, LossWeights};
use tanet_core::metrics::{evaluate_pair, SaliencyMapPair};
use tanet_core::model::TaNet;
use tanet_core::rgb_encoder::FeaturePyramid;
use tanet_core::{depth_encoder, rgb_encoder, Tensor};

use crate::checkpoint;

/// Deliberate defects for checking that the checks can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negate the analytic gradient of the edge cross-entropy.
    BceSign,
}

impl Fault {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bce-sign" => Some(Self::BceSign),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(Option<Fault>) -> Result<String, String>;

pub fn run(fault: Option<Fault>) -> Vec<CheckResult> {
    let checks: [(&str, Check); 8] = [
        ("pyramid contract, tiny preset", |_| pyramid(Preset::Tiny)),
        ("pyramid contract, full preset", |_| pyramid(Preset::Full)),
        ("conv2d against direct loops", |_| conv_oracle()),
        ("softmax against direct formula", |_| softmax_oracle()),
        ("loss reference values", |_| loss_constants()),
        ("loss gradient against finite differences", gradient_check),
        ("metrics on identical maps", |_| metrics_identity()),
        ("checkpoint round trip", |_| checkpoint_round_trip()),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let (passed, detail) = match f(fault) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult { name: (*name).into(), passed, detail }
        })
        .collect()
}

struct Rng(Xoshiro256PlusPlus);

impl Rng {
    fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    fn tensor(&mut self, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| self.range(lo, hi))
    }
}

fn pyramid(preset: Preset) -> Result<String, String> {
    let cfg = ModelConfig::preset(preset);
    let model = TaNet::new(cfg.clone()).map_err(|e| e.to_string())?;
    let params = model.init_params::<f32>(cfg.seed);
    let size = cfg.input_size;
    let image = Tensor::full([1, 3, size, size], 0.25f32);
    let r = rgb_encoder::rgb_encode(&image, &model.rgb, &params).map_err(|e| e.to_string())?;
    let d = depth_encoder::depth_encode(&image, &model.depth, &params).map_err(|e| e.to_string())?;
    let describe = |p: &FeaturePyramid<f32>| {
        p.levels
            .iter()
            .map(|t| format!("{}x{}x{}", t.shape().h(), t.shape().w(), t.shape().c()))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for (branch, p) in [("rgb", &r), ("depth", &d)] {
        for (i, t) in p.levels.iter().enumerate() {
            let e = cfg.level_extent(i);
            let want = [1, cfg.rgb.channels[i], e, e];
            if t.shape().0 != want {
                return Err(format!("{branch} level {}: got {:?}, want {want:?}", i + 1, t.shape()));
            }
        }
    }
    Ok(describe(&r))
}

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let [n, cin, h, wd] = x.shape().0;
    let [cout, _, k, _] = w.shape().0;
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    Tensor::from_fn([n, cout, oh, ow], |[bi, o, y, xx]| {
        let mut s = b[o];
        for c in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    let sy = (y * stride + ky) as i64 - pad as i64;
                    let sx = (xx * stride + kx) as i64 - pad as i64;
                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                        s += x.at(bi, c, sy as usize, sx as usize) * w.at(o, c, ky, kx);
                    }
                }
            }
        }
        s
    })
}

fn conv_oracle() -> Result<String, String> {
    let mut rng = Rng::new(11);
    let mut worst = 0.0f64;
    for case in 0..24 {
        let (cin, cout) = (1 + rng.below(4), 1 + rng.below(4));
        let k = [1, 3, 5][rng.below(3)];
        let (stride, pad) = (1 + rng.below(2), rng.below(k / 2 + 1));
        let (h, w) = (6 + rng.below(6), 6 + rng.below(6));
        let x = rng.tensor([2, cin, h, w], -1.0, 1.0);
        let w = rng.tensor([cout, cin, k, k], -1.0, 1.0);
        let b: Vec<f64> = (0..cout).map(|_| rng.range(-1.0, 1.0)).collect();
        let geom = ConvGeometry { stride, padding: pad, ..ConvGeometry::default() };
        let got = conv2d(&x, &ConvParams::new(w.clone(), b.clone(), geom)).map_err(|e| e.to_string())?;
        let diff = got.max_abs_diff(&naive_conv(&x, &w, &b, stride, pad)).map_err(|e| format!("case {case}: {e}"))?;
        worst = worst.max(diff);
    }
    if worst <= 1e-9 {
        Ok(format!("24 cases, max diff {worst:.1e}"))
    } else {
        Err(format!("max diff {worst:.3e}"))
    }
}

fn softmax_oracle() -> Result<String, String> {
    let mut rng = Rng::new(12);
    let x = rng.tensor([2, 3, 4, 9], -6.0, 6.0);
    let got = softmax_lastdim(&x).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (row, out) in x.data().chunks(9).zip(got.data().chunks(9)) {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        for (v, o) in row.iter().zip(out) {
            worst = worst.max((v.exp() / z - o).abs());
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max diff {worst:.1e}"))
    } else {
        Err(format!("max diff {worst:.3e}"))
    }
}

fn loss_constants() -> Result<String, String> {
    let half = Tensor::full([1, 1, 4, 4], 0.5f64);
    let ones = Tensor::full([1, 1, 4, 4], 1.0f64);
    let zeros = Tensor::zeros([1, 1, 4, 4]);
    let e = |r: tanet_core::Result<f64>| r.map_err(|e| e.to_string());
    let b = e(bce(&half, &zeros, 1e-7))?;
    let i = e(iou_loss(&half, &ones))?;
    if (b - std::f64::consts::LN_2).abs() > 1e-9 {
        return Err(format!("bce(0.5) = {b}"));
    }
    if (i - 0.5).abs() > 1e-9 {
        return Err(format!("iou(0.5, 1) = {i}"));
    }
    Ok(format!("bce {b:.9}, iou {i:.9}"))
}

fn gradient_check(fault: Option<Fault>) -> Result<String, String> {
    let w = LossWeights::default();
    let step = 1e-5;
    let mut worst = 0.0f64;
    let seeds = 10;
    for seed in 0..seeds {
        let mut rng = Rng::new(100 + seed);
        let mut mask = || Tensor::from_fn([1, 1, 4, 4], |_| (rng.unit() < 0.5) as u8 as f64);
        let edge_gt: [Tensor<f64>; 3] = std::array::from_fn(|_| mask());
        let sal_gt: [Tensor<f64>; 3] = std::array::from_fn(|_| mask());
        let gt = GtPyramid { edge: edge_gt, saliency: sal_gt };
        let el: Vec<Tensor<f64>> = (0..3).map(|_| rng.tensor([1, 1, 4, 4], -3.0, 3.0)).collect();
        let sl: Vec<Tensor<f64>> = (0..3).map(|_| rng.tensor([1, 1, 4, 4], -3.0, 3.0)).collect();
        let (_, mut grads) = loss_grad(&el, &sl, &gt, &w).map_err(|e| e.to_string())?;
        if fault == Some(Fault::BceSign) {
            // The edge loss is pure cross-entropy, so this flips exactly that term.
            for t in grads.edge.iter_mut() {
                *t = t.scale(-1.0);
            }
        }
        let loss = |e: &[Tensor<f64>], s: &[Tensor<f64>]| -> Result<f64, String> {
            let pe: Vec<_> = e.iter().map(|t| t.map(sigmoid)).collect();
            let ps: Vec<_> = s.iter().map(|t| t.map(sigmoid)).collect();
            Ok(total_loss(&pe, &ps, &gt, &w).map_err(|e| e.to_string())?.total)
        };
        for (which, analytic) in [(0, &grads.edge), (1, &grads.saliency)] {
            for lvl in 0..3 {
                for i in 0..16 {
                    let nudge = |d: f64| {
                        let (mut e, mut s) = (el.clone(), sl.clone());
                        let t = if which == 0 { &mut e } else { &mut s };
                        t[lvl].data_mut()[i] += d;
                        loss(&e, &s)
                    };
                    let fd = (nudge(step)? - nudge(-step)?) / (2.0 * step);
                    let an = analytic[lvl].data()[i];
                    let scale = an.abs().max(fd.abs());
                    if scale > 1e-8 {
                        worst = worst.max((an - fd).abs() / scale);
                    }
                }
            }
        }
    }
    if worst <= 1e-3 {
        Ok(format!("{seeds} cases, worst relative error {worst:.2e}"))
    } else {
        Err(format!("worst relative error {worst:.3e} exceeds 1e-3"))
    }
}

fn metrics_identity() -> Result<String, String> {
    let mut rng = Rng::new(13);
    let gt: Vec<bool> = (0..256).map(|_| rng.unit() < 0.3).collect();
    let pred: Vec<f64> = gt.iter().map(|&g| g as u8 as f64).collect();
    let pair = SaliencyMapPair::new(16, 16, pred, gt).map_err(|e| e.to_string())?;
    let r = evaluate_pair(&pair);
    if (r.f_beta_max - 1.0).abs() > 1e-9 || r.mae != 0.0 || (r.s_measure - 1.0).abs() > 1e-9 {
        return Err(format!("F {} MAE {} S {}", r.f_beta_max, r.mae, r.s_measure));
    }
    Ok("F 1, MAE 0, S 1".into())
}

fn checkpoint_round_trip() -> Result<String, String> {
    let model = TaNet::new(ModelConfig::tiny()).map_err(|e| e.to_string())?;
    let params = model.init_params::<f32>(5);
    let bytes = checkpoint::encode(&params).map_err(|e| e.to_string())?;
    let back = checkpoint::decode(&bytes).map_err(|e| e.to_string())?;
    for (name, p) in params.iter() {
        let q = back.get(name).map_err(|e| e.to_string())?;
        let same = p.dims() == q.dims() && p.value.data().iter().zip(q.value.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(format!("tensor `{name}` changed"));
        }
    }
    if back.len() != params.len() {
        return Err(format!("{} tensors in, {} out", params.len(), back.len()));
    }
    Ok(format!("{} tensors, {} bytes", params.len(), bytes.len()))
}
