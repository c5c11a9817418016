//! Random kernel instances checked against [`super::oracle`]. Each case runs
//! the library kernel in f32 and returns the worst error relative to
//! `max(1, |reference|)`.

use tanet_core::attention::scaled_dot_product;
use tanet_core::kernels::{
    avg_pool_ratio, bilinear_resize, conv2d, nearest_resize, pool, softmax_lastdim, window3, ConvGeometry, ConvParams,
    PoolAxes, PoolMode,
};
use tanet_core::Tensor;

use super::oracle;
use super::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    Conv,
    Pool,
    Resize,
    Softmax,
    Attention,
}

pub const ALL: [Kernel; 5] = [Kernel::Conv, Kernel::Pool, Kernel::Resize, Kernel::Softmax, Kernel::Attention];

fn rel_err(got: &Tensor<f32>, want: &Tensor<f64>) -> f64 {
    assert_eq!(got.shape(), want.shape(), "shape");
    got.data()
        .iter()
        .zip(want.data())
        .map(|(&a, &b)| (a as f64 - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Largest extents drawn: batch 2, channels 8, 16×16 planes.
fn dims(rng: &mut Rng) -> [usize; 4] {
    [1 + rng.below(2), 1 + rng.below(8), 1 + rng.below(16), 1 + rng.below(16)]
}

pub fn run_case(kernel: Kernel, rng: &mut Rng) -> f64 {
    match kernel {
        Kernel::Conv => {
            let groups = [1, 1, 2, 4][rng.below(4)];
            let cin = groups * (1 + rng.below(8 / groups));
            let cout = groups * (1 + rng.below(8 / groups));
            let k = [1, 3, 5, 7][rng.below(4)];
            let dil = 1 + rng.below(2);
            let span = dil * (k - 1) + 1;
            let pad = rng.below(k / 2 + 1) * dil;
            let stride = 1 + rng.below(2);
            let lo = span.saturating_sub(2 * pad).max(1);
            let (h, w) = (lo + rng.below(17 - lo), lo + rng.below(17 - lo));
            let n = 1 + rng.below(2);
            let x = rng.tensor::<f32>([n, cin, h, w], -1.0, 1.0);
            let wt = rng.tensor::<f32>([cout, cin / groups, k, k], -1.0, 1.0);
            let b: Vec<f32> = (0..cout).map(|_| rng.range(-1.0, 1.0) as f32).collect();
            let geom = ConvGeometry { stride, padding: pad, dilation: dil, groups };
            let got = conv2d(&x, &ConvParams::new(wt.clone(), b.clone(), geom)).unwrap();
            let b64: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            rel_err(&got, &oracle::conv2d(&x.cast(), &wt.cast(), &b64, stride, pad, dil, groups))
        }
        Kernel::Pool => {
            let d = dims(rng);
            let x = rng.tensor::<f32>(d, -2.0, 2.0);
            let x64 = x.cast::<f64>();
            let which = rng.below(4);
            let ratio = 1 + rng.below(4);
            let mut worst = 0.0f64;
            for max in [false, true] {
                let mode = if max { PoolMode::Max } else { PoolMode::Avg };
                let (got, want) = match which {
                    0 => (pool(&x, mode, PoolAxes::SpatialGlobal).unwrap(), oracle::pool_spatial(&x64, max)),
                    1 => (pool(&x, mode, PoolAxes::Channel).unwrap(), oracle::pool_channel(&x64, max)),
                    2 => (window3(&x, max).0, oracle::window3(&x64, max)),
                    _ => (avg_pool_ratio(&x, ratio).unwrap(), oracle::avg_pool_ratio(&x64, ratio)),
                };
                worst = worst.max(rel_err(&got, &want));
            }
            worst
        }
        Kernel::Resize => {
            let d = dims(rng);
            let x = rng.tensor::<f32>(d, -1.0, 1.0);
            let x64 = x.cast::<f64>();
            let (oh, ow) = (1 + rng.below(16), 1 + rng.below(16));
            let a = rel_err(&bilinear_resize(&x, oh, ow).unwrap(), &oracle::bilinear(&x64, oh, ow));
            let b = rel_err(&nearest_resize(&x, oh, ow).unwrap(), &oracle::nearest(&x64, oh, ow));
            a.max(b)
        }
        Kernel::Softmax => {
            let d = dims(rng);
            let x = rng.tensor::<f32>(d, -8.0, 8.0);
            rel_err(&softmax_lastdim(&x).unwrap(), &oracle::softmax_rows(&x.cast()))
        }
        Kernel::Attention => {
            let heads = [1, 2, 4][rng.below(3)];
            let c = heads * (1 + rng.below(8 / heads));
            let b = 1 + rng.below(2);
            let (nq, nk) = (1 + rng.below(16), 1 + rng.below(16));
            let q = rng.tensor::<f32>([b, 1, nq, c], -1.0, 1.0);
            let k = rng.tensor::<f32>([b, 1, nk, c], -1.0, 1.0);
            let v = rng.tensor::<f32>([b, 1, nk, c], -1.0, 1.0);
            let (got, _) = scaled_dot_product(&q, &k, &v, heads).unwrap();
            rel_err(&got, &oracle::attention(&q.cast(), &k.cast(), &v.cast(), heads))
        }
    }
}
