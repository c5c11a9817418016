//! Direct-loop reference implementations in f64, written from the kernel
//! definitions rather than from the library code.

use tanet_core::Tensor;

pub type Map = Tensor<f64>;

#[allow(clippy::too_many_arguments)]
pub fn conv2d(x: &Map, w: &Map, b: &[f64], stride: usize, pad: usize, dil: usize, groups: usize) -> Map {
    let [n, cin, h, wd] = x.shape().0;
    let [cout, cg, kh, kw] = w.shape().0;
    let og = cout / groups;
    let oh = (h + 2 * pad - dil * (kh - 1) - 1) / stride + 1;
    let ow = (wd + 2 * pad - dil * (kw - 1) - 1) / stride + 1;
    assert_eq!(cg * groups, cin);
    Tensor::from_fn([n, cout, oh, ow], |[bi, o, y, xx]| {
        let g = o / og;
        let mut s = b[o];
        for ci in 0..cg {
            for ky in 0..kh {
                for kx in 0..kw {
                    let sy = (y * stride + ky * dil) as i64 - pad as i64;
                    let sx = (xx * stride + kx * dil) as i64 - pad as i64;
                    if sy < 0 || sx < 0 || sy as usize >= h || sx as usize >= wd {
                        continue;
                    }
                    s += x.at(bi, g * cg + ci, sy as usize, sx as usize) * w.at(o, ci, ky, kx);
                }
            }
        }
        s
    })
}

/// Global average or max over each plane.
pub fn pool_spatial(x: &Map, max: bool) -> Map {
    let [n, c, h, w] = x.shape().0;
    Tensor::from_fn([n, c, 1, 1], |[b, ch, _, _]| {
        let vals = (0..h).flat_map(|y| (0..w).map(move |xx| (y, xx))).map(|(y, xx)| x.at(b, ch, y, xx));
        if max {
            vals.fold(f64::NEG_INFINITY, f64::max)
        } else {
            vals.sum::<f64>() / (h * w) as f64
        }
    })
}

/// Average or max across channels at each pixel.
pub fn pool_channel(x: &Map, max: bool) -> Map {
    let [n, c, h, w] = x.shape().0;
    Tensor::from_fn([n, 1, h, w], |[b, _, y, xx]| {
        let vals = (0..c).map(|ch| x.at(b, ch, y, xx));
        if max {
            vals.fold(f64::NEG_INFINITY, f64::max)
        } else {
            vals.sum::<f64>() / c as f64
        }
    })
}

/// Non-overlapping r×r mean; edge windows average what they cover.
pub fn avg_pool_ratio(x: &Map, r: usize) -> Map {
    let [n, c, h, w] = x.shape().0;
    let (oh, ow) = (h.div_ceil(r), w.div_ceil(r));
    Tensor::from_fn([n, c, oh, ow], |[b, ch, oy, ox]| {
        let mut s = 0.0;
        let mut k = 0;
        for y in oy * r..((oy + 1) * r).min(h) {
            for xx in ox * r..((ox + 1) * r).min(w) {
                s += x.at(b, ch, y, xx);
                k += 1;
            }
        }
        s / k as f64
    })
}

/// 3×3 max (or min) filter clipped at the border.
pub fn window3(x: &Map, max: bool) -> Map {
    let [n, c, h, w] = x.shape().0;
    Tensor::from_fn([n, c, h, w], |[b, ch, y, xx]| {
        let mut best = x.at(b, ch, y, xx);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (sy, sx) = (y as i64 + dy, xx as i64 + dx);
                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                    let v = x.at(b, ch, sy as usize, sx as usize);
                    best = if max { best.max(v) } else { best.min(v) };
                }
            }
        }
        best
    })
}

/// Align-corners bilinear: output i samples source i·(in−1)/(out−1).
pub fn bilinear(x: &Map, oh: usize, ow: usize) -> Map {
    let [n, c, h, w] = x.shape().0;
    let coord = |i: usize, out: usize, inp: usize| -> f64 {
        if out == 1 || inp == 1 {
            0.0
        } else {
            i as f64 * (inp - 1) as f64 / (out - 1) as f64
        }
    };
    Tensor::from_fn([n, c, oh, ow], |[b, ch, y, xx]| {
        let (sy, sx) = (coord(y, oh, h), coord(xx, ow, w));
        let mut acc = 0.0;
        for yy in 0..h {
            for xs in 0..w {
                let wy = (1.0 - (sy - yy as f64).abs()).max(0.0);
                let wx = (1.0 - (sx - xs as f64).abs()).max(0.0);
                acc += wy * wx * x.at(b, ch, yy, xs);
            }
        }
        acc
    })
}

pub fn nearest(x: &Map, oh: usize, ow: usize) -> Map {
    let [n, c, h, w] = x.shape().0;
    Tensor::from_fn([n, c, oh, ow], |[b, ch, y, xx]| {
        let sy = ((y as f64 * h as f64 / oh as f64).floor() as usize).min(h - 1);
        let sx = ((xx as f64 * w as f64 / ow as f64).floor() as usize).min(w - 1);
        x.at(b, ch, sy, sx)
    })
}

pub fn softmax_rows(x: &Map) -> Map {
    let w = x.shape().w();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(w) {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        for v in row.iter_mut() {
            *v = v.exp() / z;
        }
    }
    out
}

/// softmax(Q Kᵀ / √d) V per head on (B, 1, N, C) token tensors.
pub fn attention(q: &Map, k: &Map, v: &Map, heads: usize) -> Map {
    let [b, _, nq, c] = q.shape().0;
    let nk = k.shape().h();
    let d = c / heads;
    let mut out = Tensor::zeros([b, 1, nq, c]);
    for bi in 0..b {
        for h in 0..heads {
            for i in 0..nq {
                let scores: Vec<f64> = (0..nk)
                    .map(|j| (0..d).map(|t| q.at(bi, 0, i, h * d + t) * k.at(bi, 0, j, h * d + t)).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                let z: f64 = scores.iter().map(|s| s.exp()).sum();
                for t in 0..d {
                    let o: f64 = (0..nk).map(|j| scores[j].exp() / z * v.at(bi, 0, j, h * d + t)).sum();
                    out.set(bi, 0, i, h * d + t, o);
                }
            }
        }
    }
    out
}
