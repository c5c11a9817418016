//! Brute-force and definitional metric references.

use tanet_core::metrics::SaliencyMapPair;

use super::Rng;

/// Brute force: rebuild the binary map for every threshold.
pub fn pr(pair: &SaliencyMapPair) -> Vec<(f64, f64)> {
    (0..256)
        .map(|t| {
            let (mut tp, mut m, mut g) = (0u32, 0u32, 0u32);
            for (s, &gt) in pair.pred.iter().zip(&pair.gt) {
                let on = (s * 255.0).round() > t as f64;
                m += on as u32;
                g += gt as u32;
                tp += (on && gt) as u32;
            }
            (tp as f64 / (m as f64 + 1e-8), tp as f64 / (g as f64 + 1e-8))
        })
        .collect()
}

pub fn fmax(pr: &[(f64, f64)]) -> f64 {
    let mut best = 0.0f64;
    for &(p, r) in pr {
        if p + r > 0.0 {
            best = best.max(1.3 * p * r / (0.3 * p + r));
        }
    }
    best
}

pub fn mae(pair: &SaliencyMapPair) -> f64 {
    let mut s = 0.0;
    for i in 0..pair.pred.len() {
        s += (pair.pred[i] - pair.gt[i] as u8 as f64).abs();
    }
    s / pair.pred.len() as f64
}

const E: f64 = f64::EPSILON;

fn rows(pair: &SaliencyMapPair) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let w = pair.width;
    let s = pair.pred.chunks(w).map(|r| r.to_vec()).collect();
    let g = pair.gt.chunks(w).map(|r| r.iter().map(|&b| b as u8 as f64).collect()).collect();
    (s, g)
}

fn object(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    2.0 * m / (m * m + 1.0 + sd + E)
}

fn ssim(s: &[Vec<f64>], g: &[Vec<f64>]) -> f64 {
    let xs: Vec<f64> = s.iter().flatten().copied().collect();
    let ys: Vec<f64> = g.iter().flatten().copied().collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return 0.0;
    }
    let x = xs.iter().sum::<f64>() / n;
    let y = ys.iter().sum::<f64>() / n;
    let sx = xs.iter().map(|a| (a - x) * (a - x)).sum::<f64>() / (n - 1.0 + E);
    let sy = ys.iter().map(|b| (b - y) * (b - y)).sum::<f64>() / (n - 1.0 + E);
    let sxy = xs.iter().zip(&ys).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / (n - 1.0 + E);
    let a = 4.0 * x * y * sxy;
    let b = (x * x + y * y) * (sx + sy);
    if a != 0.0 {
        a / (b + E)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn block(m: &[Vec<f64>], r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    m[r].iter().map(|row| row[c.clone()].to_vec()).collect()
}

/// Written from the definition with 1-based centroid arithmetic.
pub fn s_measure(pair: &SaliencyMapPair) -> f64 {
    let (s, g) = rows(pair);
    let (h, w) = (pair.height, pair.width);
    let y_mean = g.iter().flatten().sum::<f64>() / (h * w) as f64;
    let s_mean = s.iter().flatten().sum::<f64>() / (h * w) as f64;
    if y_mean == 0.0 {
        return 1.0 - s_mean;
    }
    if y_mean == 1.0 {
        return s_mean;
    }
    let mut fg = vec![];
    let mut bg = vec![];
    for i in 0..h {
        for j in 0..w {
            if g[i][j] == 1.0 {
                fg.push(s[i][j]);
            } else {
                bg.push(1.0 - s[i][j]);
            }
        }
    }
    let so = y_mean * object(&fg) + (1.0 - y_mean) * object(&bg);

    let total: f64 = g.iter().flatten().sum();
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..h {
        for j in 0..w {
            cx += (j + 1) as f64 * g[i][j];
            cy += (i + 1) as f64 * g[i][j];
        }
    }
    let xc = (cx / total).round() as usize;
    let yc = (cy / total).round() as usize;
    let area = (h * w) as f64;
    let quads = [(0..yc, 0..xc), (0..yc, xc..w), (yc..h, 0..xc), (yc..h, xc..w)];
    let mut sr = 0.0;
    for (r, c) in quads {
        let wgt = (r.len() * c.len()) as f64 / area;
        sr += wgt * ssim(&block(&s, r.clone(), c.clone()), &block(&g, r, c));
    }
    let q = 0.5 * so + 0.5 * sr;
    q.max(0.0)
}

/// A random n×n pair: empty, full, noisy or disc ground truth with
/// uniform, correlated or coarsely quantized predictions.
pub fn random_pair(rng: &mut Rng, n: usize) -> SaliencyMapPair {
    let kind = rng.below(6);
    let (cx, cy, r) = (rng.range(0.0, n as f64), rng.range(0.0, n as f64), rng.range(1.0, n as f64 / 2.0));
    let gt: Vec<bool> = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64, (i % n) as f64);
            match kind {
                0 => false,
                1 => true,
                2 => rng.unit() < 0.5,
                _ => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            }
        })
        .collect();
    let pred: Vec<f64> = gt
        .iter()
        .map(|&g| match rng.below(3) {
            0 => rng.unit(),
            1 => (if g { 0.7 } else { 0.2 } + rng.range(-0.2, 0.2)).clamp(0.0, 1.0),
            _ => (rng.below(4) as f64) / 3.0,
        })
        .collect();
    SaliencyMapPair::new(n, n, pred, gt).unwrap()
}
