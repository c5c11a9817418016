//! 2-D convolution via im2col + gemm, with its backward pass.

use alloc::vec;
use alloc::vec::Vec;

use super::gemm::{gemm_acc, gemm_acc_at, gemm_acc_bt};
use crate::error::{ensure_dim, Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            ..Self::default()
        }
    }

    /// Same-size geometry for an odd kernel at stride 1.
    pub fn same(kernel: usize) -> Self {
        Self::new(1, kernel / 2)
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    /// `floor((n + 2·pad − dilation·(k−1) − 1)/stride) + 1`, or an error when that is < 1.
    pub fn output_extent(&self, input: usize, kernel: usize, dim: &'static str) -> Result<usize> {
        let padded = input + 2 * self.padding;
        let span = self.dilation * (kernel - 1) + 1;
        if kernel == 0 || padded < span {
            return Err(Error::EmptyExtent { op: "conv2d", dim });
        }
        Ok((padded - span) / self.stride + 1)
    }
}

/// Weight (out × in/groups × kh × kw), per-output-channel bias and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T: Real = f32> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub geometry: ConvGeometry,
}

impl<T: Real> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Vec<T>, geometry: ConvGeometry) -> Self {
        Self {
            weight,
            bias,
            geometry,
        }
    }
}

pub fn conv2d<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    conv2d_raw(x, &p.weight, Some(&p.bias), p.geometry)
}

struct Plan {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    groups: usize,
    cin_g: usize,
    cout_g: usize,
    g: ConvGeometry,
}

impl Plan {
    fn new(xs: Shape, ws: Shape, g: ConvGeometry) -> Result<Self> {
        let [n, cin, h, w] = xs.0;
        let [cout, cin_g, kh, kw] = ws.0;
        if g.groups == 0 || g.stride == 0 || g.dilation == 0 {
            return Err(Error::invalid("conv2d", "stride, dilation and groups must be positive"));
        }
        if cin % g.groups != 0 {
            return Err(Error::invalid("conv2d", "groups must divide input channels"));
        }
        if cout % g.groups != 0 {
            return Err(Error::invalid("conv2d", "groups must divide output channels"));
        }
        ensure_dim("conv2d", "channel", cin / g.groups, cin_g)?;
        let oh = g.output_extent(h, kh, "height")?;
        let ow = g.output_extent(w, kw, "width")?;
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            oh,
            ow,
            groups: g.groups,
            cin_g,
            cout_g: cout / g.groups,
            g,
        })
    }

    fn k(&self) -> usize {
        self.cin_g * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.g.stride == 1 && self.g.padding == 0
    }

    /// Column matrix (K × oh·ow) for one sample and group.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let ohw = self.oh * self.ow;
        let pad = self.g.padding as isize;
        for ci in 0..self.cin_g {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * ohw..(row + 1) * ohw];
                    for oy in 0..self.oh {
                        let iy = (oy * self.g.stride + ky * self.g.dilation) as isize - pad;
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            line.fill(T::ZERO);
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.g.stride + kx * self.g.dilation) as isize - pad;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::ZERO
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let ohw = self.oh * self.ow;
        let pad = self.g.padding as isize;
        for ci in 0..self.cin_g {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * ohw..(row + 1) * ohw];
                    for oy in 0..self.oh {
                        let iy = (oy * self.g.stride + ky * self.g.dilation) as isize - pad;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let line = &src[oy * self.ow..(oy + 1) * self.ow];
                        for (ox, &v) in line.iter().enumerate() {
                            let ix = (ox * self.g.stride + kx * self.g.dilation) as isize - pad;
                            if ix >= 0 && ix < self.w as isize {
                                plane[iy as usize * self.w + ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_raw<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&[T]>,
    geometry: ConvGeometry,
) -> Result<Tensor<T>> {
    let p = Plan::new(x.shape(), weight.shape(), geometry)?;
    if let Some(b) = bias {
        ensure_dim("conv2d", "bias", p.cout, b.len())?;
    }
    let ohw = p.oh * p.ow;
    let k = p.k();
    let mut out = Tensor::zeros([p.n, p.cout, p.oh, p.ow]);
    let mut cols = if p.is_pointwise() { Vec::new() } else { vec![T::ZERO; k * ohw] };
    let in_per = p.cin * p.h * p.w;
    let out_per = p.cout * ohw;
    let xd = x.data();
    let wd = weight.data();
    let od = out.data_mut();
    for b in 0..p.n {
        for g in 0..p.groups {
            let xg = &xd[b * in_per + g * p.cin_g * p.h * p.w..][..p.cin_g * p.h * p.w];
            let og = &mut od[b * out_per + g * p.cout_g * ohw..][..p.cout_g * ohw];
            if let Some(bias) = bias {
                for (oc, chunk) in og.chunks_mut(ohw).enumerate() {
                    chunk.fill(bias[g * p.cout_g + oc]);
                }
            }
            let wg = &wd[g * p.cout_g * k..(g + 1) * p.cout_g * k];
            if p.is_pointwise() {
                gemm_acc(p.cout_g, k, ohw, wg, xg, og);
            } else {
                p.im2col(xg, &mut cols);
                gemm_acc(p.cout_g, k, ohw, wg, &cols, og);
            }
        }
    }
    Ok(out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    geometry: ConvGeometry,
    grad_out: &Tensor<T>,
    need: (bool, bool, bool),
) -> Result<ConvGrads<T>> {
    let p = Plan::new(x.shape(), weight.shape(), geometry)?;
    let ohw = p.oh * p.ow;
    let k = p.k();
    let in_per = p.cin * p.h * p.w;
    let out_per = p.cout * ohw;
    let mut dx = need.0.then(|| Tensor::zeros(x.shape()));
    let mut dw = need.1.then(|| Tensor::zeros(weight.shape()));
    let mut db = need.2.then(|| vec![T::ZERO; p.cout]);
    let mut cols = vec![T::ZERO; k * ohw];
    let mut dcols = vec![T::ZERO; k * ohw];
    let gd = grad_out.data();
    for b in 0..p.n {
        for g in 0..p.groups {
            let gog = &gd[b * out_per + g * p.cout_g * ohw..][..p.cout_g * ohw];
            if let Some(db) = db.as_mut() {
                for (oc, chunk) in gog.chunks(ohw).enumerate() {
                    db[g * p.cout_g + oc] += chunk.iter().fold(T::ZERO, |a, &v| a + v);
                }
            }
            let x_off = b * in_per + g * p.cin_g * p.h * p.w;
            if let Some(dw) = dw.as_mut() {
                let xg = &x.data()[x_off..][..p.cin_g * p.h * p.w];
                let src: &[T] = if p.is_pointwise() {
                    xg
                } else {
                    p.im2col(xg, &mut cols);
                    &cols
                };
                let dwg = &mut dw.data_mut()[g * p.cout_g * k..(g + 1) * p.cout_g * k];
                gemm_acc_bt(p.cout_g, ohw, k, gog, src, dwg);
            }
            if let Some(dx) = dx.as_mut() {
                let wg = &weight.data()[g * p.cout_g * k..(g + 1) * p.cout_g * k];
                let dxg = &mut dx.data_mut()[x_off..][..p.cin_g * p.h * p.w];
                if p.is_pointwise() {
                    gemm_acc_at(k, p.cout_g, ohw, wg, gog, dxg);
                } else {
                    dcols.fill(T::ZERO);
                    gemm_acc_at(k, p.cout_g, ohw, wg, gog, &mut dcols);
                    p.col2im(&dcols, dxg);
                }
            }
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}
