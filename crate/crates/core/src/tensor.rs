//! Dense rank-4 tensors in NCHW order.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::real::Real;

/// Extents of a rank-4 tensor: batch, channel, height, width.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self([n, c, h, w])
    }

    #[inline]
    pub const fn n(&self) -> usize {
        self.0[0]
    }
    #[inline]
    pub const fn c(&self) -> usize {
        self.0[1]
    }
    #[inline]
    pub const fn h(&self) -> usize {
        self.0[2]
    }
    #[inline]
    pub const fn w(&self) -> usize {
        self.0[3]
    }

    pub const fn numel(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2] * self.0[3]
    }

    /// Number of elements in one spatial plane.
    pub const fn plane(&self) -> usize {
        self.0[2] * self.0[3]
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, h, w] = self.0;
        write!(f, "{n}x{c}x{h}x{w}")
    }
}

impl From<[usize; 4]> for Shape {
    fn from(v: [usize; 4]) -> Self {
        Self(v)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::ZERO)
    }

    pub fn full(shape: impl Into<Shape>, value: T) -> Self {
        let shape = shape.into();
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: impl Into<Shape>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(Error::DataLength {
                expected: shape.numel(),
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: impl Into<Shape>, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let shape = shape.into();
        let [n, c, h, w] = shape.0;
        let mut data = Vec::with_capacity(shape.numel());
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([b, ch, y, x]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    /// Single-sample tensor from a channel-major slice of `f64` values.
    pub fn from_f64(shape: impl Into<Shape>, values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| T::from_f64(v)).collect())
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cc, h, w] = self.shape.0;
        ((b * cc + c) * h + y) * w + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(b, c, y, x);
        self.data[i] = v;
    }

    /// Reinterpret the same data under a new shape of equal size.
    pub fn reshape(self, shape: impl Into<Shape>) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        ensure_same_shape("zip_map", self.shape, other.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        ensure_same_shape("add_assign", self.shape, other.shape)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::ZERO, |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.data.len().max(1))
    }

    /// Largest absolute elementwise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        ensure_same_shape("max_abs_diff", self.shape, other.shape)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max))
    }

    /// Contiguous view of sample `b` as a new single-sample tensor.
    pub fn sample(&self, b: usize) -> Self {
        let per = self.shape.numel() / self.shape.n().max(1);
        let [_, c, h, w] = self.shape.0;
        Self {
            shape: Shape::new(1, c, h, w),
            data: self.data[b * per..(b + 1) * per].to_vec(),
        }
    }

    /// Concatenate single-sample tensors of equal shape along the batch axis.
    pub fn stack(samples: &[Self]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or(Error::EmptyExtent { op: "stack", dim: "batch" })?;
        let [_, c, h, w] = first.shape.0;
        let mut data = Vec::with_capacity(first.numel() * samples.len());
        let mut n = 0;
        for s in samples {
            ensure_same_shape("stack", Shape::new(s.shape.n(), c, h, w), s.shape)?;
            data.extend_from_slice(&s.data);
            n += s.shape.n();
        }
        Self::from_vec(Shape::new(n, c, h, w), data)
    }

    /// Mirror along the width axis.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.shape.w();
        let mut out = self.clone();
        for row in out.data.chunks_mut(w.max(1)) {
            row.reverse();
        }
        out
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, ", {:?}", self.data)?;
        }
        write!(f, ")")
    }
}

pub(crate) fn ensure_same_shape(op: &'static str, expected: Shape, found: Shape) -> Result<()> {
    const DIMS: [&str; 4] = ["batch", "channel", "height", "width"];
    for i in 0..4 {
        if expected.0[i] != found.0[i] {
            return Err(Error::ShapeMismatch {
                op,
                dim: DIMS[i],
                expected: expected.0[i],
                found: found.0[i],
            });
        }
    }
    Ok(())
}
