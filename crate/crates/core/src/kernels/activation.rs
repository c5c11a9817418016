use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// Exact `x·Φ(x)` with the normal CDF, not the tanh approximation.
    Gelu,
    Sigmoid,
}

pub fn activation<T: Real>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Gelu => x.map(gelu),
        Activation::Sigmoid => x.map(sigmoid),
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    // Split by sign so exp never overflows.
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

#[inline]
fn normal_cdf<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * (T::ONE + (x * T::from_f64(core::f64::consts::FRAC_1_SQRT_2)).erf())
}

#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    x * normal_cdf(x)
}

/// d/dx of `x·Φ(x)` = `Φ(x) + x·φ(x)`.
#[inline]
pub fn gelu_derivative<T: Real>(x: T) -> T {
    let pdf = (-(x * x) * T::from_f64(0.5)).exp() * T::from_f64(0.398_942_280_401_432_7);
    normal_cdf(x) + x * pdf
}
