#![allow(dead_code)]

use tanet_core::params::{ParamSpecs, ParamStore};
use tanet_core::{Real, Tensor};

/// splitmix64, enough for test data.
pub struct Rng(pub u64);

impl Rng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn tensor<T: Real>(&mut self, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<T> {
        Tensor::from_fn(shape, |_| T::from_f64(self.range(lo, hi)))
    }
}

pub fn store<T: Real>(specs: &ParamSpecs, seed: u64) -> ParamStore<T> {
    ParamStore::init(specs, seed)
}

pub fn set<T: Real>(p: &mut ParamStore<T>, name: &str, dims: [usize; 4], vals: &[f64]) {
    p.set(name, Tensor::from_f64(dims, vals).unwrap()).unwrap();
}

pub fn assert_close<T: Real>(a: &Tensor<T>, b: &Tensor<T>, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    let d = a.max_abs_diff(b).unwrap();
    assert!(d <= tol, "max abs diff {d} > {tol}");
}

pub mod grad_check;
pub mod kernel_cases;
pub mod metrics_oracle;
pub mod oracle;
