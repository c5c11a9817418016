//! Named parameter registry and seeded initialisation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with the given std, resampled outside ±2 std.
    TruncNormal(f64),
    /// Normal with std `sqrt(2 / fan_out)`.
    KaimingFanOut(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Learnable,
    /// Non-learnable state such as batch-norm running statistics.
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    /// Logical extents, 1 to 4 of them (a bias is `[C]`, a conv weight `[O, I, kH, kW]`).
    pub dims: Vec<usize>,
    pub init: Init,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn shape(&self) -> Shape {
        dims_to_shape(&self.dims)
    }
}

/// Left-pads logical extents with ones to a rank-4 shape.
pub fn dims_to_shape(dims: &[usize]) -> Shape {
    let mut s = [1usize; 4];
    let off = 4 - dims.len().min(4);
    for (i, &d) in dims.iter().take(4).enumerate() {
        s[off + i] = d;
    }
    Shape(s)
}

/// Ordered list of parameter declarations produced while a model is being assembled.
#[derive(Clone, Debug, Default)]
pub struct ParamSpecs {
    specs: Vec<ParamSpec>,
}

impl ParamSpecs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn learnable(&mut self, name: impl Into<String>, dims: &[usize], init: Init) -> String {
        self.push(name.into(), dims, init, ParamKind::Learnable)
    }

    pub fn buffer(&mut self, name: impl Into<String>, dims: &[usize], init: Init) -> String {
        self.push(name.into(), dims, init, ParamKind::Buffer)
    }

    fn push(&mut self, name: String, dims: &[usize], init: Init, kind: ParamKind) -> String {
        debug_assert!(
            self.specs.iter().all(|s| s.name != name),
            "duplicate parameter {name}"
        );
        self.specs.push(ParamSpec {
            name: name.clone(),
            dims: dims.to_vec(),
            init,
            kind,
        });
        name
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamSpec> {
        self.specs.iter()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Number of learnable scalars whose name starts with `prefix`.
    pub fn count_learnable(&self, prefix: &str) -> usize {
        self.specs
            .iter()
            .filter(|s| s.kind == ParamKind::Learnable && s.name.starts_with(prefix))
            .map(ParamSpec::numel)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Real> {
    pub value: Tensor<T>,
    pub rank: u8,
    pub kind: ParamKind,
}

impl<T: Real> Param<T> {
    pub fn dims(&self) -> Vec<usize> {
        self.value.shape().0[4 - self.rank as usize..].to_vec()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Real> {
    entries: BTreeMap<String, Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Materialise every declared parameter. Each tensor draws from its own generator
    /// seeded by `seed` and the parameter name, so values do not depend on declaration order.
    pub fn init(specs: &ParamSpecs, seed: u64) -> Self {
        let mut entries = BTreeMap::new();
        for spec in specs.iter() {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ fnv1a(&spec.name));
            let n = spec.numel();
            let data: Vec<T> = match spec.init {
                Init::Zeros => alloc::vec![T::ZERO; n],
                Init::Ones => alloc::vec![T::ONE; n],
                Init::TruncNormal(std) => (0..n)
                    .map(|_| loop {
                        let z = standard_normal(&mut rng);
                        if z.abs() <= 2.0 {
                            break T::from_f64(z * std);
                        }
                    })
                    .collect(),
                Init::KaimingFanOut(fan_out) => {
                    let std = libm::sqrt(2.0 / fan_out.max(1) as f64);
                    (0..n).map(|_| T::from_f64(standard_normal(&mut rng) * std)).collect()
                }
            };
            entries.insert(
                spec.name.clone(),
                Param {
                    value: Tensor::from_vec(spec.shape(), data).expect("spec shape"),
                    rank: spec.dims.len() as u8,
                    kind: spec.kind,
                },
            );
        }
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.value)
    }

    /// Replace a parameter's value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if entry.value.shape() != value.shape() {
            return Err(Error::invalid(
                "ParamStore::set",
                format!(
                    "{name}: shape {:?} does not match {:?}",
                    value.shape(),
                    entry.value.shape()
                ),
            ));
        }
        entry.value = value;
        Ok(())
    }

    /// Insert or overwrite without shape checks (loading from files).
    pub fn insert(&mut self, name: impl Into<String>, param: Param<T>) {
        self.entries.insert(name.into(), param);
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<T>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param<T>)> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Set every learnable tensor whose name starts with `prefix` to zero.
    /// Running statistics are left alone.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (name, p) in self.entries.iter_mut() {
            if p.kind == ParamKind::Learnable && name.starts_with(prefix) {
                p.value.data_mut().fill(T::ZERO);
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            rank: p.rank,
                            kind: p.kind,
                        },
                    )
                })
                .collect(),
        }
    }

    /// First declared parameter that is absent here or has a different shape,
    /// else the first stored tensor that is not declared at all.
    pub fn first_mismatch(&self, specs: &ParamSpecs) -> Option<String> {
        let declared = specs.iter().find(|s| {
            self.entries
                .get(&s.name)
                .is_none_or(|p| p.value.shape() != s.shape() || p.rank as usize != s.dims.len())
        });
        if let Some(s) = declared {
            return Some(s.name.clone());
        }
        if self.entries.len() == specs.len() {
            return None;
        }
        let names: alloc::collections::BTreeSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        self.entries.keys().find(|k| !names.contains(k.as_str())).cloned()
    }
}

/// FNV-1a over the name bytes; mixes parameter identity into the seed.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub(crate) fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Box–Muller; one draw per call.
pub(crate) fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = 1.0 - uniform01(rng);
    let u2 = uniform01(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}
