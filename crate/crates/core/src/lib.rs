#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod kernels;
pub mod real;
pub mod tensor;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{Shape, Tensor};
pub mod graph;
pub mod nn;
pub mod params;
pub mod attention;
pub mod config;
pub mod depth_encoder;
pub mod rgb_encoder;
pub mod cmffm;
pub mod decoder;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod data;
pub mod train;
