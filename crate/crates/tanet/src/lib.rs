//! File formats, image IO and the command implementations around
//! [`tanet_core`].

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod image_io;
pub mod manifest;
pub mod selftest;

pub use error::{Error, Result};
