#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{GrayImage, Luma, Rgb, RgbImage};

pub fn write_rgb(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    RgbImage::from_fn(w, h, |x, y| Rgb(f(x, y))).save(path).unwrap();
}

pub fn write_gray(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> u8) {
    GrayImage::from_fn(w, h, |x, y| Luma([f(x, y)])).save(path).unwrap();
}

/// A textured colour image and a depth ramp, `w`×`h`, named `name`.
pub fn write_pair(dir: &Path, name: &str, w: u32, h: u32) -> (PathBuf, PathBuf) {
    let rgb = dir.join(format!("{name}_rgb.png"));
    let depth = dir.join(format!("{name}_depth.png"));
    write_rgb(&rgb, w, h, |x, y| [(x * 7 % 256) as u8, (y * 3 % 256) as u8, ((x + y) % 256) as u8]);
    write_gray(&depth, w, h, |x, y| ((x + 2 * y) * 255 / (w + 2 * h)) as u8);
    (rgb, depth)
}

pub fn tanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tanet")).args(args).output().unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}
