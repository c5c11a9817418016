//! 8-bit raster input and output (PNG, PGM/PPM).

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, GrayImage, ImageEncoder, ImageReader};
use tanet_core::data::RgbdSample;
use tanet_core::kernels::{bilinear_resize, nearest_resize};
use tanet_core::Tensor;

use crate::error::{Error, Result};

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|source| Error::Image { path: path.into(), source })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage(path.into()));
    }
    Ok(img)
}

/// A colour image as a (1, 3, H, W) tensor in [0, 1]. Grey images are widened.
pub fn load_rgb(path: &Path) -> Result<Tensor<f32>> {
    let img = decode(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

/// A single-channel image as a (1, 1, H, W) tensor in [0, 1]. Colour input is
/// reduced to luma.
pub fn load_gray(path: &Path) -> Result<Tensor<f32>> {
    let img = decode(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(Tensor::from_vec([1, 1, h, w], data)?)
}

/// Raw 8-bit grey levels, for evaluation where maps are compared as stored.
pub fn load_gray_u8(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = decode(path)?.to_luma8();
    Ok((img.height() as usize, img.width() as usize, img.into_raw()))
}

/// Quantize a [0, 1] value to 8 bits; exact halves round up.
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) as f64 * 255.0).round() as u8
}

/// Save the first channel of a (1, C, H, W) map as an 8-bit grey image. A
/// `.pgm` extension writes binary PGM, anything else goes by extension.
pub fn save_gray(path: &Path, map: &Tensor<f32>) -> Result<()> {
    let s = map.shape();
    let mut img = GrayImage::new(s.w() as u32, s.h() as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        px[0] = to_u8(map.at(0, 0, y as usize, x as usize));
    }
    save_gray8(path, &img)
}

pub fn save_gray8(path: &Path, img: &GrayImage) -> Result<()> {
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        PnmEncoder::new(BufWriter::new(f))
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::L8)
            .map_err(|source| Error::Image { path: path.into(), source })
    } else {
        img.save(path).map_err(|source| Error::Image { path: path.into(), source })
    }
}

/// Where one sample lives on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplePaths {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub mask: PathBuf,
}

/// A sample read from disk, resized to `size`×`size`.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub sample: RgbdSample<f32>,
    pub paths: SamplePaths,
    /// Extents of the RGB file before resizing.
    pub original: (usize, usize),
}

/// Decode, resize (bilinear for images, nearest for the mask) and assemble.
/// The edge mask is derived at the target resolution.
pub fn load_sample(paths: &SamplePaths, size: usize) -> Result<LoadedSample> {
    let (rgb, depth, original) = load_inputs(&paths.rgb, &paths.depth, size)?;
    let mask = nearest_resize(&load_gray(&paths.mask)?, size, size)?;
    let name = paths
        .rgb
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(LoadedSample {
        sample: RgbdSample::assemble(name, rgb, &depth, &mask)?,
        paths: paths.clone(),
        original,
    })
}

/// Colour and single-channel depth, both resized to `size`×`size`, plus the
/// colour image's original (height, width).
pub fn load_inputs(rgb: &Path, depth: &Path, size: usize) -> Result<(Tensor<f32>, Tensor<f32>, (usize, usize))> {
    if size == 0 {
        return Err(tanet_core::Error::EmptyExtent { op: "load_sample", dim: "target size" }.into());
    }
    let rgb_t = load_rgb(rgb)?;
    let original = (rgb_t.shape().h(), rgb_t.shape().w());
    let depth_t = load_gray(depth)?;
    Ok((
        bilinear_resize(&rgb_t, size, size)?,
        bilinear_resize(&depth_t, size, size)?,
        original,
    ))
}
