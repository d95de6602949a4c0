//! 8-bit PNG import/export.
//!
//! Colour inputs are reduced with the luminance weights 0.299 R + 0.587 G +
//! 0.114 B. Binary masks are written as 0/255 and label masks as 0/128/255.

use std::path::Path;

use image::{DynamicImage, GrayImage as Luma8, ImageFormat};

use super::{BinaryMask, Image, LabelMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LABEL_LEVELS: [u8; 3] = [0, 128, 255];

pub fn read_gray<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let dynamic = open(path)?;
    image_from_dynamic(&dynamic).map_err(|e| Error::format(path, e))
}

pub fn decode_gray<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    let dynamic = image::load_from_memory(bytes).map_err(|e| Error::format("<memory>", e))?;
    image_from_dynamic(&dynamic)
}

fn image_from_dynamic<T: Scalar>(dynamic: &DynamicImage) -> Result<Image<T>> {
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    if dynamic.color().has_color() {
        let rgb = dynamic.to_rgb8();
        let scale = T::lit(255.0);
        let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        let pixels = rgb
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (wr * T::from_count(r as usize)
                    + wg * T::from_count(g as usize)
                    + wb * T::from_count(b as usize))
                    / scale
            })
            .collect();
        Ok(Image::from_raw(w, h, pixels))
    } else {
        Image::from_u8(w, h, dynamic.to_luma8().as_raw())
    }
}

pub fn encode_gray<T: Scalar>(img: &Image<T>) -> Result<Vec<u8>> {
    encode_luma(img.width(), img.height(), img.to_u8())
}

pub fn write_gray<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    write_luma(img.width(), img.height(), img.to_u8(), path.as_ref())
}

pub fn encode_mask(mask: &BinaryMask) -> Result<Vec<u8>> {
    encode_luma(mask.width(), mask.height(), mask_bytes(mask))
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_luma(mask.width(), mask.height(), mask_bytes(mask), path.as_ref())
}

/// Samples >= 128 are foreground.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let luma = open(path)?.to_luma8();
    let bits = luma.as_raw().iter().map(|&v| v >= 128).collect();
    BinaryMask::new(luma.width() as usize, luma.height() as usize, bits)
}

pub fn encode_labels(labels: &LabelMask) -> Result<Vec<u8>> {
    encode_luma(labels.width(), labels.height(), label_bytes(labels))
}

pub fn write_labels(labels: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    write_luma(
        labels.width(),
        labels.height(),
        label_bytes(labels),
        path.as_ref(),
    )
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    let luma = open(path)?.to_luma8();
    let labels = luma
        .as_raw()
        .iter()
        .map(|v| {
            LABEL_LEVELS
                .iter()
                .position(|l| l == v)
                .map(|i| i as u8)
                .ok_or_else(|| Error::format(path, format!("sample {v} is not a label level")))
        })
        .collect::<Result<Vec<_>>>()?;
    LabelMask::new(luma.width() as usize, luma.height() as usize, labels)
}

fn mask_bytes(mask: &BinaryMask) -> Vec<u8> {
    mask.bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect()
}

fn label_bytes(labels: &LabelMask) -> Vec<u8> {
    labels
        .labels()
        .iter()
        .map(|&l| LABEL_LEVELS[l as usize])
        .collect()
}

fn open(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory(&bytes).map_err(|e| Error::format(path, e))
}

fn to_luma(width: usize, height: usize, data: Vec<u8>) -> Luma8 {
    Luma8::from_raw(width as u32, height as u32, data).expect("buffer matches dimensions")
}

fn encode_luma(width: usize, height: usize, data: Vec<u8>) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    to_luma(width, height, data)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::format("<memory>", e))?;
    Ok(out.into_inner())
}

fn write_luma(width: usize, height: usize, data: Vec<u8>, path: &Path) -> Result<()> {
    let bytes = encode_luma(width, height, data)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
