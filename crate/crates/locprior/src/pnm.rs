//! Binary PPM (P6, 8-bit) images and PGM heatmaps.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageDecoder, ImageEncoder};
use locprior_core::{Image, Tensor};

use crate::error::{Error, Result};

pub fn encode_ppm(img: &Image) -> std::result::Result<Vec<u8>, String> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_bytes(), img.width() as u32, img.height() as u32, ExtendedColorType::Rgb8)
        .map_err(|e| e.to_string())?;
    Ok(out)
}

/// Accepts only binary 8-bit pixmaps.
pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    if !bytes.starts_with(b"P6") {
        return Err("not a binary PPM (expected magic P6)".into());
    }
    let dec = PnmDecoder::new(Cursor::new(bytes)).map_err(|e| format!("malformed PPM: {e}"))?;
    if dec.color_type() != ColorType::Rgb8 {
        return Err(format!("unsupported PPM sample type {:?}, expected 8-bit RGB", dec.color_type()));
    }
    let (w, h) = dec.dimensions();
    let mut buf = vec![0u8; dec.total_bytes() as usize];
    dec.read_image(&mut buf).map_err(|e| format!("malformed PPM: {e}"))?;
    Image::new(w as usize, h as usize, buf).map_err(|e| e.to_string())
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let bytes = encode_ppm(img).map_err(|m| Error::format(path, m))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|m| Error::format(path, m))
}

/// Min-max scales a single-channel map to 0..=255; a constant map is all 0.
pub fn heatmap_bytes(map: &Tensor) -> Vec<u8> {
    let (lo, hi) = (map.min(), map.max());
    let span = hi - lo;
    map.data()
        .iter()
        .map(|&v| if span > 0.0 { (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect()
}

/// Writes the first channel of `map` as a binary PGM.
pub fn write_pgm_heatmap(path: &Path, map: &Tensor) -> Result<()> {
    let plane = map.channel_map(0)?;
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&heatmap_bytes(&plane), plane.width() as u32, plane.height() as u32, ExtendedColorType::L8)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a binary 8-bit PGM as `(width, height, bytes)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::format(path, "not a binary PGM (expected magic P5)"));
    }
    let dec = PnmDecoder::new(Cursor::new(&bytes)).map_err(|e| Error::format(path, e.to_string()))?;
    if dec.color_type() != ColorType::L8 {
        return Err(Error::format(path, "expected 8-bit samples"));
    }
    let (w, h) = dec.dimensions();
    let mut buf = vec![0u8; dec.total_bytes() as usize];
    dec.read_image(&mut buf).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((w as usize, h as usize, buf))
}
