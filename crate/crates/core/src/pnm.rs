//! PGM/PPM export of projected rasters and import of external saliency maps.

use std::path::Path;

use std::io::Write;

use image::ImageFormat;

use crate::grid::Grid;
use crate::{Error, Result};

const MAX_16: f64 = u16::MAX as f64;

/// Binary (P6) 8-bit color image.
pub fn write_ppm(texture: &Grid<[u8; 3]>, path: &Path) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", texture.width(), texture.height()).into_bytes();
    bytes.extend(texture.as_slice().iter().flatten());
    write_file(path, &bytes)
}

/// Writes a 16-bit PGM, mapping `[0, 1]` onto `0..=65535` (values outside
/// the range are clamped).
pub fn write_pgm16_unit(raster: &Grid<f64>, path: &Path) -> Result<()> {
    let data = raster
        .as_slice()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * MAX_16).round() as u16)
        .collect();
    write_pgm16(raster.width(), raster.height(), data, path)
}

/// Writes a 16-bit PGM with `max` mapped to full scale.
pub fn write_pgm16_scaled(raster: &Grid<f64>, max: f64, path: &Path) -> Result<()> {
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    write_pgm16_unit(&raster.map(|v| v * scale), path)
}

/// Binary (P5) PGM with maxval 65535; samples are big-endian.
fn write_pgm16(width: usize, height: usize, data: Vec<u16>, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    bytes.extend(data.iter().flat_map(|v| v.to_be_bytes()));
    write_file(path, &bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Reads a grayscale PGM (8- or 16-bit) as values in `[0, 1]`.
pub fn read_pgm_unit(path: &Path) -> Result<Grid<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| v as f64 / MAX_16).collect();
    Ok(Grid::from_vec(w, h, data))
}
