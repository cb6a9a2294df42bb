//! Raster-to-image rendering with logarithmic class scales.
//!
//! The relative scale bins a grid by halving fractions of its own maximum
//! (top color covers (max/2, max], the next (max/4, max/2], and so on),
//! which makes the picture depend only on ratios: rescaling every value by
//! a common factor leaves the image unchanged. The absolute scale bins by
//! fixed thickness breaks instead.

use std::io::Write;

use crate::error::{Error, Result};
use crate::raster::Grid;

pub type Rgb = [u8; 3];

/// Row-major 24-bit RGB image; row 0 is the top (north) row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Image {
        Image {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: Rgb) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// An ordered color ramp (most intense class first) plus the background
/// used for nodata, zeros, and values below the last class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<Rgb>,
    pub background: Rgb,
}

pub const BACKGROUND_GRAY: Rgb = [211, 211, 211];

impl Palette {
    /// Four halving classes: red on top, then yellow, green, blue.
    pub fn relative_default() -> Palette {
        Palette {
            colors: vec![[214, 40, 28], [244, 195, 31], [60, 148, 56], [49, 89, 201]],
            background: BACKGROUND_GRAY,
        }
    }

    /// Six-step heat ramp for absolute thickness classes.
    pub fn absolute_default() -> Palette {
        Palette {
            colors: vec![
                [255, 255, 178],
                [254, 217, 118],
                [254, 178, 76],
                [253, 141, 60],
                [240, 59, 32],
                [189, 0, 38],
            ],
            background: BACKGROUND_GRAY,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.colors.is_empty() {
            return Err(Error::invalid("palette has no colors"));
        }
        if self.colors.len() > 60 {
            return Err(Error::invalid("palette has more than 60 colors"));
        }
        Ok(())
    }
}

/// Default thickness breaks in meters for [`render_absolute`].
pub fn default_absolute_breaks() -> Vec<f64> {
    vec![3.125, 6.25, 12.5, 25.0, 50.0]
}

/// Renders a grid on the halving scale relative to its own maximum.
///
/// With K palette colors, color k covers values in
/// (max * 2^-(k+1), max * 2^-k]; anything at or below max * 2^-K, zero, or
/// nodata gets the background. Threshold tests multiply by exact powers of
/// two, so the binning is driven purely by value/max ratios.
pub fn render_log_relative(grid: &Grid, palette: &Palette) -> Result<Image> {
    palette.validate()?;
    let max = grid
        .max_value()
        .ok_or_else(|| Error::invalid("grid is all nodata"))?;
    if max <= 0.0 {
        return Err(Error::invalid("grid has no positive values to render"));
    }

    let mut image = Image::new(grid.ncols(), grid.nrows());
    for row in 0..grid.nrows() {
        for col in 0..grid.ncols() {
            let v = grid.get(row, col);
            let rgb = if grid.is_nodata(v) || v <= 0.0 {
                palette.background
            } else {
                relative_bin(v, max, palette.colors.len())
                    .map_or(palette.background, |k| palette.colors[k])
            };
            image.set_pixel(col, row, rgb);
        }
    }
    Ok(image)
}

/// Halving bin of `v` against `max`: Some(k) when
/// `v > max * 2^-(k+1)` first holds for k < num_bins, None below all bins.
fn relative_bin(v: f64, max: f64, num_bins: usize) -> Option<usize> {
    let mut scaled = v; // v * 2^(k+1) as k advances
    for k in 0..num_bins {
        scaled *= 2.0;
        if scaled > max {
            return Some(k);
        }
    }
    None
}

/// Renders a grid against fixed, strictly ascending value breaks.
///
/// Bin j holds values in (breaks[j-1], breaks[j]]; values above the last
/// break fall in an overflow bin. Bin j maps to palette color
/// min(j, len - 1). Zeros, negatives, and nodata get the background.
pub fn render_absolute(grid: &Grid, breaks: &[f64], palette: &Palette) -> Result<Image> {
    palette.validate()?;
    if breaks.is_empty() {
        return Err(Error::invalid("need at least one break"));
    }
    if !breaks[0].is_finite() || breaks[0] <= 0.0 {
        return Err(Error::invalid(format!(
            "first break must be positive, got {}",
            breaks[0]
        )));
    }
    for w in breaks.windows(2) {
        if !w[1].is_finite() || w[1] <= w[0] {
            return Err(Error::invalid(format!(
                "breaks must be strictly ascending, got {} after {}",
                w[1], w[0]
            )));
        }
    }

    let mut image = Image::new(grid.ncols(), grid.nrows());
    for row in 0..grid.nrows() {
        for col in 0..grid.ncols() {
            let v = grid.get(row, col);
            let rgb = if grid.is_nodata(v) || v <= 0.0 {
                palette.background
            } else {
                let bin = breaks.iter().position(|b| v <= *b).unwrap_or(breaks.len());
                palette.colors[bin.min(palette.colors.len() - 1)]
            };
            image.set_pixel(col, row, rgb);
        }
    }
    Ok(image)
}

/// Writes binary PPM (P6, 8 bits per channel).
pub fn write_ppm<W: Write>(image: &Image, mut writer: W) -> std::io::Result<()> {
    write!(writer, "P6\n{} {}\n255\n", image.width, image.height)?;
    writer.write_all(&image.pixels)?;
    writer.flush()
}
