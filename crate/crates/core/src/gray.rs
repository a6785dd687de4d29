//! Single-channel intensity planes used by every image score.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::RgbImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("decoding {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("encoding png: {0}")]
    Encode(#[source] image::ImageError),
    #[error("buffer of {len} values does not match {width}x{height}")]
    Shape {
        width: usize,
        height: usize,
        len: usize,
    },
}

/// Luma of an 8-bit RGB triple on the [0, 255] scale (ITU-R BT.601 weights).
pub fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
}

/// Row-major grayscale image with real-valued intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayPlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayPlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::Shape {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a plane by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| luma(p[0], p[1], p[2])).collect();
        Self {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    /// Decodes an image file and converts it to luma.
    pub fn open(path: &Path) -> Result<Self, ImageError> {
        Ok(Self::from_rgb(&open_rgb(path)?))
    }

    /// Decodes, bilinearly resamples to `side`×`side`, then converts to luma.
    pub fn open_resized(path: &Path, side: u32) -> Result<Self, ImageError> {
        let img = open_rgb(path)?;
        let img = if img.dimensions() == (side, side) {
            img
        } else {
            image::imageops::resize(&img, side, side, FilterType::Triangle)
        };
        Ok(Self::from_rgb(&img))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

fn open_rgb(path: &Path) -> Result<RgbImage, ImageError> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|source| ImageError::Decode {
            path: path.to_path_buf(),
            source,
        })
}

/// Encodes an RGB image as PNG bytes.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ImageError> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(ImageError::Encode)?;
    Ok(out.into_inner())
}

/// Decodes PNG bytes into RGB.
pub fn decode_png(bytes: &[u8], origin: &Path) -> Result<RgbImage, ImageError> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map(|img| img.to_rgb8())
        .map_err(|source| ImageError::Decode {
            path: origin.to_path_buf(),
            source,
        })
}
