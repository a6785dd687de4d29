use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::gray::GrayPlane;
use crate::refine::{bin_radially, fftshift, power_2d};

pub const DEFAULT_SPECTRUM_SIDE: u32 = 224;

/// Dataset-mean power spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSpectrum {
    pub width: usize,
    pub height: usize,
    pub n_images: usize,
    /// Mean of `ln(1 + power)`, zero frequency at `(width/2, height/2)`,
    /// row-major.
    pub log_power: Vec<f64>,
    /// Mean raw power per integer radius, `0..=min(width, height)/2`.
    pub radial: Vec<f64>,
}

struct One {
    log_power: Vec<f64>,
    radial: Vec<f64>,
}

fn spectrum_of(plane: &GrayPlane) -> One {
    let (w, h) = (plane.width(), plane.height());
    let power = power_2d(plane);
    let radial = bin_radially(&power, w, h).bins().to_vec();
    let log_power = fftshift(&power, w, h).into_iter().map(f64::ln_1p).collect();
    One { log_power, radial }
}

/// Mean spectrum over in-memory planes, which must share one size.
pub fn mean_power_spectrum_of(planes: &[GrayPlane]) -> Result<MeanSpectrum, MetricsError> {
    let first = planes
        .first()
        .ok_or_else(|| MetricsError::BadArgument("no images".into()))?;
    let (w, h) = (first.width(), first.height());
    if let Some(p) = planes.iter().find(|p| (p.width(), p.height()) != (w, h)) {
        return Err(MetricsError::BadArgument(format!(
            "mixed image sizes {w}x{h} and {}x{}; enable resizing",
            p.width(),
            p.height()
        )));
    }
    let parts: Vec<One> = planes.par_iter().map(spectrum_of).collect();
    Ok(average(parts, w, h))
}

fn average(parts: Vec<One>, w: usize, h: usize) -> MeanSpectrum {
    let n = parts.len();
    let mut log_power = vec![0.0; w * h];
    let mut radial = vec![0.0; parts[0].radial.len()];
    for p in &parts {
        log_power
            .iter_mut()
            .zip(&p.log_power)
            .for_each(|(a, b)| *a += b);
        radial.iter_mut().zip(&p.radial).for_each(|(a, b)| *a += b);
    }
    log_power.iter_mut().for_each(|v| *v /= n as f64);
    radial.iter_mut().for_each(|v| *v /= n as f64);
    MeanSpectrum {
        width: w,
        height: h,
        n_images: n,
        log_power,
        radial,
    }
}

/// Mean spectrum of image files. With `resize` every image is bilinearly
/// resampled to that square side first; without it all images must match.
pub fn mean_power_spectrum(
    paths: &[PathBuf],
    resize: Option<u32>,
) -> Result<MeanSpectrum, MetricsError> {
    if paths.is_empty() {
        return Err(MetricsError::BadArgument("no images".into()));
    }
    let load = |p: &PathBuf| match resize {
        Some(side) => GrayPlane::open_resized(p, side),
        None => GrayPlane::open(p),
    };
    let first = load(&paths[0])?;
    let (w, h) = (first.width(), first.height());
    let parts: Vec<One> = paths
        .par_iter()
        .map(|p| {
            let plane = load(p)?;
            if (plane.width(), plane.height()) != (w, h) {
                return Err(MetricsError::BadArgument(format!(
                    "{}: size {}x{} differs from {w}x{h}; enable resizing",
                    p.display(),
                    plane.width(),
                    plane.height()
                )));
            }
            Ok(spectrum_of(&plane))
        })
        .collect::<Result<_, _>>()?;
    Ok(average(parts, w, h))
}

impl MeanSpectrum {
    /// Radial profile scaled to unit sum.
    pub fn normalized_radial(&self) -> Vec<f64> {
        let total: f64 = self.radial.iter().sum();
        if total > 0.0 {
            self.radial.iter().map(|v| v / total).collect()
        } else {
            self.radial.clone()
        }
    }

    /// 8-bit grayscale rendering of the log-power map, min-max scaled.
    pub fn to_image(&self) -> GrayImage {
        let (lo, hi) = self
            .log_power
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = if hi > lo { hi - lo } else { 1.0 };
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.log_power[y as usize * self.width + x as usize];
            Luma([((v - lo) / span * 255.0).round() as u8])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), MetricsError> {
        self.to_image()
            .save(path)
            .map_err(|e| MetricsError::BadArgument(format!("{}: {e}", path.display())))
    }
}

/// L2 distance between unit-sum radial profiles of equal length.
pub fn spectral_distance(a: &MeanSpectrum, b: &MeanSpectrum) -> Result<f64, MetricsError> {
    if a.radial.len() != b.radial.len() {
        return Err(MetricsError::DimMismatch(a.radial.len(), b.radial.len()));
    }
    let (pa, pb) = (a.normalized_radial(), b.normalized_radial());
    Ok(pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt())
}
