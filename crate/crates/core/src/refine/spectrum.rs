//! 2-D Fourier power spectra and the radial frequency cutoff.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::ScoreError;
use crate::gray::GrayPlane;

/// Signed frequency of unshifted DFT index `i` for a transform of length `n`.
///
/// Matches the usual `fftfreq` convention: for even `n` the Nyquist index maps
/// to `-n/2`.
pub fn signed_freq(i: usize, n: usize) -> i64 {
    ((i + n / 2) % n) as i64 - (n / 2) as i64
}

/// Largest radial bin for an image of the given size.
pub fn k_max(width: usize, height: usize) -> usize {
    width.min(height) / 2
}

/// Radial bin of a frequency pair. Components beyond `k_max` (the corners of
/// the frequency rectangle) are folded into the last bin so the bins carry
/// the full spectral energy.
pub fn radial_bin(fy: i64, fx: i64, k_max: usize) -> usize {
    let r = ((fy * fy + fx * fx) as f64).sqrt();
    (r.round() as usize).min(k_max)
}

/// Unnormalized squared DFT magnitudes, row-major, zero frequency at index 0.
pub fn power_2d(plane: &GrayPlane) -> Vec<f64> {
    let (w, h) = (plane.width(), plane.height());
    let mut planner = FftPlanner::<f64>::new();

    let mut rows: Vec<Complex<f64>> = plane.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(w).process(&mut rows);

    // Transpose so columns become contiguous.
    let mut cols = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            cols[x * h + y] = rows[y * w + x];
        }
    }
    planner.plan_fft_forward(h).process(&mut cols);

    let mut power = vec![0.0; w * h];
    for x in 0..w {
        for y in 0..h {
            power[y * w + x] = cols[x * h + y].norm_sqr();
        }
    }
    power
}

/// Moves the zero frequency of a row-major `width`×`height` map to
/// `(width/2, height/2)`.
pub fn fftshift(values: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        let sy = (y + height / 2) % height;
        for x in 0..width {
            let sx = (x + width / 2) % width;
            out[sy * width + sx] = values[y * width + x];
        }
    }
    out
}

/// Spectral energy binned by integer frequency radius, `k = 0..=k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    bins: Vec<f64>,
}

impl PowerSpectrum {
    pub fn from_bins(bins: Vec<f64>) -> Self {
        Self { bins }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn k_max(&self) -> usize {
        self.bins.len().saturating_sub(1)
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }
}

/// Bins a row-major unshifted power map by radius.
pub fn bin_radially(power: &[f64], width: usize, height: usize) -> PowerSpectrum {
    let kmax = k_max(width, height);
    let mut bins = vec![0.0; kmax + 1];
    for y in 0..height {
        let fy = signed_freq(y, height);
        for x in 0..width {
            let fx = signed_freq(x, width);
            bins[radial_bin(fy, fx, kmax)] += power[y * width + x];
        }
    }
    PowerSpectrum { bins }
}

pub fn radial_power_spectrum(plane: &GrayPlane) -> Result<PowerSpectrum, ScoreError> {
    let (w, h) = (plane.width(), plane.height());
    if w < 2 || h < 2 {
        return Err(ScoreError::TooSmall {
            width: w,
            height: h,
            min: 2,
        });
    }
    Ok(bin_radially(&power_2d(plane), w, h))
}

/// Smallest bin `c` whose cumulative energy reaches half of the total.
pub fn frequency_cutoff(spectrum: &PowerSpectrum) -> Result<u32, ScoreError> {
    let total = spectrum.total();
    if total.is_nan() || total <= 0.0 {
        return Err(ScoreError::ZeroEnergy);
    }
    let half = 0.5 * total;
    let mut acc = 0.0;
    for (k, &p) in spectrum.bins.iter().enumerate() {
        acc += p;
        if acc >= half {
            return Ok(k as u32);
        }
    }
    // The running sum ends at exactly `total` (same summation order).
    Ok(spectrum.k_max() as u32)
}
