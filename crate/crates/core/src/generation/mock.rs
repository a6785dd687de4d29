//! Deterministic procedural stand-in for a diffusion backend.
//!
//! Images are drawn from four families keyed by a hash of the prompt text and
//! seed: flat color, sinusoidal gratings, bilinear value noise and
//! checkerboards. Together they cover both tails of the frequency cutoff and
//! patch variance scores.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use base64::Engine;
use image::{Rgb, RgbImage};

use super::backend::{
    BackendError, GenerateRequest, GenerateResponse, GeneratedImage, GenerationBackend,
};
use crate::gray::encode_png;
use crate::hash::{fnv1a, mix64, UnitStream};

type FlagFn = dyn Fn(&str, u64) -> bool + Send + Sync;

/// Which generations the mock reports as flagged.
#[derive(Clone)]
pub enum FlagSchedule {
    Never,
    OddSeeds,
    /// Odd seeds of prompts containing any of these whole words.
    WordsOnOddSeeds(Vec<String>),
    /// Independent flag with the given probability, keyed by prompt and seed.
    Rate(f64),
    Custom(Arc<FlagFn>),
}

impl FlagSchedule {
    pub fn custom(f: impl Fn(&str, u64) -> bool + Send + Sync + 'static) -> Self {
        FlagSchedule::Custom(Arc::new(f))
    }

    pub fn is_flagged(&self, prompt: &str, seed: u64) -> bool {
        match self {
            FlagSchedule::Never => false,
            FlagSchedule::OddSeeds => seed % 2 == 1,
            FlagSchedule::WordsOnOddSeeds(words) => {
                seed % 2 == 1
                    && prompt
                        .split_whitespace()
                        .any(|w| words.iter().any(|x| x == w))
            }
            FlagSchedule::Rate(p) => {
                let u = UnitStream::new(fnv1a(prompt.as_bytes()) ^ mix64(seed)).next_unit();
                u < *p
            }
            FlagSchedule::Custom(f) => f(prompt, seed),
        }
    }
}

impl fmt::Debug for FlagSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlagSchedule::Never => f.write_str("Never"),
            FlagSchedule::OddSeeds => f.write_str("OddSeeds"),
            FlagSchedule::WordsOnOddSeeds(w) => f.debug_tuple("WordsOnOddSeeds").field(w).finish(),
            FlagSchedule::Rate(p) => f.debug_tuple("Rate").field(p).finish(),
            FlagSchedule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Parses `never`, `odd-seeds`, `rate:<p>` or `words:<w1>,<w2>`.
impl FromStr for FlagSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "never" => return Ok(FlagSchedule::Never),
            "odd-seeds" => return Ok(FlagSchedule::OddSeeds),
            _ => {}
        }
        if let Some(p) = s.strip_prefix("rate:") {
            let p: f64 = p.parse().map_err(|_| format!("bad rate `{p}`"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("rate {p} outside [0, 1]"));
            }
            return Ok(FlagSchedule::Rate(p));
        }
        if let Some(words) = s.strip_prefix("words:") {
            return Ok(FlagSchedule::WordsOnOddSeeds(
                words.split(',').map(str::to_string).collect(),
            ));
        }
        Err(format!("unknown flag schedule `{s}`"))
    }
}

#[derive(Clone, Debug)]
pub struct MockBackend {
    schedule: FlagSchedule,
}

impl MockBackend {
    pub fn new(schedule: FlagSchedule) -> Self {
        Self { schedule }
    }

    pub fn render(prompt: &str, seed: u64, width: u32, height: u32) -> RgbImage {
        let key = fnv1a(prompt.as_bytes()) ^ mix64(seed);
        let mut rng = UnitStream::new(key);
        let base = [rng.next_unit(), rng.next_unit(), rng.next_unit()];
        let accent = [rng.next_unit(), rng.next_unit(), rng.next_unit()];
        let family = rng.next_unit();
        let (w, h) = (f64::from(width), f64::from(height));
        let paint = |t: f64| -> Rgb<u8> {
            let t = t.clamp(0.0, 1.0);
            let c = |i: usize| ((base[i] * (1.0 - t) + accent[i] * t) * 255.0).round() as u8;
            Rgb([c(0), c(1), c(2)])
        };

        if family < 0.10 {
            RgbImage::from_pixel(width, height, paint(0.0))
        } else if family < 0.40 {
            let cycles = 2.0 + (rng.next_unit() * (w.min(h) / 4.0 - 2.0)).floor();
            let angle = rng.next_unit() * PI;
            let (fx, fy) = (angle.cos() * cycles / w, angle.sin() * cycles / h);
            RgbImage::from_fn(width, height, |x, y| {
                let phase = 2.0 * PI * (fx * f64::from(x) + fy * f64::from(y));
                paint(0.5 + 0.5 * phase.cos())
            })
        } else if family < 0.75 {
            let cell = 2 + (rng.next_unit() * 30.0) as u32;
            let gw = width / cell + 2;
            let gh = height / cell + 2;
            let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.next_unit()).collect();
            let at = |gx: u32, gy: u32| lattice[(gy * gw + gx) as usize];
            RgbImage::from_fn(width, height, |x, y| {
                let (gx, gy) = (x / cell, y / cell);
                let tx = f64::from(x % cell) / f64::from(cell);
                let ty = f64::from(y % cell) / f64::from(cell);
                let top = at(gx, gy) * (1.0 - tx) + at(gx + 1, gy) * tx;
                let bottom = at(gx, gy + 1) * (1.0 - tx) + at(gx + 1, gy + 1) * tx;
                paint(top * (1.0 - ty) + bottom * ty)
            })
        } else {
            let cell = 1 + (rng.next_unit() * 40.0) as u32;
            RgbImage::from_fn(width, height, |x, y| {
                paint(if (x / cell + y / cell).is_multiple_of(2) {
                    0.0
                } else {
                    1.0
                })
            })
        }
    }
}

impl GenerationBackend for MockBackend {
    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, BackendError> {
        if request.width == 0 || request.height == 0 {
            return Err(BackendError::Protocol("zero image size".into()));
        }
        let engine = base64::engine::general_purpose::STANDARD;
        let results = request
            .seeds
            .iter()
            .map(|&seed| {
                let img = Self::render(&request.prompt_text, seed, request.width, request.height);
                let png = encode_png(&img).map_err(|e| BackendError::Protocol(e.to_string()))?;
                Ok(GeneratedImage {
                    seed,
                    png_base64: engine.encode(png),
                    nsfw_flagged: self.schedule.is_flagged(&request.prompt_text, seed),
                })
            })
            .collect::<Result<_, BackendError>>()?;
        Ok(GenerateResponse { results })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_pixels() {
        let a = MockBackend::render("woven texture", 7, 64, 64);
        let b = MockBackend::render("woven texture", 7, 64, 64);
        assert_eq!(a, b);
        assert_ne!(a, MockBackend::render("woven texture", 8, 64, 64));
    }

    #[test]
    fn schedule_parsing() {
        assert!(matches!("never".parse(), Ok(FlagSchedule::Never)));
        assert!(matches!("odd-seeds".parse(), Ok(FlagSchedule::OddSeeds)));
        assert!(matches!("rate:0.25".parse(), Ok(FlagSchedule::Rate(p)) if p == 0.25));
        assert!("rate:2".parse::<FlagSchedule>().is_err());
        let s: FlagSchedule = "words:paisley,veined".parse().unwrap();
        assert!(s.is_flagged("paisley texture", 3));
        assert!(!s.is_flagged("paisley texture", 4));
        assert!(!s.is_flagged("woven texture", 3));
    }

    #[test]
    fn flagged_results_keep_pixels() {
        let backend = MockBackend::new(FlagSchedule::OddSeeds);
        let resp = backend
            .generate(&GenerateRequest {
                prompt_text: "woven texture".into(),
                seeds: vec![1, 2],
                width: 16,
                height: 16,
            })
            .unwrap();
        assert!(resp.results[0].nsfw_flagged);
        assert!(!resp.results[1].nsfw_flagged);
        assert!(resp.results.iter().all(|r| !r.png_base64.is_empty()));
    }
}
