//! Synthetic benchmark: smoothed Gaussian noise images with additive,
//! spatially structured condition effects.
//!
//! Effect geometry, expressed as fractions of the image size so a 100×100
//! image gets the reference layout exactly:
//!
//! * a central square of side `0.2·size`, centered;
//! * type A adds two corner squares of side `0.14·size` at top-left and
//!   bottom-right, `0.1·size` from the borders;
//! * type B mirrors them to top-right and bottom-left.
//!
//! Pixels are indexed row-major, matching [`crate::graph::build_grid_graph`].

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RsmError};
use crate::seed;
use crate::types::{BinaryEffectMap, Dataset, Label, Sample};

pub const MIN_SIZE: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EffectType {
    A,
    B,
}

/// How the smoothing kernel is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// Kernel sums to one: smoothed std is about `sigma_n / (2√π·smooth_sigma)`.
    UnitSum,
    /// Kernel has unit energy: smoothed std stays at `sigma_n`, so effect
    /// sizes measured in `sigma_n` are measured against the image noise.
    UnitVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub sigma_n: f64,
    pub smooth_sigma: f64,
    /// Added intensity on affected pixels, in multiples of `sigma_n`.
    pub effect_size: f64,
    pub n_controls: usize,
    pub n_cases: usize,
    pub noise_scaling: NoiseScaling,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 100,
            height: 100,
            sigma_n: 50.0,
            smooth_sigma: 2.5,
            effect_size: 1.4,
            n_controls: 100,
            n_cases: 100,
            noise_scaling: NoiseScaling::UnitVariance,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_SIZE || self.height < MIN_SIZE {
            return Err(RsmError::Config(format!(
                "image must be at least {MIN_SIZE}x{MIN_SIZE}, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.sigma_n > 0.0 && self.smooth_sigma > 0.0) {
            return Err(RsmError::Config("sigma_n and smooth_sigma must be positive".into()));
        }
        if !(self.effect_size >= 0.0 && self.effect_size.is_finite()) {
            return Err(RsmError::Config("effect_size must be finite and nonnegative".into()));
        }
        if self.n_controls == 0 || self.n_cases == 0 {
            return Err(RsmError::Config("need at least one control and one case".into()));
        }
        if self.n_cases % 2 != 0 {
            return Err(RsmError::Config(format!(
                "n_cases = {} must be even to split across both effect types",
                self.n_cases
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectMask {
    pub mask: BinaryEffectMap,
    pub effect_type: EffectType,
    pub width: usize,
    pub height: usize,
}

impl EffectMask {
    pub fn pixel_count(&self) -> usize {
        self.mask.count()
    }
}

fn scaled(size: usize, fraction: f64) -> usize {
    (size as f64 * fraction).round() as usize
}

/// Half-open pixel ranges `(rows, cols)` of the squares making up a mask.
fn squares(effect_type: EffectType, width: usize, height: usize) -> [(std::ops::Range<usize>, std::ops::Range<usize>); 3] {
    let axis = |size: usize| {
        let center = scaled(size, 0.2);
        let start = (size - center) / 2;
        let corner = scaled(size, 0.14);
        let offset = scaled(size, 0.1);
        (
            start..start + center,
            offset..offset + corner,
            size - offset - corner..size - offset,
        )
    };
    let (rc, r_lo, r_hi) = axis(height);
    let (cc, c_lo, c_hi) = axis(width);
    match effect_type {
        EffectType::A => [(rc, cc), (r_lo, c_lo), (r_hi, c_hi)],
        EffectType::B => [(rc, cc), (r_lo, c_hi), (r_hi, c_lo)],
    }
}

pub fn effect_mask(effect_type: EffectType, width: usize, height: usize) -> Result<EffectMask> {
    if width < MIN_SIZE || height < MIN_SIZE {
        return Err(RsmError::Config(format!(
            "effect geometry needs at least {MIN_SIZE}x{MIN_SIZE} pixels, got {width}x{height}"
        )));
    }
    let mut mask = vec![false; width * height];
    for (rows, cols) in squares(effect_type, width, height) {
        for r in rows {
            for c in cols.clone() {
                mask[r * width + c] = true;
            }
        }
    }
    Ok(EffectMask {
        mask: BinaryEffectMap::new(mask),
        effect_type,
        width,
        height,
    })
}

/// Normalized 1-D Gaussian kernel truncated at 4σ.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

// Half-sample symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1.
fn reflect(mut i: isize, n: isize) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable convolution of a row-major image with a symmetric 1-D kernel
/// along both axes, reflect padding.
pub fn convolve_separable(image: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; image.len()];
    for r in 0..height {
        let row = &image[r * width..(r + 1) * width];
        for c in 0..width {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(c as isize + t as isize - radius, width as isize)];
            }
            tmp[r * width + c] = acc;
        }
    }
    let mut out = vec![0.0; image.len()];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let rr = reflect(r as isize + t as isize - radius, height as isize);
                acc += kv * tmp[rr * width + c];
            }
            out[r * width + c] = acc;
        }
    }
    out
}

fn noise_field(config: &SynthConfig, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    let white: Vec<f64> = (0..config.dim())
        .map(|_| config.sigma_n * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let kernel = gaussian_kernel(config.smooth_sigma);
    let mut smooth = convolve_separable(&white, config.width, config.height, &kernel);
    if config.noise_scaling == NoiseScaling::UnitVariance {
        // 2-D kernel energy is the square of the 1-D energy.
        let energy: f64 = kernel.iter().map(|v| v * v).sum();
        smooth.iter_mut().for_each(|v| *v /= energy);
    }
    smooth
}

pub fn generate_control_image(config: &SynthConfig, seed: u64) -> Sample {
    Sample {
        measurements: noise_field(config, seed),
        label: Label::Control,
    }
}

/// Control image for `seed` plus `effect_size·sigma_n` on the mask pixels.
pub fn generate_case_image(config: &SynthConfig, effect_type: EffectType, seed: u64) -> Result<Sample> {
    let mask = effect_mask(effect_type, config.width, config.height)?;
    let shift = config.effect_size * config.sigma_n;
    let mut measurements = noise_field(config, seed);
    for (v, &m) in measurements.iter_mut().zip(&mask.mask.detections) {
        if m {
            *v += shift;
        }
    }
    Ok(Sample {
        measurements,
        label: Label::Case,
    })
}

/// A generated dataset with per-sample ground truth.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub dataset: Dataset,
    /// `None` for controls.
    pub effect_types: Vec<Option<EffectType>>,
    pub mask_a: EffectMask,
    pub mask_b: EffectMask,
}

impl SynthDataset {
    pub fn truth(&self, i: usize) -> BinaryEffectMap {
        match self.effect_types[i] {
            None => BinaryEffectMap::zeros(self.dataset.dim()),
            Some(EffectType::A) => self.mask_a.mask.clone(),
            Some(EffectType::B) => self.mask_b.mask.clone(),
        }
    }
}

/// Per-sample seed; identical across effect sizes so the noise is shared.
pub fn sample_seed(config: &SynthConfig, index: usize) -> u64 {
    seed::derive(config.seed, &[seed::tag::SAMPLE, index as u64])
}

/// Controls first, then `n_cases/2` type-A cases, then type-B cases.
pub fn generate_dataset(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let half = config.n_cases / 2;
    let effect_types: Vec<Option<EffectType>> = (0..config.n_controls)
        .map(|_| None)
        .chain((0..half).map(|_| Some(EffectType::A)))
        .chain((0..half).map(|_| Some(EffectType::B)))
        .collect();
    let samples = effect_types
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let s = sample_seed(config, i);
            match t {
                None => Ok(generate_control_image(config, s)),
                Some(t) => generate_case_image(config, *t, s),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        dataset: Dataset::new(samples)?,
        effect_types,
        mask_a: effect_mask(EffectType::A, config.width, config.height)?,
        mask_b: effect_mask(EffectType::B, config.width, config.height)?,
    })
}
