//! Image-domain noise simulation: clean intensity plus independent quantum
//! and electronic Gaussian terms per pixel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HaruError, Result};
use crate::image::{check_same_dims, Image};
use crate::volume_io::{Plane, Slice};

/// Generator recorded in manifests so corpora can be regenerated elsewhere.
pub const RNG_NAME: &str = "chacha8-stream/ziggurat-normal";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    /// Std. dev. of the quantum term, normalized intensity units.
    pub sigma_q: f64,
    /// Std. dev. of the electronic term.
    pub sigma_e: f64,
    pub seed: u64,
    pub clip: bool,
    /// Per-slice relative sigma jitter; `0` keeps sigmas fixed. With `j > 0`
    /// both sigmas are scaled by a factor drawn uniformly from `[1-j, 1+j]`.
    pub jitter: f64,
}

impl NoiseParams {
    pub const DEFAULT_SIGMA_Q: f64 = 0.04;
    pub const DEFAULT_SIGMA_E: f64 = 0.02;

    pub fn new(sigma_q: f64, sigma_e: f64, seed: u64, clip: bool) -> Result<Self> {
        Self {
            sigma_q,
            sigma_e,
            seed,
            clip,
            jitter: 0.0,
        }
        .validated()
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self> {
        self.jitter = jitter;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.sigma_q) || !ok(self.sigma_e) {
            return Err(HaruError::Config(format!(
                "noise sigmas must be finite and >= 0 (sigma_q={}, sigma_e={})",
                self.sigma_q, self.sigma_e
            )));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(HaruError::Config(format!(
                "sigma jitter must lie in [0, 1), got {}",
                self.jitter
            )));
        }
        Ok(self)
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            sigma_q: Self::DEFAULT_SIGMA_Q,
            sigma_e: Self::DEFAULT_SIGMA_E,
            seed: 0,
            clip: true,
            jitter: 0.0,
        }
    }
}

/// Substream id for a slice: FNV-1a over its identity.
pub fn slice_stream(source_id: &str, plane: Plane, index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(source_id.as_bytes());
    eat(&[0xff, plane as u8]);
    eat(&(index as u64).to_le_bytes());
    h
}

/// Adds noise drawn from substream `stream` of the parameter seed.
pub fn add_noise_image(clean: &Image<f32>, p: &NoiseParams, stream: u64) -> Image<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(stream);
    let scale = if p.jitter > 0.0 {
        1.0 + p.jitter * rng.random_range(-1.0..=1.0)
    } else {
        1.0
    };
    let (sq, se) = (p.sigma_q * scale, p.sigma_e * scale);
    let mut out = clean.clone();
    for v in out.as_mut_slice() {
        let psi_q: f64 = rng.sample::<f64, _>(StandardNormal) * sq;
        let psi_e: f64 = rng.sample::<f64, _>(StandardNormal) * se;
        let mut noisy = *v as f64 + psi_q + psi_e;
        if p.clip {
            noisy = noisy.clamp(0.0, 1.0);
        }
        *v = noisy as f32;
    }
    out
}

/// Noisy copy of `clean`; the substream is derived from the slice identity so
/// slices of a corpus receive independent noise.
pub fn add_noise(clean: &Slice, p: &NoiseParams) -> Slice {
    let stream = slice_stream(&clean.source_id, clean.plane, clean.index);
    Slice {
        pixels: add_noise_image(&clean.pixels, p, stream),
        plane: clean.plane,
        index: clean.index,
        source_id: clean.source_id.clone(),
    }
}

/// Sample mean and unbiased sample variance of `noisy - clean`.
pub fn measure_residual_stats(noisy: &Image<f32>, clean: &Image<f32>) -> Result<(f64, f64)> {
    check_same_dims(noisy, clean)?;
    let n = noisy.len();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let diffs = noisy
        .as_slice()
        .iter()
        .zip(clean.as_slice())
        .map(|(&a, &b)| a as f64 - b as f64);
    let mean = diffs.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = diffs.map(|d| (d - mean) * (d - mean)).sum();
    Ok((mean, ss / (n - 1) as f64))
}
