//! Foreground tissue segmentation: 2-means on non-zero intensities (M0),
//! 5x5 dilation (M1), then iterative hole filling with growing closing
//! kernels (Mf).

use crate::error::{HaruError, Result};
use crate::image::Image;
use crate::morphology::{close_square, count_interior_holes, dilate_square, interior_holes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MaskStage {
    M0,
    M1,
    Mf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    pub bits: Image<bool>,
    pub stage: MaskStage,
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.bits.as_slice().iter().filter(|&&b| b).count()
    }

    /// Pixelwise `self ⊆ other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.same_dims(&other.bits)
            && self
                .bits
                .as_slice()
                .iter()
                .zip(other.bits.as_slice())
                .all(|(&a, &b)| !a || b)
    }

    fn expect_stage(&self, stage: MaskStage) -> Result<()> {
        if self.stage != stage {
            return Err(HaruError::Invalid(format!(
                "expected a {stage:?} mask, got {:?}",
                self.stage
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Center-shift threshold on the 0-255 intensity scale.
    pub epsilon: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 2,
            max_iters: 100,
            epsilon: 0.2,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k != 2 || self.max_iters == 0 || !(self.epsilon > 0.0) {
            return Err(HaruError::Config(format!(
                "k-means requires k == 2, max_iters >= 1 and epsilon > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FillConfig {
    pub initial_kernel: usize,
    pub kernel_step: usize,
    pub max_iters: usize,
}

impl Default for FillConfig {
    fn default() -> Self {
        FillConfig {
            initial_kernel: 15,
            kernel_step: 5,
            max_iters: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SegmentationConfig {
    pub kmeans: KMeansConfig,
    pub fill: FillConfig,
}

pub const DILATION_SIZE: usize = 5;

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Converged `(low, high)` centers, or `None` when clustering degenerates.
pub fn two_means(values: &[f64], cfg: &KMeansConfig) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (percentile(&sorted, 0.25), percentile(&sorted, 0.75));
    if lo >= hi {
        return None;
    }
    for _ in 0..cfg.max_iters {
        let (mut sum_lo, mut n_lo, mut sum_hi, mut n_hi) = (0.0, 0usize, 0.0, 0usize);
        for &v in values {
            if (v - hi).abs() < (v - lo).abs() {
                sum_hi += v;
                n_hi += 1;
            } else {
                sum_lo += v;
                n_lo += 1;
            }
        }
        if n_lo == 0 || n_hi == 0 {
            return None;
        }
        let (new_lo, new_hi) = (sum_lo / n_lo as f64, sum_hi / n_hi as f64);
        let done = (new_lo - lo).abs() < cfg.epsilon && (new_hi - hi).abs() < cfg.epsilon;
        lo = new_lo;
        hi = new_hi;
        if done {
            break;
        }
    }
    if lo >= hi {
        return None;
    }
    Some((lo, hi))
}

/// M0: non-zero pixels assigned to the brighter of two clusters. Zero pixels
/// are always background; degenerate clusterings keep the whole non-zero
/// support.
pub fn kmeans_foreground(pixels: &Image<f32>, cfg: &KMeansConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    let values: Vec<f64> = pixels
        .as_slice()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v as f64 * 255.0)
        .collect();
    let bits = match two_means(&values, cfg) {
        Some((lo, hi)) => pixels.map(|v| {
            let s = v as f64 * 255.0;
            v > 0.0 && (s - hi).abs() < (s - lo).abs()
        }),
        None => pixels.map(|v| v > 0.0),
    };
    Ok(BinaryMask {
        bits,
        stage: MaskStage::M0,
    })
}

/// M1: dilation of M0 by a 5x5 square.
pub fn dilate_mask(m: &BinaryMask) -> Result<BinaryMask> {
    m.expect_stage(MaskStage::M0)?;
    Ok(BinaryMask {
        bits: dilate_square(&m.bits, DILATION_SIZE),
        stage: MaskStage::M1,
    })
}

fn fill_interior(bits: &mut Image<bool>) {
    let holes = interior_holes(bits);
    for (b, &h) in bits.as_mut_slice().iter_mut().zip(holes.as_slice()) {
        *b |= h;
    }
}

/// Mf: fill interior holes, close with a growing square kernel, repeat while
/// closing leaves enclosed background, up to `max_iters` rounds.
pub fn fill_holes(m: &BinaryMask, cfg: &FillConfig) -> Result<BinaryMask> {
    m.expect_stage(MaskStage::M1)?;
    let mut bits = m.bits.clone();
    let mut kernel = cfg.initial_kernel;
    for _ in 0..cfg.max_iters {
        fill_interior(&mut bits);
        bits = close_square(&bits, kernel);
        kernel += cfg.kernel_step;
        if count_interior_holes(&bits) == 0 {
            break;
        }
    }
    // closing at the final kernel may enclose new background
    fill_interior(&mut bits);
    Ok(BinaryMask {
        bits,
        stage: MaskStage::Mf,
    })
}

/// All three stages of the pipeline.
#[derive(Clone, Debug)]
pub struct SegmentationStages {
    pub m0: BinaryMask,
    pub m1: BinaryMask,
    pub mf: BinaryMask,
}

pub fn segment_slice_stages(
    pixels: &Image<f32>,
    cfg: &SegmentationConfig,
) -> Result<SegmentationStages> {
    let m0 = kmeans_foreground(pixels, &cfg.kmeans)?;
    let m1 = dilate_mask(&m0)?;
    let mf = fill_holes(&m1, &cfg.fill)?;
    Ok(SegmentationStages { m0, m1, mf })
}

pub fn segment_slice(pixels: &Image<f32>, cfg: &SegmentationConfig) -> Result<BinaryMask> {
    Ok(segment_slice_stages(pixels, cfg)?.mf)
}
