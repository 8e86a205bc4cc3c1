//! Full-reference fidelity metrics. All statistics accumulate in `f64`.

use crate::error::{HaruError, Result};
use crate::image::Image;
use crate::scalar::Scalar;

fn check_pair<T: Copy>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(HaruError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn to_f64<T: Scalar>(img: &Image<T>) -> Vec<f64> {
    img.as_slice().iter().map(|v| v.as_f64()).collect()
}

/// Peak signal-to-noise ratio. `infinite` is set when the images are equal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Psnr {
    pub db: f64,
    pub mse: f64,
    pub infinite: bool,
}

pub fn psnr<T: Scalar>(reference: &Image<T>, test: &Image<T>, peak: f64) -> Result<Psnr> {
    check_pair(reference, test)?;
    if !(peak > 0.0) {
        return Err(HaruError::Invalid(format!("peak {peak} must be positive")));
    }
    if reference.is_empty() {
        return Err(HaruError::DimensionMismatch("empty images".into()));
    }
    let sse: f64 = reference
        .as_slice()
        .iter()
        .zip(test.as_slice())
        .map(|(a, b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    let mse = sse / reference.len() as f64;
    Ok(if mse == 0.0 {
        Psnr {
            db: f64::INFINITY,
            mse,
            infinite: true,
        }
    } else {
        Psnr {
            db: 10.0 * (peak * peak / mse).log10(),
            mse,
            infinite: false,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

/// Normalized 1D Gaussian taps.
pub fn gaussian_taps(window: usize, sigma: f64) -> Vec<f64> {
    let c = (window as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..window)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" correlation of a `h x w` plane with `taps` on both axes.
fn filter_valid(data: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (ho, wo) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * data[y * w + x + i])
                .sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * wo + x])
                .sum();
        }
    }
    (out, ho, wo)
}

pub fn ssim<T: Scalar>(reference: &Image<T>, test: &Image<T>, peak: f64) -> Result<f64> {
    ssim_with(
        reference,
        test,
        &SsimConfig {
            peak,
            ..SsimConfig::default()
        },
    )
}

/// Mean of the local SSIM map over all window positions fully inside the image.
pub fn ssim_with<T: Scalar>(
    reference: &Image<T>,
    test: &Image<T>,
    cfg: &SsimConfig,
) -> Result<f64> {
    check_pair(reference, test)?;
    let (h, w) = reference.dims();
    if h < cfg.window || w < cfg.window || cfg.window == 0 {
        return Err(HaruError::DimensionMismatch(format!(
            "{h}x{w} image is smaller than the {0}x{0} window",
            cfg.window
        )));
    }
    let taps = gaussian_taps(cfg.window, cfg.sigma);
    let a = to_f64(reference);
    let b = to_f64(test);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(&b).map(|(&x, &y)| f(x, y)).collect()
    };
    let (mu_a, ho, wo) = filter_valid(&a, h, w, &taps);
    let (mu_b, ..) = filter_valid(&b, h, w, &taps);
    let (aa, ..) = filter_valid(&prod(&|x, _| x * x), h, w, &taps);
    let (bb, ..) = filter_valid(&prod(&|_, y| y * y), h, w, &taps);
    let (ab, ..) = filter_valid(&prod(&|x, y| x * y), h, w, &taps);
    let c1 = (cfg.k1 * cfg.peak).powi(2);
    let c2 = (cfg.k2 * cfg.peak).powi(2);
    let mut total = 0.0;
    for i in 0..ho * wo {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / (ho * wo) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmsdConfig {
    /// Stabilizing constant of the similarity map (for unit peak).
    pub c: f64,
    /// Average-pool by 2x2 blocks before taking gradients.
    pub downsample: bool,
}

impl Default for GmsdConfig {
    fn default() -> Self {
        GmsdConfig {
            c: 0.0026,
            downsample: true,
        }
    }
}

pub fn gmsd<T: Scalar>(reference: &Image<T>, test: &Image<T>) -> Result<f64> {
    gmsd_with(reference, test, &GmsdConfig::default())
}

fn block_mean(data: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            let s = data[2 * y * w + 2 * x]
                + data[2 * y * w + 2 * x + 1]
                + data[(2 * y + 1) * w + 2 * x]
                + data[(2 * y + 1) * w + 2 * x + 1];
            out[y * wo + x] = s / 4.0;
        }
    }
    (out, ho, wo)
}

/// Prewitt gradient magnitude over the valid interior.
fn gradient_magnitude(data: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((h - 2) * (w - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dy: usize, dx: usize| data[(y + dy - 1) * w + x + dx - 1];
            let gx = (p(0, 0) + p(1, 0) + p(2, 0) - p(0, 2) - p(1, 2) - p(2, 2)) / 3.0;
            let gy = (p(0, 0) + p(0, 1) + p(0, 2) - p(2, 0) - p(2, 1) - p(2, 2)) / 3.0;
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Standard deviation of the gradient magnitude similarity map.
pub fn gmsd_with<T: Scalar>(
    reference: &Image<T>,
    test: &Image<T>,
    cfg: &GmsdConfig,
) -> Result<f64> {
    check_pair(reference, test)?;
    let (h, w) = reference.dims();
    let (a, b, h, w) = if cfg.downsample {
        let (a, ho, wo) = block_mean(&to_f64(reference), h, w);
        let (b, ..) = block_mean(&to_f64(test), h, w);
        (a, b, ho, wo)
    } else {
        (to_f64(reference), to_f64(test), h, w)
    };
    if h < 3 || w < 3 {
        return Err(HaruError::DimensionMismatch(
            "image too small for gradient similarity".into(),
        ));
    }
    let ga = gradient_magnitude(&a, h, w);
    let gb = gradient_magnitude(&b, h, w);
    let map: Vec<f64> = ga
        .iter()
        .zip(&gb)
        .map(|(&x, &y)| (2.0 * x * y + cfg.c) / (x * x + y * y + cfg.c))
        .collect();
    let n = map.len() as f64;
    let mean = map.iter().sum::<f64>() / n;
    Ok((map.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}
