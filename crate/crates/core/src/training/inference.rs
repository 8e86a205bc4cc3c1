//! Tiled full-volume inference with raised-cosine blending.

use std::time::{Duration, Instant};

use crate::error::{HaruError, Result};
use crate::image::Image;
use crate::network::HaruNet;
use crate::nn::Tensor;
use crate::scalar::Scalar;
use crate::volume_io::Volume;

/// Tiles processed per forward pass.
const TILE_BATCH: usize = 4;

/// Tile origins covering `len` with tiles of `tile` spaced `tile - overlap`
/// apart; the last tile sits flush with the end.
pub fn tile_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let stride = (tile - overlap.min(tile - 1)).max(1);
    let mut starts: Vec<usize> = (0..)
        .map(|i| i * stride)
        .take_while(|&s| s + tile < len)
        .collect();
    starts.push(len - tile);
    starts
}

/// Blend weight along one axis of a tile: a raised-cosine ramp over
/// `overlap` cells on each side that touches another tile, 1 elsewhere.
fn axis_weights(tile: usize, overlap: usize, ramp_start: bool, ramp_end: bool) -> Vec<f64> {
    let ov = overlap.min(tile / 2);
    (0..tile)
        .map(|i| {
            let mut w = 1.0;
            if ov > 0 {
                let ramp = |k: usize| {
                    0.5 - 0.5 * (std::f64::consts::PI * (k as f64 + 0.5) / ov as f64).cos()
                };
                if ramp_start && i < ov {
                    w *= ramp(i);
                }
                if ramp_end && tile - 1 - i < ov {
                    w *= ramp(tile - 1 - i);
                }
            }
            w
        })
        .collect()
}

/// Sum over all tiles of the blend weights at each pixel of an `h x w`
/// canvas (`h, w >= tile`). Dividing each tile's weights by this sum gives
/// a partition of unity.
pub fn blend_weight_sum(h: usize, w: usize, tile: usize, overlap: usize) -> Image<f64> {
    let ys = tile_starts(h, tile, overlap);
    let xs = tile_starts(w, tile, overlap);
    let mut sum = Image::filled(h, w, 0.0);
    for (iy, &y) in ys.iter().enumerate() {
        let wy = axis_weights(tile, overlap, iy > 0, iy + 1 < ys.len());
        for (ix, &x) in xs.iter().enumerate() {
            let wx = axis_weights(tile, overlap, ix > 0, ix + 1 < xs.len());
            for a in 0..tile {
                for b in 0..tile {
                    sum.set(y + a, x + b, sum.get(y + a, x + b) + wy[a] * wx[b]);
                }
            }
        }
    }
    sum
}

/// Symmetric (edge-repeating) padding to at least `min_h x min_w`,
/// split as evenly as possible between both sides.
fn pad_symmetric(img: &Image<f32>, min_h: usize, min_w: usize) -> (Image<f32>, usize, usize) {
    let (h, w) = img.dims();
    let (ph, pw) = (min_h.saturating_sub(h), min_w.saturating_sub(w));
    let (top, left) = (ph / 2, pw / 2);
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let period = 2 * n;
        let m = i.rem_euclid(period);
        (if m < n { m } else { period - 1 - m }) as usize
    };
    let out = Image::from_fn(h + ph, w + pw, |y, x| {
        img.get(
            reflect(y as isize - top as isize, h),
            reflect(x as isize - left as isize, w),
        )
    });
    (out, top, left)
}

/// Denoises one slice by blending overlapping tiles. Sizes that the network
/// cannot take directly are padded symmetrically.
pub fn denoise_slice<T: Scalar>(
    net: &HaruNet<T>,
    slice: &Image<f32>,
    tile: usize,
    overlap: usize,
) -> Result<Image<f32>> {
    if tile == 0 || overlap >= tile {
        return Err(HaruError::Invalid(format!(
            "tile {tile} with overlap {overlap}"
        )));
    }
    net.config.check_input(tile, tile)?;
    let (h, w) = slice.dims();
    let (padded, top, left) = pad_symmetric(slice, tile, tile);
    let (ph, pw) = padded.dims();
    let ys = tile_starts(ph, tile, overlap);
    let xs = tile_starts(pw, tile, overlap);
    let tiles: Vec<(usize, usize, usize, usize)> = ys
        .iter()
        .enumerate()
        .flat_map(|(iy, &y)| xs.iter().enumerate().map(move |(ix, &x)| (iy, ix, y, x)))
        .collect();

    let wsum = blend_weight_sum(ph, pw, tile, overlap);
    let mut acc = vec![0.0f64; ph * pw];
    for group in tiles.chunks(TILE_BATCH) {
        let mut data = Vec::with_capacity(group.len() * tile * tile);
        for &(_, _, y, x) in group {
            let crop = padded.crop(y, x, tile, tile)?;
            data.extend(crop.as_slice().iter().map(|&v| T::of(v as f64)));
        }
        let out = net.predict(Tensor::from_vec(&[group.len(), 1, tile, tile], data)?)?;
        for (k, &(iy, ix, y, x)) in group.iter().enumerate() {
            let wy = axis_weights(tile, overlap, iy > 0, iy + 1 < ys.len());
            let wx = axis_weights(tile, overlap, ix > 0, ix + 1 < xs.len());
            let res = &out.data()[k * tile * tile..(k + 1) * tile * tile];
            for a in 0..tile {
                for b in 0..tile {
                    let wgt = wy[a] * wx[b];
                    let i = (y + a) * pw + x + b;
                    acc[i] += wgt * res[a * tile + b].as_f64();
                }
            }
        }
    }
    Ok(Image::from_fn(h, w, |y, x| {
        let i = (y + top) * pw + x + left;
        (acc[i] / wsum.as_slice()[i]).clamp(0.0, 1.0) as f32
    }))
}

pub struct DenoiseOutput {
    pub volume: Volume,
    pub elapsed: Duration,
}

/// Denoises every axial slice of `v`.
pub fn denoise_volume<T: Scalar>(
    net: &HaruNet<T>,
    v: &Volume,
    tile: usize,
    overlap: usize,
) -> Result<DenoiseOutput> {
    let start = Instant::now();
    let (d, h, w) = v.dims();
    let mut voxels = Vec::with_capacity(d * h * w);
    for z in 0..d {
        let slice = Image::from_vec(h, w, v.voxels()[z * h * w..(z + 1) * h * w].to_vec())?;
        voxels.extend(denoise_slice(net, &slice, tile, overlap)?.into_vec());
    }
    let mut volume = Volume::new(format!("{}_denoised", v.id), (d, h, w), voxels)?;
    volume.voxel_size_mm = v.voxel_size_mm;
    Ok(DenoiseOutput {
        volume,
        elapsed: start.elapsed(),
    })
}
