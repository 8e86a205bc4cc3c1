//! Fused (shifted) window multi-head self-attention with a learned relative
//! position bias table.
//!
//! The input packs queries, keys and values along the channel axis
//! (`[N, 3C, H, W]`); the output is `[N, C, H, W]`. A shift of `s` rolls the
//! feature map by `-s` on both axes before partitioning and rolls the result
//! back afterwards; tokens that came from different sides of a wrap boundary
//! never attend to each other.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{HaruError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGeom {
    pub batch: usize,
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub heads: usize,
    pub window: usize,
    pub shift: usize,
}

impl WindowGeom {
    pub fn new(qkv_shape: &[usize], heads: usize, window: usize, shift: usize) -> Result<Self> {
        let [n, c3, h, w] = *qkv_shape else {
            return Err(HaruError::Shape(format!(
                "attention input {qkv_shape:?} is not rank 4"
            )));
        };
        if c3 % 3 != 0 {
            return Err(HaruError::Shape(format!(
                "{c3} channels cannot hold q, k and v"
            )));
        }
        let c = c3 / 3;
        if heads == 0 || c % heads != 0 {
            return Err(HaruError::Shape(format!(
                "{c} channels not divisible by {heads} heads"
            )));
        }
        if window == 0 || h % window != 0 || w % window != 0 {
            return Err(HaruError::Shape(format!(
                "{h}x{w} feature map not divisible by window {window}"
            )));
        }
        if shift >= window {
            return Err(HaruError::Shape(format!(
                "shift {shift} must be smaller than window {window}"
            )));
        }
        // A single window already sees the whole map: shifting would only
        // mask tokens away.
        let shift = if h <= window || w <= window { 0 } else { shift };
        Ok(WindowGeom {
            batch: n,
            channels: c,
            h,
            w,
            heads,
            window,
            shift,
        })
    }

    pub fn tokens(&self) -> usize {
        self.window * self.window
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn windows(&self) -> usize {
        (self.h / self.window) * (self.w / self.window)
    }

    pub fn table_len(&self) -> usize {
        (2 * self.window - 1) * (2 * self.window - 1)
    }

    /// Flat pixel offsets (in the original frame) of the tokens of window `win`.
    fn token_pixels(&self, win: usize) -> Vec<usize> {
        let ww = self.w / self.window;
        let (wy, wx) = (win / ww, win % ww);
        let mut out = Vec::with_capacity(self.tokens());
        for a in 0..self.window {
            for b in 0..self.window {
                let ry = wy * self.window + a;
                let rx = wx * self.window + b;
                out.push(((ry + self.shift) % self.h) * self.w + (rx + self.shift) % self.w);
            }
        }
        out
    }

    /// Region labels of the tokens of window `win` in the rolled frame.
    fn token_regions(&self, win: usize) -> Vec<u8> {
        let ww = self.w / self.window;
        let (wy, wx) = (win / ww, win % ww);
        let region = |r: usize, len: usize| -> u8 {
            if self.shift == 0 || r < len - self.window {
                0
            } else if r < len - self.shift {
                1
            } else {
                2
            }
        };
        let mut out = Vec::with_capacity(self.tokens());
        for a in 0..self.window {
            for b in 0..self.window {
                out.push(
                    region(wy * self.window + a, self.h) * 3 + region(wx * self.window + b, self.w),
                );
            }
        }
        out
    }

    /// Index into a head's bias table for token pair `(i, j)` of a window.
    #[inline]
    fn bias_index(&self, i: usize, j: usize) -> usize {
        let w = self.window;
        let dy = i / w + w - 1 - j / w;
        let dx = i % w + w - 1 - j % w;
        dy * (2 * w - 1) + dx
    }
}

/// Per-window gathered tensors: `[heads][tokens][head_dim]` flattened.
struct Gathered<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    pixels: Vec<usize>,
}

fn gather<T: Scalar>(g: &WindowGeom, sample: &[T], win: usize) -> Gathered<T> {
    let plane = g.h * g.w;
    let (t, d, c) = (g.tokens(), g.head_dim(), g.channels);
    let pixels = g.token_pixels(win);
    let mut bufs = [
        vec![T::zero(); c * t],
        vec![T::zero(); c * t],
        vec![T::zero(); c * t],
    ];
    for (part, buf) in bufs.iter_mut().enumerate() {
        for ch in 0..c {
            let (head, e) = (ch / d, ch % d);
            let src = &sample[(part * c + ch) * plane..(part * c + ch + 1) * plane];
            for (i, &p) in pixels.iter().enumerate() {
                buf[(head * t + i) * d + e] = src[p];
            }
        }
    }
    let [q, k, v] = bufs;
    Gathered { q, k, v, pixels }
}

/// Attention probabilities `[heads][t][t]` for one window.
fn probabilities<T: Scalar>(
    g: &WindowGeom,
    gw: &Gathered<T>,
    regions: &[u8],
    table: &[T],
) -> Vec<T> {
    let (t, d) = (g.tokens(), g.head_dim());
    let scale = T::of(1.0 / (d as f64).sqrt());
    let tl = g.table_len();
    let mut probs = vec![T::zero(); g.heads * t * t];
    for head in 0..g.heads {
        let q = &gw.q[head * t * d..(head + 1) * t * d];
        let k = &gw.k[head * t * d..(head + 1) * t * d];
        let bias = &table[head * tl..(head + 1) * tl];
        for i in 0..t {
            let row = &mut probs[(head * t + i) * t..(head * t + i + 1) * t];
            let qi = &q[i * d..(i + 1) * d];
            let mut max = T::neg_infinity();
            for j in 0..t {
                if regions[i] != regions[j] {
                    row[j] = T::neg_infinity();
                    continue;
                }
                let kj = &k[j * d..(j + 1) * d];
                let s = qi.iter().zip(kj).fold(T::zero(), |a, (&x, &y)| a + x * y) * scale
                    + bias[g.bias_index(i, j)];
                row[j] = s;
                max = max.max(s);
            }
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = if v.is_finite() {
                    (*v - max).exp()
                } else {
                    T::zero()
                };
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
    }
    probs
}

pub fn window_attention_forward<T: Scalar>(
    qkv: &Tensor<T>,
    table: &Tensor<T>,
    heads: usize,
    window: usize,
    shift: usize,
) -> Result<Tensor<T>> {
    let g = WindowGeom::new(qkv.shape(), heads, window, shift)?;
    check_table(&g, table)?;
    let (t, d, c, plane) = (g.tokens(), g.head_dim(), g.channels, g.h * g.w);
    let mut out = Tensor::zeros(&[g.batch, c, g.h, g.w]);
    out.data_mut()
        .par_chunks_mut(c * plane)
        .zip(qkv.data().par_chunks(3 * c * plane))
        .for_each(|(o, sample)| {
            let results: Vec<(Vec<usize>, Vec<T>)> = (0..g.windows())
                .into_par_iter()
                .map(|win| {
                    let gw = gather(&g, sample, win);
                    let probs = probabilities(&g, &gw, &g.token_regions(win), table.data());
                    let mut res = vec![T::zero(); c * t];
                    for head in 0..g.heads {
                        let v = &gw.v[head * t * d..(head + 1) * t * d];
                        for i in 0..t {
                            let p = &probs[(head * t + i) * t..(head * t + i + 1) * t];
                            let dst = &mut res[(head * t + i) * d..(head * t + i + 1) * d];
                            for (j, &pij) in p.iter().enumerate() {
                                if pij != T::zero() {
                                    for (a, &b) in dst.iter_mut().zip(&v[j * d..(j + 1) * d]) {
                                        *a = *a + pij * b;
                                    }
                                }
                            }
                        }
                    }
                    (gw.pixels, res)
                })
                .collect();
            for (pixels, res) in results {
                scatter(&g, &pixels, &res, o, 0);
            }
        });
    Ok(out)
}

/// Writes `[heads][t][d]` window results into channel block `part` of a sample.
fn scatter<T: Scalar>(g: &WindowGeom, pixels: &[usize], res: &[T], sample: &mut [T], part: usize) {
    let (t, d, c, plane) = (g.tokens(), g.head_dim(), g.channels, g.h * g.w);
    for ch in 0..c {
        let (head, e) = (ch / d, ch % d);
        let dst = &mut sample[(part * c + ch) * plane..(part * c + ch + 1) * plane];
        for (i, &p) in pixels.iter().enumerate() {
            dst[p] = res[(head * t + i) * d + e];
        }
    }
}

fn check_table<T: Scalar>(g: &WindowGeom, table: &Tensor<T>) -> Result<()> {
    if table.shape() != [g.heads, g.table_len()] {
        return Err(HaruError::Shape(format!(
            "bias table {:?} for {} heads and window {}",
            table.shape(),
            g.heads,
            g.window
        )));
    }
    Ok(())
}

/// Gradients with respect to the packed qkv input and the bias table.
pub fn window_attention_backward<T: Scalar>(
    qkv: &Tensor<T>,
    table: &Tensor<T>,
    gout: &Tensor<T>,
    heads: usize,
    window: usize,
    shift: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = WindowGeom::new(qkv.shape(), heads, window, shift)?;
    check_table(&g, table)?;
    let (t, d, c, plane, tl) = (
        g.tokens(),
        g.head_dim(),
        g.channels,
        g.h * g.w,
        g.table_len(),
    );
    let scale = T::of(1.0 / (d as f64).sqrt());
    let mut dqkv = Tensor::zeros(qkv.shape());
    let table_parts: Vec<Vec<T>> = dqkv
        .data_mut()
        .par_chunks_mut(3 * c * plane)
        .zip(qkv.data().par_chunks(3 * c * plane))
        .zip(gout.data().par_chunks(c * plane))
        .map(|((dsample, sample), go)| {
            let results: Vec<(Vec<usize>, [Vec<T>; 3], Vec<T>)> = (0..g.windows())
                .into_par_iter()
                .map(|win| {
                    let gw = gather(&g, sample, win);
                    let regions = g.token_regions(win);
                    let probs = probabilities(&g, &gw, &regions, table.data());
                    let mut gy = vec![T::zero(); c * t];
                    for ch in 0..c {
                        let (head, e) = (ch / d, ch % d);
                        for (i, &p) in gw.pixels.iter().enumerate() {
                            gy[(head * t + i) * d + e] = go[ch * plane + p];
                        }
                    }
                    let mut dq = vec![T::zero(); c * t];
                    let mut dk = vec![T::zero(); c * t];
                    let mut dv = vec![T::zero(); c * t];
                    let mut dtable = vec![T::zero(); heads * tl];
                    let mut ds = vec![T::zero(); t];
                    for head in 0..heads {
                        let off = head * t * d;
                        for i in 0..t {
                            let p = &probs[(head * t + i) * t..(head * t + i + 1) * t];
                            let gi = &gy[off + i * d..off + (i + 1) * d];
                            let mut weighted = T::zero();
                            for j in 0..t {
                                if p[j] == T::zero() {
                                    ds[j] = T::zero();
                                    continue;
                                }
                                let vj = &gw.v[off + j * d..off + (j + 1) * d];
                                let dp = gi.iter().zip(vj).fold(T::zero(), |a, (&x, &y)| a + x * y);
                                ds[j] = dp;
                                weighted = weighted + p[j] * dp;
                                for (a, &b) in dv[off + j * d..off + (j + 1) * d].iter_mut().zip(gi)
                                {
                                    *a = *a + p[j] * b;
                                }
                            }
                            for j in 0..t {
                                if p[j] == T::zero() {
                                    continue;
                                }
                                let s = p[j] * (ds[j] - weighted);
                                dtable[head * tl + g.bias_index(i, j)] =
                                    dtable[head * tl + g.bias_index(i, j)] + s;
                                let s = s * scale;
                                for e in 0..d {
                                    dq[off + i * d + e] =
                                        dq[off + i * d + e] + s * gw.k[off + j * d + e];
                                    dk[off + j * d + e] =
                                        dk[off + j * d + e] + s * gw.q[off + i * d + e];
                                }
                            }
                        }
                    }
                    (gw.pixels, [dq, dk, dv], dtable)
                })
                .collect();
            let mut dtable = vec![T::zero(); heads * tl];
            for (pixels, parts, dt) in results {
                for (part, buf) in parts.iter().enumerate() {
                    scatter(&g, &pixels, buf, dsample, part);
                }
                for (a, b) in dtable.iter_mut().zip(dt) {
                    *a = *a + b;
                }
            }
            dtable
        })
        .collect();
    let mut dtable = Tensor::zeros(table.shape());
    for part in table_parts {
        for (a, b) in dtable.data_mut().iter_mut().zip(part) {
            *a = *a + b;
        }
    }
    Ok((dqkv, dtable))
}

/// Multiply-accumulates of the score and weighted-sum products:
/// `2 * t * C` per token, where `t` is the window token count.
pub fn window_attention_macs(
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    window: usize,
) -> u64 {
    let t = window * window;
    2 * (batch * h * w * t * channels) as u64
}
