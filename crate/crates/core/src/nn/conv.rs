//! Convolution and transposed convolution via im2col/col2im and GEMM.
//!
//! Weight layouts follow the usual conventions: `[C_out, C_in, k, k]` for
//! convolution and `[C_in, C_out, k, k]` for the transposed form.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, ArrayView2, ArrayViewMut2};
use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{HaruError, Result};
use crate::scalar::Scalar;

/// Upper bound on im2col buffer elements per chunk.
const COLS_BUDGET: usize = 1 << 22;

/// Geometry of a convolution from an `h x w` grid to `hout x wout`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub hout: usize,
    pub wout: usize,
}

impl ConvGeom {
    pub fn new(
        channels: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if k == 0 || stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return Err(HaruError::Shape(format!(
                "kernel {k} stride {stride} pad {pad} does not fit a {h}x{w} input"
            )));
        }
        Ok(ConvGeom {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            hout: (h + 2 * pad - k) / stride + 1,
            wout: (w + 2 * pad - k) / stride + 1,
        })
    }

    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output rows per im2col chunk.
    fn chunk_rows(&self) -> usize {
        (COLS_BUDGET / (self.rows() * self.wout).max(1)).clamp(1, self.hout)
    }

    /// Input row of output row `oy` at tap row `ky`, if inside.
    #[inline]
    fn src_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let y = (oy * self.stride + ky) as isize - self.pad as isize;
        (y >= 0 && y < self.h as isize).then_some(y as usize)
    }

    /// Output columns `[lo, hi)` whose tap column `kx` lands inside the
    /// input, and the input column of `lo`.
    #[inline]
    fn col_span(&self, kx: usize) -> (usize, usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let hi = if self.w + p > kx {
            ((self.w + p - kx - 1) / s + 1).min(self.wout)
        } else {
            0
        };
        let lo = lo.min(hi);
        (lo, hi, lo * s + kx - p.min(lo * s + kx))
    }
}

/// `[C*k*k, (r1-r0)*wout]` patch matrix for output rows `r0..r1`.
fn im2col<T: Scalar>(img: &[T], g: &ConvGeom, r0: usize, r1: usize) -> Vec<T> {
    let cols = (r1 - r0) * g.wout;
    let mut out = vec![T::zero(); g.rows() * cols];
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                let (lo, hi, x0) = g.col_span(kx);
                for oy in r0..r1 {
                    let Some(y) = g.src_row(oy, ky) else { continue };
                    let src = &plane[y * g.w..(y + 1) * g.w];
                    let d = &mut dst[(oy - r0) * g.wout + lo..(oy - r0) * g.wout + hi];
                    if g.stride == 1 {
                        d.copy_from_slice(&src[x0..x0 + (hi - lo)]);
                    } else {
                        for (i, v) in d.iter_mut().enumerate() {
                            *v = src[x0 + i * g.stride];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Scatter-adds a patch matrix for output rows `r0..r1` back onto `img`.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, r0: usize, r1: usize, img: &mut [T]) {
    let n = (r1 - r0) * g.wout;
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * n..(row + 1) * n];
                let (lo, hi, x0) = g.col_span(kx);
                for oy in r0..r1 {
                    let Some(y) = g.src_row(oy, ky) else { continue };
                    let dst = &mut plane[y * g.w..(y + 1) * g.w];
                    let s = &src[(oy - r0) * g.wout + lo..(oy - r0) * g.wout + hi];
                    for (i, &v) in s.iter().enumerate() {
                        let x = x0 + i * g.stride;
                        dst[x] = dst[x] + v;
                    }
                }
            }
        }
    }
}

fn view<T>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("buffer matches view shape")
}

fn view_mut<T>(data: &mut [T], rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("buffer matches view shape")
}

/// `out[Cout, hout*wout] = W[Cout, C*k*k] . im2col(img)`.
fn conv_sample<T: Scalar>(img: &[T], wmat: ArrayView2<'_, T>, g: &ConvGeom, out: &mut [T]) {
    let cout = wmat.nrows();
    let p = g.hout * g.wout;
    let mut out_m = view_mut(out, cout, p);
    if g.is_pointwise() {
        general_mat_mul(
            T::one(),
            &wmat,
            &view(img, g.rows(), p),
            T::zero(),
            &mut out_m,
        );
        return;
    }
    let step = g.chunk_rows();
    let mut r0 = 0;
    while r0 < g.hout {
        let r1 = (r0 + step).min(g.hout);
        let cols = im2col(img, g, r0, r1);
        let n = (r1 - r0) * g.wout;
        let mut dst = out_m.slice_mut(s![.., r0 * g.wout..r0 * g.wout + n]);
        general_mat_mul(
            T::one(),
            &wmat,
            &view(&cols, g.rows(), n),
            T::zero(),
            &mut dst,
        );
        r0 = r1;
    }
}

/// Given `gout[Cout, hout*wout]`: accumulates `dW += gout . im2col(img)^T`
/// and, when `dimg` is given, `dimg += col2im(W^T . gout)`.
fn conv_sample_backward<T: Scalar>(
    img: &[T],
    wmat: ArrayView2<'_, T>,
    g: &ConvGeom,
    gout: &[T],
    dw: &mut ArrayViewMut2<'_, T>,
    mut dimg: Option<&mut [T]>,
) {
    let cout = wmat.nrows();
    let p = g.hout * g.wout;
    let gout_m = view(gout, cout, p);
    if g.is_pointwise() {
        general_mat_mul(T::one(), &gout_m, &view(img, g.rows(), p).t(), T::one(), dw);
        if let Some(dimg) = dimg {
            let mut d = view_mut(dimg, g.rows(), p);
            general_mat_mul(T::one(), &wmat.t(), &gout_m, T::one(), &mut d);
        }
        return;
    }
    let step = g.chunk_rows();
    let mut r0 = 0;
    while r0 < g.hout {
        let r1 = (r0 + step).min(g.hout);
        let n = (r1 - r0) * g.wout;
        let gchunk = gout_m.slice(s![.., r0 * g.wout..r0 * g.wout + n]);
        let cols = im2col(img, g, r0, r1);
        general_mat_mul(
            T::one(),
            &gchunk,
            &view(&cols, g.rows(), n).t(),
            T::one(),
            dw,
        );
        if let Some(dimg) = dimg.as_deref_mut() {
            let mut dcols = vec![T::zero(); g.rows() * n];
            general_mat_mul(
                T::one(),
                &wmat.t(),
                &gchunk,
                T::zero(),
                &mut view_mut(&mut dcols, g.rows(), n),
            );
            col2im(&dcols, g, r0, r1, dimg);
        }
        r0 = r1;
    }
}

fn check_bias<T: Scalar>(b: Option<&Tensor<T>>, cout: usize) -> Result<()> {
    if let Some(b) = b {
        if b.shape() != [cout] {
            return Err(HaruError::Shape(format!(
                "bias shape {:?} for {cout} output channels",
                b.shape()
            )));
        }
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut [T], b: Option<&Tensor<T>>, plane: usize) {
    if let Some(b) = b {
        for (chunk, &bv) in out.chunks_mut(plane).zip(b.data()) {
            for v in chunk {
                *v = *v + bv;
            }
        }
    }
}

fn bias_grad<T: Scalar>(gout: &Tensor<T>, c: usize, plane: usize) -> Tensor<T> {
    let mut db = vec![T::zero(); c];
    for sample in gout.data().chunks(c * plane) {
        for (ch, chunk) in sample.chunks(plane).enumerate() {
            db[ch] = chunk.iter().fold(db[ch], |a, &b| a + b);
        }
    }
    Tensor::from_vec(&[c], db).expect("bias gradient shape")
}

pub fn conv2d_geometry<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(ConvGeom, usize)> {
    let (_, cin, h, wd) = x.dims4()?;
    let (cout, wcin, k, k2) = w.dims4()?;
    if wcin != cin || k != k2 {
        return Err(HaruError::Shape(format!(
            "conv weight {:?} does not match input with {cin} channels",
            w.shape()
        )));
    }
    Ok((ConvGeom::new(cin, h, wd, k, stride, pad)?, cout))
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (g, cout) = conv2d_geometry(x, w, stride, pad)?;
    check_bias(b, cout)?;
    let n = x.shape()[0];
    let in_sz = g.channels * g.h * g.w;
    let out_plane = g.hout * g.wout;
    let mut out = Tensor::zeros(&[n, cout, g.hout, g.wout]);
    let wmat = view(w.data(), cout, g.rows());
    out.data_mut()
        .par_chunks_mut(cout * out_plane)
        .zip(x.data().par_chunks(in_sz))
        .for_each(|(o, img)| {
            conv_sample(img, wmat, &g, o);
            add_bias(o, b, out_plane);
        });
    Ok(out)
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let (g, cout) = conv2d_geometry(x, w, stride, pad)?;
    let n = x.shape()[0];
    let in_sz = g.channels * g.h * g.w;
    let out_sz = cout * g.hout * g.wout;
    let wmat = view(w.data(), cout, g.rows());
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));

    let per_sample: Vec<Vec<T>> = match dx.as_mut() {
        Some(dx) => dx
            .data_mut()
            .par_chunks_mut(in_sz)
            .zip(x.data().par_chunks(in_sz))
            .zip(gout.data().par_chunks(out_sz))
            .map(|((dimg, img), go)| {
                let mut dw = vec![T::zero(); w.numel()];
                conv_sample_backward(
                    img,
                    wmat,
                    &g,
                    go,
                    &mut view_mut(&mut dw, cout, g.rows()),
                    Some(dimg),
                );
                dw
            })
            .collect(),
        None => x
            .data()
            .par_chunks(in_sz)
            .zip(gout.data().par_chunks(out_sz))
            .map(|(img, go)| {
                let mut dw = vec![T::zero(); w.numel()];
                conv_sample_backward(
                    img,
                    wmat,
                    &g,
                    go,
                    &mut view_mut(&mut dw, cout, g.rows()),
                    None,
                );
                dw
            })
            .collect(),
    };
    let mut dw = Tensor::zeros(w.shape());
    debug_assert_eq!(per_sample.len(), n);
    for part in per_sample {
        for (a, b) in dw.data_mut().iter_mut().zip(part) {
            *a = *a + b;
        }
    }
    Ok(ConvGrads {
        dx,
        dw,
        db: bias_grad(gout, cout, g.hout * g.wout),
    })
}

/// Geometry of the convolution whose adjoint is this transposed convolution:
/// it maps the `hout x wout` output grid back onto the `h x w` input grid.
pub fn conv_transpose2d_geometry<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(ConvGeom, usize, usize)> {
    let (_, cin, h, wd) = x.dims4()?;
    let (wcin, cout, k, k2) = w.dims4()?;
    if wcin != cin || k != k2 {
        return Err(HaruError::Shape(format!(
            "transposed conv weight {:?} does not match input with {cin} channels",
            w.shape()
        )));
    }
    if stride == 0 || (h - 1) * stride + k < 2 * pad + 1 {
        return Err(HaruError::Shape(
            "transposed conv output would be empty".into(),
        ));
    }
    let hout = (h - 1) * stride + k - 2 * pad;
    let wout = (wd - 1) * stride + k - 2 * pad;
    let g = ConvGeom::new(cout, hout, wout, k, stride, pad)?;
    if g.hout != h || g.wout != wd {
        return Err(HaruError::Shape(
            "transposed conv geometry is not invertible".into(),
        ));
    }
    Ok((g, cin, cout))
}

pub fn conv_transpose2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (g, cin, cout) = conv_transpose2d_geometry(x, w, stride, pad)?;
    check_bias(b, cout)?;
    let n = x.shape()[0];
    let in_plane = g.hout * g.wout;
    let out_plane = g.h * g.w;
    let wmat = view(w.data(), cin, g.rows());
    let mut out = Tensor::zeros(&[n, cout, g.h, g.w]);
    out.data_mut()
        .par_chunks_mut(cout * out_plane)
        .zip(x.data().par_chunks(cin * in_plane))
        .for_each(|(o, xs)| {
            let xm = view(xs, cin, in_plane);
            let step = g.chunk_rows();
            let mut r0 = 0;
            while r0 < g.hout {
                let r1 = (r0 + step).min(g.hout);
                let cnt = (r1 - r0) * g.wout;
                let xc = xm.slice(s![.., r0 * g.wout..r0 * g.wout + cnt]);
                let mut cols = vec![T::zero(); g.rows() * cnt];
                general_mat_mul(
                    T::one(),
                    &wmat.t(),
                    &xc,
                    T::zero(),
                    &mut view_mut(&mut cols, g.rows(), cnt),
                );
                col2im(&cols, &g, r0, r1, o);
                r0 = r1;
            }
            add_bias(o, b, out_plane);
        });
    Ok(out)
}

pub fn conv_transpose2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let (g, cin, cout) = conv_transpose2d_geometry(x, w, stride, pad)?;
    let in_plane = g.hout * g.wout;
    let out_sz = cout * g.h * g.w;
    let wmat = view(w.data(), cin, g.rows());
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));

    // The transposed conv's input plays the role of the forward conv's
    // output; gradients are the forward conv applied to `gout`.
    let work = |xs: &[T], go: &[T], dxs: Option<&mut [T]>| -> Vec<T> {
        let mut dw = vec![T::zero(); w.numel()];
        let mut dwm = view_mut(&mut dw, cin, g.rows());
        let xm = view(xs, cin, in_plane);
        let mut dxs = dxs;
        let step = g.chunk_rows();
        let mut r0 = 0;
        while r0 < g.hout {
            let r1 = (r0 + step).min(g.hout);
            let cnt = (r1 - r0) * g.wout;
            let gcols = im2col(go, &g, r0, r1);
            let gview = view(&gcols, g.rows(), cnt);
            let xc = xm.slice(s![.., r0 * g.wout..r0 * g.wout + cnt]);
            general_mat_mul(T::one(), &xc, &gview.t(), T::one(), &mut dwm);
            if let Some(d) = dxs.as_deref_mut() {
                let mut dm = view_mut(d, cin, in_plane);
                let mut dst = dm.slice_mut(s![.., r0 * g.wout..r0 * g.wout + cnt]);
                general_mat_mul(T::one(), &wmat, &gview, T::zero(), &mut dst);
            }
            r0 = r1;
        }
        dw
    };
    let per_sample: Vec<Vec<T>> = match dx.as_mut() {
        Some(dx) => dx
            .data_mut()
            .par_chunks_mut(cin * in_plane)
            .zip(x.data().par_chunks(cin * in_plane))
            .zip(gout.data().par_chunks(out_sz))
            .map(|((d, xs), go)| work(xs, go, Some(d)))
            .collect(),
        None => x
            .data()
            .par_chunks(cin * in_plane)
            .zip(gout.data().par_chunks(out_sz))
            .map(|(xs, go)| work(xs, go, None))
            .collect(),
    };
    let mut dw = Tensor::zeros(w.shape());
    for part in per_sample {
        for (a, b) in dw.data_mut().iter_mut().zip(part) {
            *a = *a + b;
        }
    }
    Ok(ConvGrads {
        dx,
        dw,
        db: bias_grad(gout, cout, g.h * g.w),
    })
}

/// Multiply-accumulates of a convolution: one per tap per output pixel.
pub fn conv2d_macs(cin: usize, cout: usize, k: usize, hout: usize, wout: usize) -> u64 {
    (k * k * cin * cout * hout * wout) as u64
}

/// Multiply-accumulates of a transposed convolution, counted over its input
/// taps (`k*k*C_in*C_out` per input pixel).
pub fn conv_transpose2d_macs(cin: usize, cout: usize, k: usize, hin: usize, win: usize) -> u64 {
    (k * k * cin * cout * hin * win) as u64
}
