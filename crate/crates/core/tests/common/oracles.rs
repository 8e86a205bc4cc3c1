//! Independent reference implementations used by several test targets.

use haru_core::Image;

/// Scalar-loop GMSD: 2x2 mean pooling, Prewitt gradients at every interior
/// pixel, similarity map, population standard deviation.
pub fn gmsd_oracle(a: &Image<f64>, b: &Image<f64>) -> f64 {
    const C: f64 = 0.0026;
    let pool = |img: &Image<f64>| {
        let (h, w) = img.dims();
        Image::from_fn(h / 2, w / 2, |y, x| {
            let mut s = 0.0;
            for dy in 0..2 {
                for dx in 0..2 {
                    s += img.get(2 * y + dy, 2 * x + dx);
                }
            }
            s / 4.0
        })
    };
    let kx = [[1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [1.0, 0.0, -1.0]];
    let grad = |img: &Image<f64>, y: usize, x: usize| {
        let (mut gx, mut gy) = (0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let v = img.get(y + i - 1, x + j - 1);
                gx += kx[i][j] * v / 3.0;
                gy += kx[j][i] * v / 3.0;
            }
        }
        (gx * gx + gy * gy).sqrt()
    };
    let (pa, pb) = (pool(a), pool(b));
    let (h, w) = pa.dims();
    let mut map = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let (ma, mb) = (grad(&pa, y, x), grad(&pb, y, x));
            map.push((2.0 * ma * mb + C) / (ma * ma + mb * mb + C));
        }
    }
    let mean = map.iter().sum::<f64>() / map.len() as f64;
    (map.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / map.len() as f64).sqrt()
}

/// Multiplies performed by a direct convolution loop.
pub fn conv_mac_loop(
    cin: usize,
    cout: usize,
    k: usize,
    (h, w): (usize, usize),
    stride: usize,
    pad: usize,
) -> u64 {
    let hout = (h + 2 * pad - k) / stride + 1;
    let wout = (w + 2 * pad - k) / stride + 1;
    let mut n = 0u64;
    for _ in 0..cout * hout * wout {
        for _ in 0..cin * k * k {
            n += 1;
        }
    }
    n
}

/// Multiplies of one attention window: `q.k` and `p * v` for every token pair.
pub fn attention_mac_loop(t: usize, d: usize) -> u64 {
    let mut n = 0u64;
    for _ in 0..t * t {
        for _ in 0..d {
            n += 2;
        }
    }
    n
}

/// `(x, y, w, h)` boxes kept by quadratic containment checks: a box goes when
/// another box strictly contains it, or an identical box comes earlier.
pub fn nested_oracle(boxes: &[(usize, usize, usize, usize)]) -> Vec<(usize, usize, usize, usize)> {
    let inside = |a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)| {
        a.0 >= b.0 && a.1 >= b.1 && a.0 + a.2 <= b.0 + b.2 && a.1 + a.3 <= b.1 + b.3
    };
    let mut out = Vec::new();
    for (i, &a) in boxes.iter().enumerate() {
        let mut drop = false;
        for (j, &b) in boxes.iter().enumerate() {
            if i != j && inside(a, b) && (a != b || j < i) {
                drop = true;
            }
        }
        if !drop {
            out.push(a);
        }
    }
    out
}

/// Rasterized filled ellipse.
pub fn ellipse_mask(h: usize, w: usize, c: (f64, f64), r: (f64, f64)) -> Image<bool> {
    Image::from_fn(h, w, |y, x| {
        ((y as f64 - c.0) / r.0).powi(2) + ((x as f64 - c.1) / r.1).powi(2) <= 1.0
    })
}

pub fn iou(a: &Image<bool>, b: &Image<bool>) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.as_slice().iter().zip(b.as_slice()) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    inter as f64 / union as f64
}

/// Bright ellipse with a dark cavity on a zero background, and its outline.
pub fn cavity_phantom(side: usize) -> (Image<f32>, Image<bool>) {
    let s = side as f64;
    let c = (0.5 * s, 0.47 * s);
    let outer = ellipse_mask(side, side, c, (0.35 * s, 0.27 * s));
    let cavity = ellipse_mask(side, side, (c.0 + 0.05 * s, c.1), (0.08 * s, 0.06 * s));
    let img = Image::from_fn(side, side, |y, x| {
        if cavity.get(y, x) {
            0.15
        } else if outer.get(y, x) {
            0.8
        } else {
            0.0
        }
    });
    (img, outer)
}

/// Learning rate in force after each epoch and the epoch that stops
/// training, replayed from the number of epochs since the best loss.
pub fn schedule_oracle(
    losses: &[f64],
    lr0: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    stop_after: usize,
) -> (Vec<f64>, Option<usize>) {
    let mut lrs = Vec::new();
    let mut reductions = 0i32;
    for e in 0..losses.len() {
        let mut best_at = 0;
        for i in 1..=e {
            if losses[i] < losses[best_at] {
                best_at = i;
            }
        }
        let stale = e - best_at;
        if stale >= stop_after {
            return (lrs, Some(e + 1));
        }
        if stale > 0 && stale % patience == 0 {
            reductions += 1;
        }
        lrs.push((lr0 * factor.powi(reductions)).max(min_lr));
    }
    (lrs, None)
}
