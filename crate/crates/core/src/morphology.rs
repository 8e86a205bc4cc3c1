//! Binary morphology and connected components on `Image<bool>`.

use std::collections::VecDeque;

use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Window offsets `[lo, hi]` of a square side `k` anchored at its center
/// (for even `k` the extra cell lies before the anchor).
pub fn square_window(k: usize) -> (isize, isize) {
    let lo = -((k / 2) as isize);
    (lo, lo + k as isize - 1)
}

/// 1D "any in window" pass over `len` cells using prefix counts; cells
/// outside `[0, len)` are unset.
fn any_in_window(
    len: usize,
    read: impl Fn(usize) -> bool,
    (lo, hi): (isize, isize),
    mut write: impl FnMut(usize, bool),
) {
    let mut prefix = vec![0u32; len + 1];
    for i in 0..len {
        prefix[i + 1] = prefix[i] + read(i) as u32;
    }
    for i in 0..len {
        let a = i as isize + lo;
        let b = i as isize + hi;
        let a = a.clamp(0, len as isize) as usize;
        let b = (b + 1).clamp(0, len as isize) as usize;
        write(i, a < b && prefix[b] > prefix[a]);
    }
}

/// `out(p) = any(x(p + o))` for `o` in the square window, separable.
fn dilate_window(bits: &Image<bool>, win: (isize, isize)) -> Image<bool> {
    let (h, w) = bits.dims();
    let mut rows = Image::filled(h, w, false);
    for y in 0..h {
        any_in_window(w, |x| bits.get(y, x), win, |x, v| rows.set(y, x, v));
    }
    let mut out = Image::filled(h, w, false);
    for x in 0..w {
        any_in_window(h, |y| rows.get(y, x), win, |y, v| out.set(y, x, v));
    }
    out
}

/// Dilation by a `k x k` square; the image exterior is background.
pub fn dilate_square(bits: &Image<bool>, k: usize) -> Image<bool> {
    dilate_window(bits, square_window(k))
}

/// Erosion by the reflected `k x k` square; the exterior counts as
/// foreground so that closing is extensive up to the border.
pub fn erode_square(bits: &Image<bool>, k: usize) -> Image<bool> {
    let (lo, hi) = square_window(k);
    let inv = bits.map(|b| !b);
    dilate_window(&inv, (-hi, -lo)).map(|b| !b)
}

pub fn close_square(bits: &Image<bool>, k: usize) -> Image<bool> {
    erode_square(&dilate_square(bits, k), k)
}

/// Background pixels with no 4-connected background path to the border.
pub fn interior_holes(bits: &Image<bool>) -> Image<bool> {
    let (h, w) = bits.dims();
    let mut reached = Image::filled(h, w, false);
    let mut queue = VecDeque::new();
    let seed = |y: usize, x: usize, reached: &mut Image<bool>, q: &mut VecDeque<(usize, usize)>| {
        if !bits.get(y, x) && !reached.get(y, x) {
            reached.set(y, x, true);
            q.push_back((y, x));
        }
    };
    for x in 0..w {
        seed(0, x, &mut reached, &mut queue);
        seed(h - 1, x, &mut reached, &mut queue);
    }
    for y in 0..h {
        seed(y, 0, &mut reached, &mut queue);
        seed(y, w - 1, &mut reached, &mut queue);
    }
    while let Some((y, x)) = queue.pop_front() {
        for &(dy, dx) in Connectivity::Four.offsets() {
            let (ny, nx) = (y as isize + dy, x as isize + dx);
            if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                continue;
            }
            let (ny, nx) = (ny as usize, nx as usize);
            if !bits.get(ny, nx) && !reached.get(ny, nx) {
                reached.set(ny, nx, true);
                queue.push_back((ny, nx));
            }
        }
    }
    Image::from_fn(h, w, |y, x| !bits.get(y, x) && !reached.get(y, x))
}

/// Labels connected `true` regions in raster-scan discovery order. Labels
/// start at 1; 0 marks unset pixels.
pub fn label_components(bits: &Image<bool>, conn: Connectivity) -> (Image<u32>, u32) {
    let (h, w) = bits.dims();
    let mut labels = Image::filled(h, w, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if !bits.get(y0, x0) || labels.get(y0, x0) != 0 {
                continue;
            }
            next += 1;
            labels.set(y0, x0, next);
            queue.push_back((y0, x0));
            while let Some((y, x)) = queue.pop_front() {
                for &(dy, dx) in conn.offsets() {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let (ny, nx) = (ny as usize, nx as usize);
                    if bits.get(ny, nx) && labels.get(ny, nx) == 0 {
                        labels.set(ny, nx, next);
                        queue.push_back((ny, nx));
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Number of 4-connected interior holes.
pub fn count_interior_holes(bits: &Image<bool>) -> u32 {
    label_components(&interior_holes(bits), Connectivity::Four).1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_dilate(bits: &Image<bool>, k: usize) -> Image<bool> {
        let (h, w) = bits.dims();
        let (lo, hi) = square_window(k);
        Image::from_fn(h, w, |y, x| {
            (lo..=hi).any(|dy| {
                (lo..=hi).any(|dx| {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    yy >= 0
                        && xx >= 0
                        && yy < h as isize
                        && xx < w as isize
                        && bits.get(yy as usize, xx as usize)
                })
            })
        })
    }

    #[test]
    fn separable_dilation_matches_brute_force() {
        let bits = Image::from_fn(23, 19, |y, x| (y * 7 + x * 13) % 17 == 0);
        for k in [1, 2, 5, 6, 15] {
            assert_eq!(dilate_square(&bits, k), brute_dilate(&bits, k), "k={k}");
        }
    }

    #[test]
    fn closing_is_extensive_near_border() {
        let bits = Image::from_fn(30, 30, |y, x| x < 2 || (y == 10 && x < 20));
        for k in [15, 20, 25] {
            let c = close_square(&bits, k);
            for (a, b) in bits.as_slice().iter().zip(c.as_slice()) {
                assert!(!a || *b);
            }
        }
    }

    #[test]
    fn holes_and_components() {
        // ring of foreground around a hole; plus an isolated pixel
        let bits = Image::from_fn(10, 10, |y, x| {
            let ring = (2..=6).contains(&y) && (2..=6).contains(&x) && !(y == 4 && x == 4);
            ring || (y == 9 && x == 9)
        });
        let holes = interior_holes(&bits);
        assert_eq!(holes.as_slice().iter().filter(|&&b| b).count(), 1);
        assert!(holes.get(4, 4));
        assert_eq!(label_components(&bits, Connectivity::Eight).1, 2);
        let diag = Image::from_fn(3, 3, |y, x| (y, x) == (0, 0) || (y, x) == (1, 1));
        assert_eq!(label_components(&diag, Connectivity::Eight).1, 1);
        assert_eq!(label_components(&diag, Connectivity::Four).1, 2);
    }
}
