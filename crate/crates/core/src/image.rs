//! Row-major 2D grid used for slices, patches and masks.

use crate::error::{HaruError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Image {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(HaruError::DimensionMismatch(format!(
                "{} values for a {}x{} image",
                data.len(),
                height,
                width
            )));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies the `h x w` window whose top-left corner is `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<Image<T>> {
        if y + h > self.height || x + w > self.width {
            return Err(HaruError::DimensionMismatch(format!(
                "crop {}x{} at ({}, {}) exceeds {}x{} image",
                h, w, y, x, self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(h * w);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Image {
            height: h,
            width: w,
            data,
        })
    }

    pub fn same_dims<U>(&self, other: &Image<U>) -> bool {
        self.height == other.height && self.width == other.width
    }
}

pub(crate) fn check_same_dims<A, B>(a: &Image<A>, b: &Image<B>) -> Result<()> {
    if a.height != b.height || a.width != b.width {
        return Err(HaruError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_copies_window() {
        let img = Image::from_fn(4, 5, |y, x| (y * 10 + x) as i32);
        let c = img.crop(1, 2, 2, 3).unwrap();
        assert_eq!(c.as_slice(), &[12, 13, 14, 22, 23, 24]);
        assert!(img.crop(3, 0, 2, 1).is_err());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Image::from_vec(2, 2, vec![0u8; 3]).is_err());
    }
}
