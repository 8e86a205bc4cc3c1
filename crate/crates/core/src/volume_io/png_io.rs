use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{HaruError, Result};
use crate::image::Image;

fn codec<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> HaruError + '_ {
    move |e| HaruError::Codec(format!("{}: {e}", path.display()))
}

/// Writes `[0, 1]` intensities as a 16-bit grayscale PNG.
pub fn write_png16(path: &Path, img: &Image<f32>) -> Result<()> {
    let file = File::create(path).map_err(|e| HaruError::io(path, e))?;
    let mut enc = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(codec(path))?;
    let mut data = Vec::with_capacity(img.len() * 2);
    for &v in img.as_slice() {
        let q = (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16;
        data.extend_from_slice(&q.to_be_bytes());
    }
    writer.write_image_data(&data).map_err(codec(path))?;
    writer.finish().map_err(codec(path))
}

/// Writes a mask as a 1-bit grayscale PNG (foreground = white).
pub fn write_mask_png(path: &Path, mask: &Image<bool>) -> Result<()> {
    let file = File::create(path).map_err(|e| HaruError::io(path, e))?;
    let (h, w) = mask.dims();
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(BitDepth::One);
    let mut writer = enc.write_header().map_err(codec(path))?;
    let row_bytes = w.div_ceil(8);
    let mut data = vec![0u8; row_bytes * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                data[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    writer.write_image_data(&data).map_err(codec(path))?;
    writer.finish().map_err(codec(path))
}

/// Reads a grayscale PNG of any bit depth into `[0, 1]` intensities.
pub fn read_png_gray(path: &Path) -> Result<Image<f32>> {
    let file = File::open(path).map_err(|e| HaruError::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(codec(path))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| HaruError::Codec(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(codec(path))?;
    if info.color_type != ColorType::Grayscale {
        return Err(HaruError::Codec(format!(
            "{}: expected grayscale, found {:?}",
            path.display(),
            info.color_type
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let line = info.line_size;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &buf[y * line..(y + 1) * line];
        match info.bit_depth {
            BitDepth::Sixteen => data.extend(
                row.chunks_exact(2)
                    .take(w)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0),
            ),
            BitDepth::Eight => data.extend(row.iter().take(w).map(|&b| b as f32 / 255.0)),
            other => {
                return Err(HaruError::Codec(format!(
                    "{}: unsupported bit depth {other:?}",
                    path.display()
                )))
            }
        }
    }
    Image::from_vec(h, w, data)
}
