//! Volume and slice containers, the `HVOL` volume format, grayscale PNG
//! codecs and the dataset manifest.

mod manifest;
mod png_io;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

pub use manifest::{
    read_manifest, write_manifest, DatasetManifest, ManifestEntry, PatchRole, Split,
};
pub use png_io::{read_png_gray, write_mask_png, write_png16};

use crate::error::{HaruError, Result};
use crate::image::Image;

/// 3D intensity grid in depth-major order, values normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    voxels: Vec<f32>,
    dims: (usize, usize, usize),
    pub voxel_size_mm: f64,
    pub id: String,
}

impl Volume {
    pub fn new(
        id: impl Into<String>,
        dims: (usize, usize, usize),
        voxels: Vec<f32>,
    ) -> Result<Self> {
        let (d, h, w) = dims;
        if d == 0 || h == 0 || w == 0 {
            return Err(HaruError::DimensionMismatch(format!(
                "volume dims must be >= 1, got {d}x{h}x{w}"
            )));
        }
        if voxels.len() != d * h * w {
            return Err(HaruError::DimensionMismatch(format!(
                "{} voxels for dims {d}x{h}x{w}",
                voxels.len()
            )));
        }
        if let Some(v) = voxels.iter().find(|v| !v.is_finite()) {
            return Err(HaruError::NonFinite(format!("voxel value {v}")));
        }
        if let Some(v) = voxels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(HaruError::Invalid(format!(
                "voxel value {v} outside [0, 1]"
            )));
        }
        Ok(Volume {
            voxels,
            dims,
            voxel_size_mm: 1.0,
            id: id.into(),
        })
    }

    /// `(depth, height, width)`
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f32 {
        let (_, h, w) = self.dims;
        self.voxels[(k * h + i) * w + j]
    }

    /// Builds a volume from axial slices, all of identical size.
    pub fn from_axial_slices(id: impl Into<String>, slices: &[Image<f32>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| HaruError::Invalid("no slices given".into()))?;
        let (h, w) = first.dims();
        let mut voxels = Vec::with_capacity(slices.len() * h * w);
        for s in slices {
            if s.dims() != (h, w) {
                return Err(HaruError::DimensionMismatch(format!(
                    "slice {}x{} differs from {}x{}",
                    s.height(),
                    s.width(),
                    h,
                    w
                )));
            }
            voxels.extend_from_slice(s.as_slice());
        }
        Volume::new(id, (slices.len(), h, w), voxels)
    }
}

/// Anatomical slicing plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Plane {
    /// Normal along depth; pixels are `(height, width)`.
    Axial,
    /// Normal along height; pixels are `(depth, width)`.
    Frontal,
    /// Normal along width; pixels are `(depth, height)`.
    Sagittal,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Axial, Plane::Frontal, Plane::Sagittal];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Axial => "axial",
            Plane::Frontal => "frontal",
            Plane::Sagittal => "sagittal",
        }
    }

    /// Number of slices and the `(height, width)` of each slice.
    pub fn extent(self, dims: (usize, usize, usize)) -> (usize, (usize, usize)) {
        let (d, h, w) = dims;
        match self {
            Plane::Axial => (d, (h, w)),
            Plane::Frontal => (h, (d, w)),
            Plane::Sagittal => (w, (d, h)),
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Plane {
    type Err = HaruError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axial" => Ok(Plane::Axial),
            "frontal" | "coronal" => Ok(Plane::Frontal),
            "sagittal" => Ok(Plane::Sagittal),
            other => Err(HaruError::Invalid(format!("unknown plane '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub pixels: Image<f32>,
    pub plane: Plane,
    pub index: usize,
    pub source_id: String,
}

impl Slice {
    /// Stable identifier `<source>_<plane>_<index>`.
    pub fn id(&self) -> String {
        slice_id(&self.source_id, self.plane, self.index)
    }
}

pub fn slice_id(source_id: &str, plane: Plane, index: usize) -> String {
    format!("{source_id}_{plane}_{index:04}")
}

/// Axis-aligned rectangle in slice pixel coordinates (`x` is the column).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl FromStr for CropRect {
    type Err = HaruError;

    /// Parses `x,y,width,height`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| HaruError::Invalid(format!("crop '{s}': {e}")))?;
        match parts.as_slice() {
            &[x, y, width, height] => Ok(CropRect {
                x,
                y,
                width,
                height,
            }),
            _ => Err(HaruError::Invalid(format!(
                "crop '{s}' must be x,y,width,height"
            ))),
        }
    }
}

/// Cuts the volume into one slice per index along the plane normal, applying
/// the same crop to every slice.
pub fn slice_volume(v: &Volume, plane: Plane, crop: Option<CropRect>) -> Result<Vec<Slice>> {
    let (count, (sh, sw)) = plane.extent(v.dims());
    let rect = crop.unwrap_or(CropRect {
        x: 0,
        y: 0,
        width: sw,
        height: sh,
    });
    if rect.width == 0 || rect.height == 0 || rect.x + rect.width > sw || rect.y + rect.height > sh
    {
        return Err(HaruError::Invalid(format!(
            "crop {:?} out of bounds for {sh}x{sw} {plane} slices",
            rect
        )));
    }
    let slices = (0..count)
        .map(|index| {
            let pixels = Image::from_fn(rect.height, rect.width, |r, c| {
                let (y, x) = (rect.y + r, rect.x + c);
                match plane {
                    Plane::Axial => v.get(index, y, x),
                    Plane::Frontal => v.get(y, index, x),
                    Plane::Sagittal => v.get(y, x, index),
                }
            });
            Slice {
                pixels,
                plane,
                index,
                source_id: v.id.clone(),
            }
        })
        .collect();
    Ok(slices)
}

/// Voxel storage type declared in the `HVOL` header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoxelType {
    U8,
    U16,
    F32,
}

impl VoxelType {
    fn bytes(self) -> usize {
        match self {
            VoxelType::U8 => 1,
            VoxelType::U16 => 2,
            VoxelType::F32 => 4,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            VoxelType::U8 => "u8",
            VoxelType::U16 => "u16",
            VoxelType::F32 => "f32",
        }
    }
}

impl FromStr for VoxelType {
    type Err = HaruError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(VoxelType::U8),
            "u16" => Ok(VoxelType::U16),
            "f32" => Ok(VoxelType::F32),
            other => Err(HaruError::Header(format!("unknown dtype '{other}'"))),
        }
    }
}

/// On-disk volume container.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolumeFormat {
    /// `HVOL v1` header followed by little-endian voxels.
    Hvol,
    /// Directory of grayscale PNGs, one axial slice per file in name order.
    PngStack,
}

impl VolumeFormat {
    pub fn detect(path: &Path) -> VolumeFormat {
        if path.is_dir() {
            VolumeFormat::PngStack
        } else {
            VolumeFormat::Hvol
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HvolHeader {
    pub dims: (usize, usize, usize),
    pub dtype: VoxelType,
    pub vmin: f64,
    pub vmax: f64,
}

impl HvolHeader {
    pub fn to_line(&self) -> String {
        let (d, h, w) = self.dims;
        format!(
            "HVOL v1 {d} {h} {w} {} {} {}\n",
            self.dtype.as_str(),
            self.vmin,
            self.vmax
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 || fields[0] != "HVOL" || fields[1] != "v1" {
            return Err(HaruError::Header(format!(
                "expected 'HVOL v1 d h w dtype vmin vmax', got '{line}'"
            )));
        }
        let dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| HaruError::Header(format!("dimension '{s}': {e}")))
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| HaruError::Header(format!("range value '{s}': {e}")))
        };
        let header = HvolHeader {
            dims: (dim(fields[2])?, dim(fields[3])?, dim(fields[4])?),
            dtype: fields[5].parse()?,
            vmin: num(fields[6])?,
            vmax: num(fields[7])?,
        };
        let (d, h, w) = header.dims;
        if d == 0 || h == 0 || w == 0 {
            return Err(HaruError::Header("dimensions must be >= 1".into()));
        }
        if !(header.vmin.is_finite() && header.vmax.is_finite() && header.vmax > header.vmin) {
            return Err(HaruError::Header(format!(
                "invalid value range [{}, {}]",
                header.vmin, header.vmax
            )));
        }
        Ok(header)
    }
}

pub fn load_volume(path: &Path, format: VolumeFormat) -> Result<Volume> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "volume".to_string());
    match format {
        VolumeFormat::Hvol => {
            let file = fs::File::open(path).map_err(|e| HaruError::io(path, e))?;
            let mut reader = BufReader::new(file);
            read_hvol(&mut reader, id)
        }
        VolumeFormat::PngStack => {
            let mut files: Vec<_> = fs::read_dir(path)
                .map_err(|e| HaruError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
                .collect();
            files.sort();
            let slices = files
                .iter()
                .map(|p| read_png_gray(p))
                .collect::<Result<Vec<_>>>()?;
            Volume::from_axial_slices(id, &slices)
        }
    }
}

/// Parses an `HVOL` stream, rescaling voxels from the declared range.
pub fn read_hvol<R: BufRead>(reader: &mut R, id: String) -> Result<Volume> {
    let mut line = Vec::new();
    reader
        .by_ref()
        .take(512)
        .read_until(b'\n', &mut line)
        .map_err(|e| HaruError::io("<hvol stream>", e))?;
    if line.last() != Some(&b'\n') {
        return Err(HaruError::Header("missing header terminator".into()));
    }
    let text = std::str::from_utf8(&line[..line.len() - 1])
        .map_err(|_| HaruError::Header("header is not ASCII".into()))?;
    let header = HvolHeader::parse(text)?;
    let (d, h, w) = header.dims;
    let count = d * h * w;
    let mut raw = vec![0u8; count * header.dtype.bytes()];
    let mut filled = 0;
    while filled < raw.len() {
        let n = reader
            .read(&mut raw[filled..])
            .map_err(|e| HaruError::io("<hvol stream>", e))?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    if filled != raw.len() {
        return Err(HaruError::DimensionMismatch(format!(
            "expected {} voxel bytes for {d}x{h}x{w} {}, found {filled}",
            raw.len(),
            header.dtype.as_str()
        )));
    }
    let mut extra = [0u8; 1];
    if reader
        .read(&mut extra)
        .map_err(|e| HaruError::io("<hvol stream>", e))?
        != 0
    {
        return Err(HaruError::DimensionMismatch(
            "trailing bytes after voxel data".into(),
        ));
    }

    let stored: Vec<f64> = match header.dtype {
        VoxelType::U8 => raw.iter().map(|&b| b as f64).collect(),
        VoxelType::U16 => raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        VoxelType::F32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    let span = header.vmax - header.vmin;
    let mut voxels = Vec::with_capacity(count);
    for v in stored {
        if !v.is_finite() {
            return Err(HaruError::NonFinite(format!("stored voxel {v}")));
        }
        if v < header.vmin || v > header.vmax {
            return Err(HaruError::Invalid(format!(
                "stored voxel {v} outside declared range [{}, {}]",
                header.vmin, header.vmax
            )));
        }
        voxels.push((((v - header.vmin) / span) as f32).clamp(0.0, 1.0));
    }
    Volume::new(id, header.dims, voxels)
}

/// Writes the volume as `HVOL`. `F32` stores the normalized values verbatim
/// with range `[0, 1]`; integer types quantize over their full range.
pub fn store_volume(v: &Volume, path: &Path, dtype: VoxelType) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| HaruError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_hvol(v, &mut out, dtype)
        .and_then(|_| out.flush())
        .map_err(|e| HaruError::io(path, e))
}

pub fn write_hvol<W: Write>(v: &Volume, out: &mut W, dtype: VoxelType) -> std::io::Result<()> {
    let vmax = match dtype {
        VoxelType::U8 => u8::MAX as f64,
        VoxelType::U16 => u16::MAX as f64,
        VoxelType::F32 => 1.0,
    };
    let header = HvolHeader {
        dims: v.dims(),
        dtype,
        vmin: 0.0,
        vmax,
    };
    let mut buf = header.to_line().into_bytes();
    buf.reserve(v.voxels.len() * dtype.bytes());
    for &x in &v.voxels {
        match dtype {
            VoxelType::U8 => buf.push((x as f64 * vmax).round() as u8),
            VoxelType::U16 => {
                buf.extend_from_slice(&((x as f64 * vmax).round() as u16).to_le_bytes())
            }
            VoxelType::F32 => buf.extend_from_slice(&x.to_le_bytes()),
        }
    }
    out.write_all(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(seed: u64, dims: (usize, usize, usize)) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.0 * dims.1 * dims.2;
        let voxels = (0..n).map(|_| rng.random::<f32>()).collect();
        Volume::new("rand", dims, voxels).unwrap()
    }

    #[test]
    fn u16_midpoint_rescales_to_half() {
        let mut bytes = b"HVOL v1 4 4 4 u16 0 65535\n".to_vec();
        for _ in 0..64 {
            bytes.extend_from_slice(&32768u16.to_le_bytes());
        }
        let v = read_hvol(&mut bytes.as_slice(), "x".into()).unwrap();
        assert_eq!(v.dims(), (4, 4, 4));
        for &x in v.voxels() {
            assert!((x - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn short_file_is_dimension_mismatch() {
        let mut bytes = b"HVOL v1 4 4 4 u8 0 255\n".to_vec();
        bytes.extend_from_slice(&[0u8; 63]);
        let err = read_hvol(&mut bytes.as_slice(), "x".into()).unwrap_err();
        assert!(matches!(err, HaruError::DimensionMismatch(_)), "{err}");
    }

    #[test]
    fn malformed_header_and_nonfinite_rejected() {
        let mut bad = b"HVOL v2 1 1 1 u8 0 255\n\x00".to_vec();
        assert!(matches!(
            read_hvol(&mut bad.as_slice(), "x".into()),
            Err(HaruError::Header(_))
        ));
        bad = b"HVOL v1 1 1 1 f32 0 1\n".to_vec();
        bad.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            read_hvol(&mut bad.as_slice(), "x".into()),
            Err(HaruError::NonFinite(_))
        ));
    }

    #[test]
    fn f32_round_trip_is_bitwise() {
        let v = random_volume(3, (3, 5, 7));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rand.hvol");
        store_volume(&v, &path, VoxelType::F32).unwrap();
        let back = load_volume(&path, VolumeFormat::Hvol).unwrap();
        assert_eq!(back.dims(), v.dims());
        for (a, b) in v.voxels().iter().zip(back.voxels()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn normalization_preserves_order() {
        let mut bytes = b"HVOL v1 1 1 5 u16 100 1100\n".to_vec();
        for raw in [100u16, 350, 351, 900, 1100] {
            bytes.extend_from_slice(&raw.to_le_bytes());
        }
        let v = read_hvol(&mut bytes.as_slice(), "x".into()).unwrap();
        assert!(v.voxels().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(v.voxels()[0], 0.0);
        assert_eq!(v.voxels()[4], 1.0);
    }

    #[test]
    fn slice_shapes_and_crop() {
        let v = Volume::new("z", (10, 256, 256), vec![0.0; 10 * 256 * 256]).unwrap();
        let s = slice_volume(&v, Plane::Axial, None).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s[0].pixels.dims(), (256, 256));
        let crop = "0,0,128,128".parse().ok();
        let s = slice_volume(&v, Plane::Axial, crop).unwrap();
        assert_eq!(s[3].pixels.dims(), (128, 128));
        let s = slice_volume(&v, Plane::Sagittal, None).unwrap();
        assert_eq!((s.len(), s[0].pixels.dims()), (256, (10, 256)));
        let bad = CropRect {
            x: 200,
            y: 0,
            width: 100,
            height: 10,
        };
        assert!(slice_volume(&v, Plane::Axial, Some(bad)).is_err());
    }

    #[test]
    fn slices_index_the_volume_and_partition_it() {
        let v = random_volume(11, (4, 6, 5));
        let (d, h, w) = v.dims();
        for plane in Plane::ALL {
            let slices = slice_volume(&v, plane, None).unwrap();
            let mut seen = vec![0u32; d * h * w];
            for s in &slices {
                for r in 0..s.pixels.height() {
                    for c in 0..s.pixels.width() {
                        let (k, i, j) = match plane {
                            Plane::Axial => (s.index, r, c),
                            Plane::Frontal => (r, s.index, c),
                            Plane::Sagittal => (r, c, s.index),
                        };
                        assert_eq!(s.pixels.get(r, c), v.get(k, i, j));
                        seen[(k * h + i) * w + j] += 1;
                    }
                }
            }
            assert!(seen.iter().all(|&n| n == 1), "{plane} is not a partition");
        }
    }
}
