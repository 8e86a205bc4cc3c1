//! Bounding boxes of segmented tissue and fixed-size patch placement inside
//! them, plus assembly of the paired noisy/clean patch corpus.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{HaruError, Result};
use crate::image::Image;
use crate::morphology::{label_components, Connectivity};
use crate::noise::{add_noise, NoiseParams};
use crate::segmentation::{segment_slice, BinaryMask, MaskStage, SegmentationConfig};
use crate::volume_io::{
    slice_volume, write_manifest, write_png16, CropRect, DatasetManifest, ManifestEntry, PatchRole,
    Plane, Slice, Split, Volume,
};

pub const DEFAULT_PATCH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        BoundingBox { x, y, w, h }
    }

    /// Inclusive containment of `other` in `self`.
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.w <= self.x + self.w
            && other.y + other.h <= self.y + self.h
    }

    pub fn contains_point(&self, y: usize, x: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchRecord {
    pub x: usize,
    pub y: usize,
    pub size: (usize, usize),
    pub source_id: String,
    /// Set for patches anchored flush against the box's right/bottom edge.
    pub overlap: bool,
}

impl PatchRecord {
    pub fn bounds(&self) -> BoundingBox {
        BoundingBox::new(self.x, self.y, self.size.1, self.size.0)
    }
}

/// One tight box per 8-connected foreground component, in discovery order.
pub fn extract_bounding_boxes(m: &BinaryMask) -> Result<Vec<BoundingBox>> {
    if m.stage != MaskStage::Mf {
        return Err(HaruError::Invalid(format!(
            "bounding boxes need an Mf mask, got {:?}",
            m.stage
        )));
    }
    let (labels, count) = label_components(&m.bits, Connectivity::Eight);
    let mut extents = vec![(usize::MAX, usize::MAX, 0usize, 0usize); count as usize];
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let l = labels.get(y, x);
            if l == 0 {
                continue;
            }
            let e = &mut extents[l as usize - 1];
            e.0 = e.0.min(x);
            e.1 = e.1.min(y);
            e.2 = e.2.max(x);
            e.3 = e.3.max(y);
        }
    }
    Ok(extents
        .into_iter()
        .map(|(x0, y0, x1, y1)| BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
        .collect())
}

/// Drops every box contained in another; of identical boxes the first is kept.
pub fn remove_nested_boxes(boxes: &[BoundingBox]) -> Vec<BoundingBox> {
    boxes
        .iter()
        .enumerate()
        .filter(|&(i, b)| {
            !boxes
                .iter()
                .enumerate()
                .any(|(j, o)| j != i && o.contains(b) && (o != b || j < i))
        })
        .map(|(_, b)| *b)
        .collect()
}

/// Grows `[start, start+len)` symmetrically to `patch`, shifted into `[0, limit)`.
fn extend_span(start: usize, len: usize, patch: usize, limit: usize) -> (usize, usize) {
    if len >= patch {
        return (start, len);
    }
    let before = (patch - len) / 2;
    let s = start.saturating_sub(before).min(limit - patch);
    (s, patch)
}

/// Anchor positions covering `[start, start+len)`: a regular grid plus one
/// flush anchor for the residual strip.
fn anchors(start: usize, len: usize, patch: usize) -> Vec<(usize, bool)> {
    let mut out: Vec<(usize, bool)> = (0..len / patch)
        .map(|i| (start + i * patch, false))
        .collect();
    if len % patch != 0 {
        out.push((start + len - patch, true));
    }
    out
}

/// Covers a box with `patch x patch` windows anchored at the box's top-left.
pub fn tile_patches(
    b: &BoundingBox,
    patch: usize,
    slice_dims: (usize, usize),
    source_id: &str,
) -> Result<Vec<PatchRecord>> {
    let (sh, sw) = slice_dims;
    if patch == 0 || sh < patch || sw < patch {
        return Err(HaruError::Invalid(format!(
            "slice {sh}x{sw} is smaller than the {patch}x{patch} patch"
        )));
    }
    if b.w == 0 || b.h == 0 || b.x + b.w > sw || b.y + b.h > sh {
        return Err(HaruError::Invalid(format!(
            "box {b:?} lies outside the {sh}x{sw} slice"
        )));
    }
    let (x0, w) = extend_span(b.x, b.w, patch, sw);
    let (y0, h) = extend_span(b.y, b.h, patch, sh);
    let xs = anchors(x0, w, patch);
    let ys = anchors(y0, h, patch);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &(y, fy) in &ys {
        for &(x, fx) in &xs {
            out.push(PatchRecord {
                x,
                y,
                size: (patch, patch),
                source_id: source_id.to_string(),
                overlap: fx || fy,
            });
        }
    }
    Ok(out)
}

/// Boxes of a mask after containment removal, and the patches covering them.
pub fn plan_patches(
    mf: &BinaryMask,
    patch: usize,
    source_id: &str,
) -> Result<(Vec<BoundingBox>, Vec<PatchRecord>)> {
    let boxes = remove_nested_boxes(&extract_bounding_boxes(mf)?);
    let mut records = Vec::new();
    for b in &boxes {
        records.extend(tile_patches(b, patch, mf.bits.dims(), source_id)?);
    }
    Ok((boxes, records))
}

/// Seeded per-volume split. With fewer volumes than non-empty splits the
/// volumes go to train, then val, then test.
pub fn assign_splits(
    volume_ids: &[String],
    fractions: [f64; 3],
    seed: u64,
) -> Result<HashMap<String, Split>> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0))
        || fractions.iter().sum::<f64>() <= 0.0
    {
        return Err(HaruError::Config(format!(
            "invalid split fractions {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    let frac = fractions.map(|f| f / total);
    let mut ids = volume_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let wanted = frac.iter().filter(|&&f| f > 0.0).count();
    let splits = [Split::Train, Split::Val, Split::Test];
    let mut counts = [0usize; 3];
    if n < wanted {
        let mut left = n;
        for (i, f) in frac.iter().enumerate() {
            if *f > 0.0 && left > 0 {
                counts[i] = 1;
                left -= 1;
            }
        }
    } else {
        for i in 1..3 {
            if frac[i] > 0.0 {
                counts[i] = ((n as f64 * frac[i]).round() as usize).max(1);
            }
        }
        counts[0] = n.saturating_sub(counts[1] + counts[2]);
        if frac[0] > 0.0 && counts[0] == 0 {
            return Err(HaruError::Config(format!(
                "{n} volumes cannot fill the split {fractions:?}"
            )));
        }
    }
    let mut out = HashMap::new();
    let mut it = ids.into_iter();
    for (split, count) in splits.iter().zip(counts) {
        for id in it.by_ref().take(count) {
            out.insert(id, *split);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PatchingConfig {
    pub patch: usize,
    pub planes: Vec<Plane>,
    pub crop: Option<CropRect>,
    pub split: [f64; 3],
    pub split_seed: u64,
    pub segmentation: SegmentationConfig,
}

impl Default for PatchingConfig {
    fn default() -> Self {
        PatchingConfig {
            patch: DEFAULT_PATCH,
            planes: vec![Plane::Axial],
            crop: None,
            split: [0.7, 0.15, 0.15],
            split_seed: 0,
            segmentation: SegmentationConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PatchPair {
    pub pair_id: u64,
    pub split: Split,
    pub slice_index: usize,
    pub plane: Plane,
    pub volume_id: String,
    pub record: PatchRecord,
    pub clean: Image<f32>,
    pub noisy: Image<f32>,
}

/// In-memory corpus; `manifest` lists the files `write_to` would produce.
#[derive(Clone, Debug)]
pub struct PatchDataset {
    pub manifest: DatasetManifest,
    pub pairs: Vec<PatchPair>,
    /// Slices whose final mask was empty and so produced no patches.
    pub empty_slices: usize,
}

impl PatchDataset {
    pub fn pairs_in(&self, split: Split) -> impl Iterator<Item = &PatchPair> {
        self.pairs.iter().filter(move |p| p.split == split)
    }

    /// Writes `patches/*.png` and `manifest.tsv` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let patch_dir = dir.join("patches");
        fs::create_dir_all(&patch_dir).map_err(|e| HaruError::io(&patch_dir, e))?;
        self.pairs.par_iter().try_for_each(|p| -> Result<()> {
            write_png16(&dir.join(patch_path(p.pair_id, PatchRole::Noisy)), &p.noisy)?;
            write_png16(&dir.join(patch_path(p.pair_id, PatchRole::Clean)), &p.clean)
        })?;
        write_manifest(&self.manifest, &dir.join("manifest.tsv"))
    }
}

pub fn patch_path(pair_id: u64, role: PatchRole) -> String {
    format!("patches/{pair_id:06}_{}.png", role.as_str())
}

struct SliceOutput {
    records: Vec<PatchRecord>,
    clean: Vec<Image<f32>>,
    noisy: Vec<Image<f32>>,
}

fn process_slice(slice: &Slice, cfg: &PatchingConfig, noise: &NoiseParams) -> Result<SliceOutput> {
    let mf = segment_slice(&slice.pixels, &cfg.segmentation)?;
    let (_, records) = plan_patches(&mf, cfg.patch, &slice.id())?;
    if records.is_empty() {
        return Ok(SliceOutput {
            records,
            clean: Vec::new(),
            noisy: Vec::new(),
        });
    }
    let noisy_slice = add_noise(slice, noise);
    let mut clean = Vec::with_capacity(records.len());
    let mut noisy = Vec::with_capacity(records.len());
    for r in &records {
        clean.push(slice.pixels.crop(r.y, r.x, r.size.0, r.size.1)?);
        noisy.push(noisy_slice.pixels.crop(r.y, r.x, r.size.0, r.size.1)?);
    }
    Ok(SliceOutput {
        records,
        clean,
        noisy,
    })
}

/// Segments every slice of every requested plane, tiles the tissue boxes and
/// pairs each clean patch with its noisy counterpart.
pub fn build_patch_dataset(
    volumes: &[Volume],
    cfg: &PatchingConfig,
    noise: &NoiseParams,
) -> Result<PatchDataset> {
    let ids: Vec<String> = volumes.iter().map(|v| v.id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(HaruError::Invalid("volume ids must be unique".into()));
    }
    let splits = assign_splits(&ids, cfg.split, cfg.split_seed)?;
    let mut manifest = DatasetManifest::new(*noise, cfg.split_seed);
    let mut pairs = Vec::new();
    let mut empty_slices = 0;
    let mut next_id = 0u64;

    for v in volumes {
        let split = splits[&v.id];
        for &plane in &cfg.planes {
            let slices = slice_volume(v, plane, cfg.crop)?;
            if let Some(s) = slices.first() {
                let (h, w) = s.pixels.dims();
                if h < cfg.patch || w < cfg.patch {
                    return Err(HaruError::Invalid(format!(
                        "{plane} slices of '{}' are {h}x{w}, smaller than patch {}",
                        v.id, cfg.patch
                    )));
                }
            }
            let outputs: Vec<SliceOutput> = slices
                .par_iter()
                .map(|s| process_slice(s, cfg, noise))
                .collect::<Result<_>>()?;
            for (slice, out) in slices.iter().zip(outputs) {
                if out.records.is_empty() {
                    empty_slices += 1;
                    continue;
                }
                for ((record, clean), noisy) in
                    out.records.into_iter().zip(out.clean).zip(out.noisy)
                {
                    let pair_id = next_id;
                    next_id += 1;
                    for role in [PatchRole::Noisy, PatchRole::Clean] {
                        manifest.entries.push(ManifestEntry {
                            path: patch_path(pair_id, role),
                            role,
                            pair_id,
                            split,
                            volume_id: v.id.clone(),
                            plane,
                            slice_index: slice.index,
                            x: record.x,
                            y: record.y,
                            width: record.size.1,
                            height: record.size.0,
                            overlap: record.overlap,
                        });
                    }
                    pairs.push(PatchPair {
                        pair_id,
                        split,
                        slice_index: slice.index,
                        plane,
                        volume_id: v.id.clone(),
                        record,
                        clean,
                        noisy,
                    });
                }
            }
        }
    }
    Ok(PatchDataset {
        manifest,
        pairs,
        empty_slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mf(bits: Image<bool>) -> BinaryMask {
        BinaryMask {
            bits,
            stage: MaskStage::Mf,
        }
    }

    #[test]
    fn boxes_of_simple_masks() {
        assert!(extract_bounding_boxes(&mf(Image::filled(16, 16, false)))
            .unwrap()
            .is_empty());
        let rect = Image::from_fn(40, 40, |y, x| (7..17).contains(&y) && (5..25).contains(&x));
        assert_eq!(
            extract_bounding_boxes(&mf(rect)).unwrap(),
            vec![BoundingBox::new(5, 7, 20, 10)]
        );
        let diag = Image::from_fn(8, 8, |y, x| (y, x) == (3, 3) || (y, x) == (4, 4));
        assert_eq!(
            extract_bounding_boxes(&mf(diag)).unwrap(),
            vec![BoundingBox::new(3, 3, 2, 2)]
        );
    }

    #[test]
    fn nested_removal_examples() {
        let outer = BoundingBox::new(0, 0, 100, 100);
        let inner = BoundingBox::new(10, 10, 20, 20);
        assert_eq!(remove_nested_boxes(&[outer, inner]), vec![outer]);
        assert_eq!(remove_nested_boxes(&[inner, outer]), vec![outer]);
        let a = BoundingBox::new(0, 0, 10, 10);
        let b = BoundingBox::new(50, 50, 10, 10);
        assert_eq!(remove_nested_boxes(&[a, b]), vec![a, b]);
        let p = BoundingBox::new(0, 0, 50, 50);
        let q = BoundingBox::new(25, 25, 50, 50);
        assert_eq!(remove_nested_boxes(&[p, q]), vec![p, q]);
        assert_eq!(remove_nested_boxes(&[p, p, q]), vec![p, q]);
    }

    fn origins(r: &[PatchRecord]) -> Vec<(usize, usize, bool)> {
        r.iter().map(|p| (p.x, p.y, p.overlap)).collect()
    }

    #[test]
    fn tiling_examples() {
        let dims = (512, 512);
        let one = tile_patches(&BoundingBox::new(0, 0, 256, 256), 256, dims, "s").unwrap();
        assert_eq!(origins(&one), vec![(0, 0, false)]);
        let four = tile_patches(&BoundingBox::new(0, 0, 300, 300), 256, dims, "s").unwrap();
        assert_eq!(
            origins(&four),
            vec![(0, 0, false), (44, 0, true), (0, 44, true), (44, 44, true)]
        );
        let small = tile_patches(&BoundingBox::new(200, 200, 100, 100), 256, dims, "s").unwrap();
        assert_eq!(origins(&small), vec![(122, 122, false)]);
        // extension shifted inward at the border
        let edge = tile_patches(&BoundingBox::new(480, 0, 32, 10), 256, dims, "s").unwrap();
        assert_eq!(origins(&edge), vec![(256, 0, false)]);
        assert!(tile_patches(&BoundingBox::new(0, 0, 10, 10), 256, (200, 512), "s").is_err());
    }

    #[test]
    fn split_assignment() {
        let ids: Vec<String> = (0..20).map(|i| format!("v{i:02}")).collect();
        let s = assign_splits(&ids, [0.7, 0.15, 0.15], 3).unwrap();
        let count = |sp| s.values().filter(|&&v| v == sp).count();
        assert_eq!(
            (count(Split::Train), count(Split::Val), count(Split::Test)),
            (14, 3, 3)
        );
        assert_eq!(s, assign_splits(&ids, [0.7, 0.15, 0.15], 3).unwrap());
        let one = assign_splits(&ids[..1], [0.7, 0.15, 0.15], 3).unwrap();
        assert_eq!(one["v00"], Split::Train);
        let three = assign_splits(&ids[..3], [0.7, 0.15, 0.15], 9).unwrap();
        assert_eq!(three.values().filter(|&&v| v == Split::Val).count(), 1);
    }

    #[test]
    fn zero_foreground_volume_gives_empty_manifest() {
        let v = Volume::new("empty", (2, 64, 64), vec![0.0; 2 * 64 * 64]).unwrap();
        let cfg = PatchingConfig {
            patch: 64,
            ..Default::default()
        };
        let ds = build_patch_dataset(&[v], &cfg, &NoiseParams::default()).unwrap();
        assert!(ds.manifest.entries.is_empty());
        assert_eq!(ds.empty_slices, 2);
    }
}
