//! Segmentation, patching and noise simulation on synthetic slices.

mod common;

use common::oracles::{cavity_phantom, ellipse_mask, iou, nested_oracle};
use haru_core::morphology::count_interior_holes;
use haru_core::noise::{add_noise_image, measure_residual_stats, NoiseParams};
use haru_core::patching::{
    build_patch_dataset, plan_patches, remove_nested_boxes, tile_patches, BoundingBox,
    PatchingConfig,
};
use haru_core::segmentation::{segment_slice, segment_slice_stages, SegmentationConfig};
use haru_core::training::generate_phantom_volume;
use haru_core::volume_io::{slice_volume, Plane, Split};
use haru_core::Image;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise() -> NoiseParams {
    NoiseParams::new(0.04, 0.02, 5, true).unwrap()
}

#[test]
fn disks_with_holes_are_filled() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let cy = rng.random_range(50.0..78.0);
        let cx = rng.random_range(50.0..78.0);
        let r = rng.random_range(30.0..45.0);
        let hole = rng.random_range(4.0..12.0);
        let disk = ellipse_mask(128, 128, (cy, cx), (r, r));
        let gap = ellipse_mask(128, 128, (cy, cx), (hole, hole));
        let img = Image::from_fn(128, 128, |y, x| {
            if gap.get(y, x) {
                0.1
            } else if disk.get(y, x) {
                0.9
            } else {
                0.0
            }
        });
        let mf = segment_slice(&img, &SegmentationConfig::default()).unwrap();
        assert_eq!(count_interior_holes(&mf.bits), 0);
        assert!(gap
            .as_slice()
            .iter()
            .zip(mf.bits.as_slice())
            .all(|(g, m)| !g || *m));
    }
}

#[test]
fn masks_grow_monotonically_on_phantoms() {
    let cfg = SegmentationConfig::default();
    let mut checked = 0;
    for seed in 0..50u64 {
        let v = generate_phantom_volume(seed, (3, 64, 64)).unwrap();
        let slice = &slice_volume(&v, Plane::Axial, None).unwrap()[1];
        let s = segment_slice_stages(&slice.pixels, &cfg).unwrap();
        assert!(s.m0.is_subset_of(&s.m1), "seed {seed}");
        assert!(s.m1.is_subset_of(&s.mf), "seed {seed}");
        assert_eq!(count_interior_holes(&s.mf.bits), 0, "seed {seed}");
        checked += 1;
    }
    assert_eq!(checked, 50);
}

#[test]
fn ellipse_phantom_overlap() {
    let (img, truth) = cavity_phantom(512);
    let cfg = SegmentationConfig::default();
    let clean = segment_slice(&img, &cfg).unwrap();
    assert!(iou(&clean.bits, &truth) >= 0.95);
    let noisy = add_noise_image(&img, &noise(), 3);
    let m = segment_slice(&noisy, &cfg).unwrap();
    assert!(iou(&m.bits, &truth) >= 0.90);
}

#[test]
fn tiling_matches_worked_examples() {
    let origins = |b: BoundingBox| -> Vec<(usize, usize, bool)> {
        tile_patches(&b, 256, (512, 512), "s")
            .unwrap()
            .iter()
            .map(|r| (r.x, r.y, r.overlap))
            .collect()
    };
    assert_eq!(origins(BoundingBox::new(0, 0, 256, 256)), [(0, 0, false)]);
    assert_eq!(
        origins(BoundingBox::new(0, 0, 300, 300)),
        [(0, 0, false), (44, 0, true), (0, 44, true), (44, 44, true)]
    );
    assert_eq!(
        origins(BoundingBox::new(200, 200, 100, 100)),
        [(122, 122, false)]
    );
    assert!(tile_patches(&BoundingBox::new(0, 0, 10, 10), 256, (200, 512), "s").is_err());
}

/// Every Mf pixel of a retained box is covered, unflagged patches of a box
/// are disjoint and every patch lies inside the slice.
fn audit_slice(img: &Image<f32>, patch: usize) {
    let mf = segment_slice(img, &SegmentationConfig::default()).unwrap();
    let (boxes, records) = plan_patches(&mf, patch, "s").unwrap();
    let (h, w) = img.dims();
    let mut cover = Image::filled(h, w, 0u32);
    for r in &records {
        assert_eq!(r.size, (patch, patch));
        assert!(r.x + patch <= w && r.y + patch <= h);
        for y in r.y..r.y + patch {
            for x in r.x..r.x + patch {
                cover.set(y, x, cover.get(y, x) + 1);
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            if mf.bits.get(y, x) && boxes.iter().any(|b| b.contains_point(y, x)) {
                assert!(cover.get(y, x) > 0, "pixel ({y}, {x}) uncovered");
            }
        }
    }
    for b in &boxes {
        let recs = tile_patches(b, patch, (h, w), "s").unwrap();
        let plain: Vec<_> = recs.iter().filter(|r| !r.overlap).collect();
        for (i, p) in plain.iter().enumerate() {
            for q in &plain[i + 1..] {
                assert!(
                    p.x + patch <= q.x
                        || q.x + patch <= p.x
                        || p.y + patch <= q.y
                        || q.y + patch <= p.y
                );
            }
        }
    }
}

#[test]
fn patches_cover_tissue_on_random_phantoms() {
    for seed in 0..8u64 {
        let v = generate_phantom_volume(seed, (2, 150, 170)).unwrap();
        for s in slice_volume(&v, Plane::Axial, None).unwrap() {
            audit_slice(&s.pixels, 64);
        }
    }
}

#[test]
fn dataset_pairs_share_geometry_and_are_reproducible() {
    let vols: Vec<_> = (0..4u64)
        .map(|s| generate_phantom_volume(s, (4, 96, 96)).unwrap())
        .collect();
    let cfg = PatchingConfig {
        patch: 64,
        split: [0.5, 0.25, 0.25],
        ..PatchingConfig::default()
    };
    let a = build_patch_dataset(&vols, &cfg, &noise()).unwrap();
    let b = build_patch_dataset(&vols, &cfg, &noise()).unwrap();
    assert_eq!(a.manifest.to_text(), b.manifest.to_text());
    assert_eq!(a.manifest.entries.len(), 2 * a.pairs.len());
    a.manifest.validate().unwrap();
    for (p, q) in a.pairs.iter().zip(&b.pairs) {
        assert_eq!(p.clean.dims(), (64, 64));
        assert_eq!(p.noisy.dims(), p.clean.dims());
        assert_eq!(p.noisy, q.noisy);
    }
    for split in [Split::Train, Split::Val, Split::Test] {
        assert!(a.pairs_in(split).count() > 0, "{split:?} empty");
    }
}

#[test]
fn noise_residual_statistics() {
    let clean = Image::filled(512, 512, 0.5f32);
    let p = NoiseParams::new(0.03, 0.04, 17, false).unwrap();
    let noisy = add_noise_image(&clean, &p, 0);
    let (mean, var) = measure_residual_stats(&noisy, &clean).unwrap();
    assert!((var - 0.0025).abs() < 0.0025 * 0.03);
    assert!(mean.abs() < 5.0 * 0.05 / 512.0);
}

#[test]
fn noise_is_gaussian_and_white() {
    let n = 1024;
    let clean = Image::filled(n, n, 0.5f32);
    let p = NoiseParams::new(0.03, 0.04, 23, false).unwrap();
    let r: Vec<f64> = add_noise_image(&clean, &p, 1)
        .as_slice()
        .iter()
        .map(|&v| f64::from(v) - 0.5)
        .collect();
    let len = r.len() as f64;
    let mean = r.iter().sum::<f64>() / len;
    let m = |k: i32| r.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / len;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let skew = m3 / m2.powf(1.5);
    let excess = m4 / (m2 * m2) - 3.0;
    assert!(skew.abs() < 0.05, "skew {skew}");
    assert!(excess.abs() < 0.1, "excess kurtosis {excess}");
    let lag: f64 = (0..r.len() - n)
        .map(|i| (r[i] - mean) * (r[i + n] - mean))
        .sum::<f64>()
        / (m2 * len);
    assert!(lag.abs() < 0.01, "vertical lag-1 correlation {lag}");
}

fn arb_boxes() -> impl Strategy<Value = Vec<(usize, usize, usize, usize)>> {
    prop::collection::vec((0usize..40, 0usize..40, 1usize..30, 1usize..30), 0..14)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nested_removal_matches_quadratic_oracle(raw in arb_boxes(), dup in any::<bool>()) {
        let mut raw = raw;
        if dup && !raw.is_empty() {
            raw.push(raw[0]);
        }
        let boxes: Vec<BoundingBox> = raw.iter().map(|&(x, y, w, h)| BoundingBox::new(x, y, w, h)).collect();
        let got: Vec<_> = remove_nested_boxes(&boxes).iter().map(|b| (b.x, b.y, b.w, b.h)).collect();
        prop_assert_eq!(&got, &nested_oracle(&raw));
        for (i, a) in got.iter().enumerate() {
            for (j, b) in got.iter().enumerate() {
                let ba = BoundingBox::new(a.0, a.1, a.2, a.3);
                let bb = BoundingBox::new(b.0, b.1, b.2, b.3);
                prop_assert!(i == j || !ba.contains(&bb));
            }
        }
    }

    #[test]
    fn tiles_cover_their_box(x in 0usize..200, y in 0usize..200, w in 1usize..200, h in 1usize..200) {
        let (sh, sw) = (300usize, 320usize);
        let (w, h) = (w.min(sw - x), h.min(sh.saturating_sub(y)).max(1));
        prop_assume!(y + h <= sh);
        let b = BoundingBox::new(x, y, w, h);
        let recs = tile_patches(&b, 64, (sh, sw), "s").unwrap();
        for yy in y..y + h {
            for xx in x..x + w {
                prop_assert!(recs.iter().any(|r| r.bounds().contains_point(yy, xx)));
            }
        }
        let plain: Vec<_> = recs.iter().filter(|r| !r.overlap).collect();
        for (i, a) in plain.iter().enumerate() {
            for c in &plain[i + 1..] {
                prop_assert!(a.x + 64 <= c.x || c.x + 64 <= a.x || a.y + 64 <= c.y || c.y + 64 <= a.y);
            }
        }
        for r in &recs {
            prop_assert!(r.x + 64 <= sw && r.y + 64 <= sh);
        }
    }
}
