//! Paired noisy/clean patches grouped by split.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{HaruError, Result};
use crate::image::Image;
use crate::nn::Tensor;
use crate::patching::PatchDataset;
use crate::scalar::Scalar;
use crate::volume_io::{read_png_gray, DatasetManifest, Split};

#[derive(Clone, Debug, Default)]
pub struct PairSet {
    pub noisy: Vec<Image<f32>>,
    pub clean: Vec<Image<f32>>,
}

/// `[B, 1, H, W]` inputs and targets.
pub struct PairBatch<T> {
    pub noisy: Tensor<T>,
    pub clean: Tensor<T>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.noisy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy.is_empty()
    }

    pub fn push(&mut self, noisy: Image<f32>, clean: Image<f32>) -> Result<()> {
        if !noisy.same_dims(&clean) {
            return Err(HaruError::DimensionMismatch(
                "noisy and clean patch differ in size".into(),
            ));
        }
        if let Some(first) = self.noisy.first() {
            if !first.same_dims(&noisy) {
                return Err(HaruError::DimensionMismatch(
                    "patches of mixed sizes".into(),
                ));
            }
        }
        self.noisy.push(noisy);
        self.clean.push(clean);
        Ok(())
    }

    pub fn patch_dims(&self) -> Option<(usize, usize)> {
        self.noisy.first().map(|p| p.dims())
    }

    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Result<PairBatch<T>> {
        let (h, w) = self
            .patch_dims()
            .ok_or_else(|| HaruError::Invalid("empty pair set".into()))?;
        let pack = |imgs: &[Image<f32>]| -> Result<Tensor<T>> {
            let mut data = Vec::with_capacity(indices.len() * h * w);
            for &i in indices {
                data.extend(imgs[i].as_slice().iter().map(|&v| T::of(v as f64)));
            }
            Tensor::from_vec(&[indices.len(), 1, h, w], data)
        };
        Ok(PairBatch {
            noisy: pack(&self.noisy)?,
            clean: pack(&self.clean)?,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainingData {
    pub train: PairSet,
    pub val: PairSet,
    pub test: PairSet,
}

impl TrainingData {
    pub fn split(&self, split: Split) -> &PairSet {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut PairSet {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn from_dataset(ds: &PatchDataset) -> Result<Self> {
        let mut out = TrainingData::default();
        for p in &ds.pairs {
            out.split_mut(p.split)
                .push(p.noisy.clone(), p.clean.clone())?;
        }
        Ok(out)
    }

    /// Loads every pair listed in `manifest`; paths are relative to `base`.
    pub fn from_manifest(manifest: &DatasetManifest, base: &Path) -> Result<Self> {
        manifest.validate()?;
        let mut out = TrainingData::default();
        for split in [Split::Train, Split::Val, Split::Test] {
            let pairs = manifest.pairs(split);
            let loaded: Vec<(Image<f32>, Image<f32>)> = pairs
                .par_iter()
                .map(|(noisy, clean)| {
                    Ok((
                        read_png_gray(&base.join(&noisy.path))?,
                        read_png_gray(&base.join(&clean.path))?,
                    ))
                })
                .collect::<Result<_>>()?;
            for (n, c) in loaded {
                out.split_mut(split).push(n, c)?;
            }
        }
        Ok(out)
    }
}
