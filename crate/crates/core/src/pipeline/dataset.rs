//! Dataset ingestion: load a directory of PNGs, normalize, and build the
//! per-stage bicubic pyramid every training stage pulls from.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::GanDataset;
use crate::error::{Error, Result};
use crate::imageio;
use crate::resample::{resample, KernelKind, ResampleKernel};
use crate::tensor::Tensor;

pub struct IngestedDataset {
    /// Original resolution of the source images.
    pub resolution: usize,
    /// [0, 1] f64 image sets per pyramid resolution (4, 8, ..., max).
    pub levels01: BTreeMap<usize, Vec<Tensor<f64>>>,
    /// [-1, 1] f32 view of the same pyramid for training.
    pub gan: GanDataset,
}

impl IngestedDataset {
    pub fn level01(&self, resolution: usize) -> Result<&[Tensor<f64>]> {
        self.levels01
            .get(&resolution)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Dataset(format!("no pyramid level at {resolution}")))
    }

    pub fn len(&self) -> usize {
        self.levels01.values().next().map(|v| v.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loads every PNG in `dir` (sorted by filename), requires one common
/// square resolution at least `max_resolution`, and bicubic-downsamples
/// each image from the original to every power-of-two level
/// 4..=max_resolution.
pub fn ingest_dataset(dir: &Path, max_resolution: usize) -> Result<IngestedDataset> {
    if !max_resolution.is_power_of_two() || max_resolution < 4 {
        return Err(Error::Dataset(format!(
            "max resolution must be a power of two >= 4, got {max_resolution}"
        )));
    }
    let files = imageio::list_pngs(dir)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no PNG images in {dir:?}")));
    }
    let mut images = Vec::with_capacity(files.len());
    for path in &files {
        images.push((path, imageio::load_png(path)?));
    }
    let first_shape = images[0].1.shape().to_vec();
    let offenders: Vec<String> = images
        .iter()
        .filter(|(_, img)| img.shape() != first_shape)
        .map(|(path, img)| format!("{path:?} is {:?}", img.shape()))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Dataset(format!(
            "mixed resolutions (expected {first_shape:?}): {}",
            offenders.join(", ")
        )));
    }
    if first_shape[1] != first_shape[2] {
        return Err(Error::Dataset(format!(
            "images must be square, got {first_shape:?}"
        )));
    }
    let resolution = first_shape[1];
    if resolution < max_resolution {
        return Err(Error::Dataset(format!(
            "dataset resolution {resolution} below required {max_resolution}"
        )));
    }

    let kernel = ResampleKernel::new(KernelKind::Bicubic);
    let mut levels01 = BTreeMap::new();
    let mut gan = GanDataset::new();
    let mut level = 4usize;
    while level <= max_resolution {
        let mut set01 = Vec::with_capacity(images.len());
        for (_, img) in &images {
            let scaled = if level == resolution {
                img.clone()
            } else {
                resample(img, &kernel, (level, level))?
            };
            set01.push(scaled);
        }
        gan.insert_level(level, set01.iter().map(imageio::to_signed_f32).collect());
        levels01.insert(level, set01);
        level *= 2;
    }
    Ok(IngestedDataset {
        resolution,
        levels01,
        gan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_dataset, SynthKind, SyntheticDatasetSpec};

    fn write_set(dir: &Path, count: usize, resolution: usize, seed: u64) {
        synth_dataset(
            &SyntheticDatasetSpec {
                count,
                resolution,
                kind: SynthKind::SmoothBlob,
                seed,
            },
            dir,
        )
        .unwrap();
    }

    #[test]
    fn builds_all_levels_with_every_image() {
        let dir = tempfile::tempdir().unwrap();
        write_set(dir.path(), 10, 64, 3);
        let ds = ingest_dataset(dir.path(), 64).unwrap();
        assert_eq!(ds.resolution, 64);
        assert_eq!(
            ds.levels01.keys().copied().collect::<Vec<_>>(),
            vec![4, 8, 16, 32, 64]
        );
        for level in [4usize, 8, 16, 32, 64] {
            assert_eq!(ds.level01(level).unwrap().len(), 10);
            assert_eq!(ds.gan.level(level).unwrap().len(), 10);
        }
    }

    #[test]
    fn constant_white_stays_white_after_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let white = Tensor::full(&[3, 32, 32], 1.0).unwrap();
        imageio::save_png(&white, &dir.path().join("w.png")).unwrap();
        let ds = ingest_dataset(dir.path(), 16).unwrap();
        for level in [4usize, 8, 16] {
            for img in ds.gan.level(level).unwrap() {
                assert!(img.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn ingestion_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        write_set(dir.path(), 4, 32, 9);
        let a = ingest_dataset(dir.path(), 32).unwrap();
        let b = ingest_dataset(dir.path(), 32).unwrap();
        for level in [4usize, 8, 16, 32] {
            for (x, y) in a.gan.level(level).unwrap().iter().zip(b.gan.level(level).unwrap()) {
                assert_eq!(x.to_vec(), y.to_vec());
            }
        }
    }

    #[test]
    fn mixed_resolutions_error_lists_offenders() {
        let dir = tempfile::tempdir().unwrap();
        write_set(dir.path(), 2, 32, 1);
        let odd = Tensor::full(&[3, 16, 16], 0.5).unwrap();
        imageio::save_png(&odd, &dir.path().join("zz_odd.png")).unwrap();
        let err = ingest_dataset(dir.path(), 16).err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("mixed resolutions"), "{msg}");
        assert!(msg.contains("zz_odd"), "{msg}");
    }

    #[test]
    fn empty_and_undersized_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ingest_dataset(dir.path(), 16).is_err());
        write_set(dir.path(), 2, 16, 1);
        assert!(ingest_dataset(dir.path(), 64).is_err());
    }
}
