//! In-memory training data: per-resolution image sets in [-1, 1].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images grouped by resolution. Training pulls the level matching the
/// current growth stage; the super-resolution stage pairs two levels.
pub struct GanDataset {
    levels: BTreeMap<usize, Vec<Tensor<f32>>>,
}

impl GanDataset {
    pub fn new() -> GanDataset {
        GanDataset {
            levels: BTreeMap::new(),
        }
    }

    pub fn insert_level(&mut self, resolution: usize, images: Vec<Tensor<f32>>) {
        self.levels.insert(resolution, images);
    }

    pub fn level(&self, resolution: usize) -> Result<&[Tensor<f32>]> {
        self.levels
            .get(&resolution)
            .map(|v| v.as_slice())
            .ok_or_else(|| {
                Error::Dataset(format!(
                    "no images at resolution {resolution} (available: {:?})",
                    self.levels.keys().collect::<Vec<_>>()
                ))
            })
    }

    pub fn resolutions(&self) -> Vec<usize> {
        self.levels.keys().copied().collect()
    }

    /// Number of images (identical across levels).
    pub fn len(&self) -> usize {
        self.levels.values().next().map(|v| v.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for GanDataset {
    fn default() -> Self {
        Self::new()
    }
}

/// Stacks the selected images into one (B, C, H, W) constant batch.
pub fn batch_from(images: &[Tensor<f32>], indices: &[usize]) -> Result<Tensor<f32>> {
    let picked: Vec<Tensor<f32>> = indices.iter().map(|&i| images[i].clone()).collect();
    Tensor::stack(&picked)
}
