//! Sliced Wasserstein distance over patch descriptors.
//!
//! Project both descriptor sets onto random unit directions; each 1-D
//! pair of marginals has the closed-form optimal-transport cost
//! mean|sorted_a - sorted_b|, and the distance is the mean over
//! projections.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::pyramid::laplacian_pyramid;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};
use crate::tensor::Tensor;

/// Flattened patch descriptors taken from one pyramid level.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub descriptors: Vec<Vec<f64>>,
    pub level: usize,
    /// Whether per-channel mean/std normalization was applied.
    pub normalized: bool,
}

impl PatchSet {
    pub fn descriptor_len(&self) -> usize {
        self.descriptors.first().map(|d| d.len()).unwrap_or(0)
    }
}

/// Mean sliced 1-D Wasserstein distance over `n_projections` seeded
/// random directions. When the sets differ in size the larger one is
/// subsampled (seeded) to match.
pub fn swd(a: &PatchSet, b: &PatchSet, n_projections: usize, seed: u64) -> Result<f64> {
    if a.descriptors.is_empty() || b.descriptors.is_empty() {
        return Err(Error::Metric("swd of an empty patch set".into()));
    }
    if n_projections == 0 {
        return Err(Error::Metric("swd needs at least one projection".into()));
    }
    let dim = a.descriptors[0].len();
    if b.descriptors[0].len() != dim {
        return Err(Error::Metric(format!(
            "descriptor length mismatch: {} vs {}",
            dim,
            b.descriptors[0].len()
        )));
    }
    let mut rng = seeded(seed);
    let count = a.descriptors.len().min(b.descriptors.len());
    let a_sel = subsample(&a.descriptors, count, &mut rng);
    let b_sel = subsample(&b.descriptors, count, &mut rng);

    let mut total = 0.0;
    let mut pa = vec![0.0f64; count];
    let mut pb = vec![0.0f64; count];
    for _ in 0..n_projections {
        let dir = random_unit(dim, &mut rng);
        for (dst, d) in pa.iter_mut().zip(&a_sel) {
            *dst = dot(d, &dir);
        }
        for (dst, d) in pb.iter_mut().zip(&b_sel) {
            *dst = dot(d, &dir);
        }
        pa.sort_by(|x, y| x.total_cmp(y));
        pb.sort_by(|x, y| x.total_cmp(y));
        let cost: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum();
        total += cost / count as f64;
    }
    Ok(total / n_projections as f64)
}

fn subsample<'a>(set: &'a [Vec<f64>], count: usize, rng: &mut Rng) -> Vec<&'a Vec<f64>> {
    if set.len() == count {
        return set.iter().collect();
    }
    let mut indices: Vec<usize> = (0..set.len()).collect();
    indices.shuffle(rng);
    indices.truncate(count);
    indices.sort_unstable();
    indices.into_iter().map(|i| &set[i]).collect()
}

fn random_unit(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Extracts up to `cap` normalized patch descriptors per pyramid level
/// from a set of images. Patch positions are seeded-random per image;
/// every image contributes evenly.
pub fn extract_patch_sets(
    images: &[Tensor<f64>],
    levels: usize,
    patch_size: usize,
    cap: usize,
    rng: &mut Rng,
) -> Result<Vec<PatchSet>> {
    if images.is_empty() {
        return Err(Error::Metric("no images to extract patches from".into()));
    }
    let per_image = cap.div_ceil(images.len()).max(1);
    let mut sets: Vec<PatchSet> = (0..levels)
        .map(|level| PatchSet {
            descriptors: Vec::new(),
            level,
            normalized: true,
        })
        .collect();
    for image in images {
        let pyramid = laplacian_pyramid(image, levels)?;
        for (level, band) in pyramid.bands.iter().enumerate() {
            let s = band.shape();
            let (c, h, w) = (s[0], s[1], s[2]);
            if h < patch_size || w < patch_size {
                return Err(Error::Metric(format!(
                    "band at level {level} ({h}x{w}) smaller than patch size {patch_size}"
                )));
            }
            let data = band.data();
            for _ in 0..per_image {
                if sets[level].descriptors.len() >= cap {
                    break;
                }
                let y0 = rng.random_range(0..=h - patch_size);
                let x0 = rng.random_range(0..=w - patch_size);
                let mut desc = Vec::with_capacity(c * patch_size * patch_size);
                for ch in 0..c {
                    let plane = &data[ch * h * w..(ch + 1) * h * w];
                    let start = desc.len();
                    for y in y0..y0 + patch_size {
                        desc.extend_from_slice(&plane[y * w + x0..y * w + x0 + patch_size]);
                    }
                    normalize_channel(&mut desc[start..]);
                }
                sets[level].descriptors.push(desc);
            }
        }
    }
    Ok(sets)
}

/// In-place per-channel standardization to mean 0, std 1 (guarded for
/// flat patches).
fn normalize_channel(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for v in values {
        *v = (*v - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_of(rows: &[&[f64]]) -> PatchSet {
        PatchSet {
            descriptors: rows.iter().map(|r| r.to_vec()).collect(),
            level: 0,
            normalized: false,
        }
    }

    #[test]
    fn identical_sets_have_distance_zero_exactly() {
        let a = set_of(&[&[1.0, 2.0], &[0.5, -3.0], &[2.0, 2.0]]);
        assert_eq!(swd(&a, &a, 16, 7).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_offset_sets() {
        // a = {0, 0}, b = {1, 1}: any unit direction in 1-D is +-1, the
        // sorted pairs differ by exactly 1 each.
        let a = set_of(&[&[0.0], &[0.0]]);
        let b = set_of(&[&[1.0], &[1.0]]);
        let d = swd(&a, &b, 8, 3).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_nonnegative() {
        let mut rng = seeded(5);
        for _ in 0..5 {
            let a = PatchSet {
                descriptors: (0..7)
                    .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
                    .collect(),
                level: 0,
                normalized: false,
            };
            let b = PatchSet {
                descriptors: (0..9)
                    .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
                    .collect(),
                level: 0,
                normalized: false,
            };
            let ab = swd(&a, &b, 32, 11).unwrap();
            let ba = swd(&b, &a, 32, 11).unwrap();
            assert!(ab >= 0.0);
            assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_sets_are_rejected() {
        let a = set_of(&[&[1.0]]);
        let empty = PatchSet {
            descriptors: vec![],
            level: 0,
            normalized: false,
        };
        assert!(swd(&a, &empty, 4, 1).is_err());
        assert!(swd(&empty, &a, 4, 1).is_err());
    }

    #[test]
    fn extraction_respects_cap_and_length() {
        let mut rng = seeded(2);
        let images: Vec<Tensor<f64>> = (0..3)
            .map(|_| Tensor::<f64>::rand_uniform(&[3, 16, 16], &mut rng).unwrap())
            .collect();
        let sets = extract_patch_sets(&images, 1, 7, 10, &mut rng).unwrap();
        assert_eq!(sets.len(), 1);
        assert!(sets[0].descriptors.len() <= 10);
        assert!(sets[0].descriptors.len() >= 9); // 3 imgs x ceil(10/3)=4, capped
        assert!(sets[0].descriptors.iter().all(|d| d.len() == 3 * 49));
        assert!(sets[0].normalized);
    }
}
