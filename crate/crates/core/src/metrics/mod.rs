//! Image-set evaluation: sliced Wasserstein distance over Laplacian-
//! pyramid patch descriptors, multi-scale SSIM, and an inception-style
//! score over a pluggable classifier.

mod inception;
mod msssim;
mod pyramid;
mod swd;

pub use inception::{inception_score, Classifier, TinyConvClassifier};
pub use msssim::{
    auto_scales, ms_ssim, ssim_components, weights_for, SsimComponents, MSSSIM_WEIGHTS,
};
pub use pyramid::{laplacian_pyramid, reconstruct, LaplacianPyramid};
pub use swd::{extract_patch_sets, swd, PatchSet};

use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::imageio;
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct MetricConfig {
    pub patch_size: usize,
    pub descriptors_per_level: usize,
    pub projections: usize,
    /// None: one band per halving down to a 16-pixel band.
    pub pyramid_levels: Option<usize>,
    /// None: as many scales as the resolution supports (at most 5).
    pub msssim_scales: Option<usize>,
    /// Cap on random real/fake pairings averaged for MS-SSIM.
    pub msssim_pair_cap: usize,
    pub is_splits: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            patch_size: 7,
            descriptors_per_level: 2048,
            projections: 256,
            pyramid_levels: None,
            msssim_scales: None,
            msssim_pair_cap: 64,
            is_splits: 10,
            seed: 0,
        }
    }
}

impl MetricConfig {
    pub fn levels_for(&self, resolution: usize) -> usize {
        self.pyramid_levels.unwrap_or_else(|| {
            let mut levels = 0usize;
            let mut r = resolution;
            while r >= 16 && levels < 4 {
                levels += 1;
                r /= 2;
            }
            levels.max(1)
        })
    }

    pub fn params_string(&self) -> String {
        format!(
            "patch={} desc/level={} projections={} pairs<={} splits={} seed={}",
            self.patch_size,
            self.descriptors_per_level,
            self.projections,
            self.msssim_pair_cap,
            self.is_splits,
            self.seed
        )
    }
}

/// The Table-2-shaped result triple with its provenance.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub swd: f64,
    /// (band resolution, swd) per pyramid level.
    pub swd_per_level: Vec<(usize, f64)>,
    pub ms_ssim: f64,
    pub inception_mean: f64,
    pub inception_std: f64,
    pub real_id: String,
    pub fake_id: String,
    pub params: String,
    /// Caveat attached to every report: the classifier is the toolkit's
    /// own small convnet, so scores are internally comparable only.
    pub classifier_note: &'static str,
}

pub const CLASSIFIER_NOTE: &str =
    "inception score uses the built-in synthetic-set classifier; values are comparable \
     across runs of this toolkit only, not to scores from large pretrained classifiers";

impl MetricReport {
    pub fn swd_x1000(&self) -> f64 {
        self.swd * 1000.0
    }
}

fn common_resolution(images: &[Tensor<f64>], what: &str) -> Result<usize> {
    let first = images
        .first()
        .ok_or_else(|| Error::Metric(format!("{what}: empty image set")))?;
    let s = first.shape().to_vec();
    for img in images {
        if img.shape() != s {
            return Err(Error::Metric(format!(
                "{what}: mixed image shapes {:?} vs {s:?}",
                img.shape()
            )));
        }
    }
    if s.len() != 3 || s[1] != s[2] {
        return Err(Error::Metric(format!("{what}: expected square (C, R, R) images, got {s:?}")));
    }
    Ok(s[1])
}

/// SWD between two image sets: patches per pyramid level, one distance
/// per level, averaged.
pub fn swd_between_sets(
    real: &[Tensor<f64>],
    fake: &[Tensor<f64>],
    config: &MetricConfig,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let res = common_resolution(real, "real")?;
    let fres = common_resolution(fake, "fake")?;
    if res != fres {
        return Err(Error::Metric(format!(
            "resolution mismatch between sets: real {res}, fake {fres}"
        )));
    }
    let levels = config.levels_for(res);
    // identical extraction streams for both sets: identical inputs then
    // yield identical descriptors, making self-comparison exactly zero
    let mut real_rng = stream(config.seed, Stream::Metrics);
    let mut fake_rng = stream(config.seed, Stream::Metrics);
    let real_sets = extract_patch_sets(
        real,
        levels,
        config.patch_size,
        config.descriptors_per_level,
        &mut real_rng,
    )?;
    let fake_sets = extract_patch_sets(
        fake,
        levels,
        config.patch_size,
        config.descriptors_per_level,
        &mut fake_rng,
    )?;
    let mut per_level = Vec::with_capacity(levels);
    let mut total = 0.0;
    for (level, (a, b)) in real_sets.iter().zip(&fake_sets).enumerate() {
        let d = swd(a, b, config.projections, config.seed ^ (level as u64 + 1))?;
        per_level.push((res >> level, d));
        total += d;
    }
    Ok((total / levels as f64, per_level))
}

/// MS-SSIM averaged over seeded random real/fake pairings.
pub fn msssim_between_sets(
    real: &[Tensor<f64>],
    fake: &[Tensor<f64>],
    config: &MetricConfig,
) -> Result<f64> {
    let res = common_resolution(real, "real")?;
    if common_resolution(fake, "fake")? != res {
        return Err(Error::Metric("resolution mismatch between sets".into()));
    }
    let scales = config
        .msssim_scales
        .unwrap_or_else(|| auto_scales(res, res));
    let weights = weights_for(scales);
    let mut rng = stream(config.seed, Stream::Metrics);
    let pairs = fake.len().min(config.msssim_pair_cap);
    let mut total = 0.0;
    for i in 0..pairs {
        let j = rng.random_range(0..real.len());
        total += ms_ssim(&fake[i], &real[j], &weights)?;
    }
    Ok(total / pairs as f64)
}

/// Full three-metric evaluation of fake images against real ones.
pub fn evaluate_sets(
    real: &[Tensor<f64>],
    fake: &[Tensor<f64>],
    classifier: &dyn Classifier,
    config: &MetricConfig,
    real_id: &str,
    fake_id: &str,
) -> Result<MetricReport> {
    let (swd_avg, swd_per_level) = swd_between_sets(real, fake, config)?;
    let ms = msssim_between_sets(real, fake, config)?;
    let probs = classifier.class_probs(fake)?;
    let rows = probs.shape()[0];
    let splits = config.is_splits.clamp(1, rows);
    let usable = rows - rows % splits;
    let probs = if usable == rows {
        probs
    } else {
        probs.narrow(0, 0, usable)?
    };
    let (is_mean, is_std) = inception_score(&probs, splits)?;
    Ok(MetricReport {
        swd: swd_avg,
        swd_per_level,
        ms_ssim: ms,
        inception_mean: is_mean,
        inception_std: is_std,
        real_id: real_id.to_string(),
        fake_id: fake_id.to_string(),
        params: config.params_string(),
        classifier_note: CLASSIFIER_NOTE,
    })
}

/// Directory front end: loads both PNG sets, requires matching
/// resolutions, and evaluates with the default classifier.
pub fn evaluate_dirs(
    real_dir: &Path,
    fake_dir: &Path,
    config: &MetricConfig,
) -> Result<MetricReport> {
    let real = load_dir(real_dir)?;
    let fake = load_dir(fake_dir)?;
    let classifier = TinyConvClassifier::train_default(config.seed)?;
    evaluate_sets(
        &real,
        &fake,
        &classifier,
        config,
        &real_dir.display().to_string(),
        &fake_dir.display().to_string(),
    )
}

fn load_dir(dir: &Path) -> Result<Vec<Tensor<f64>>> {
    let files = imageio::list_pngs(dir)?;
    if files.is_empty() {
        return Err(Error::Metric(format!("no PNG images in {dir:?}")));
    }
    files.iter().map(|p| imageio::load_png(p)).collect()
}
